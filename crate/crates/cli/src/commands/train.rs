//! train: fit a model on the base categories and leave a checkpoint plus
//! logs in the run directory.

use std::path::Path;

use serde::Serialize;

use super::{load_manifest, parse_variant, CmdResult, ModelCard, CHECKPOINT_FILE, MODEL_CARD_FILE};
use crate::config::ResolvedConfig;
use crate::rundir::RunDir;
use voxelprior::eval::audit_training_access;
use voxelprior::model::{self, Variant};
use voxelprior::training::{train_with_progress, PriorMode, TrainConfig};
use voxelprior::Error;

#[derive(Serialize)]
struct Summary {
    best_val_iou: f64,
    epochs_run: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    resolved: &ResolvedConfig,
    run_dir: &RunDir,
    data: &Path,
    variant: Option<&str>,
    iters: Option<usize>,
    prior: Option<&str>,
    k: Option<usize>,
    epochs: Option<usize>,
) -> CmdResult {
    let manifest = load_manifest(data)?;
    let arch = resolved.preset.arch();
    if arch.voxel_dim != manifest.voxel_dim || arch.image_size != manifest.image_size {
        return Err(Error::InvalidConfig(format!(
            "preset expects {}^3 voxels and {}x{} images, dataset has {}^3 and {}x{}",
            arch.voxel_dim,
            arch.image_size,
            arch.image_size,
            manifest.voxel_dim,
            manifest.image_size,
            manifest.image_size
        ))
        .into());
    }

    let variant = parse_variant(variant.unwrap_or(&resolved.train.variant))?;
    let prior_mode = match prior.unwrap_or(&resolved.train.prior) {
        "full" => PriorMode::Full,
        "kshot" => PriorMode::Kshot(k.unwrap_or(resolved.train.k)),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown prior mode `{}` (expected kshot or full)",
                other
            ))
            .into())
        }
    };
    let config = TrainConfig {
        batch_size: resolved.train.batch_size,
        iters_per_batch: iters.unwrap_or(resolved.train.iters),
        prior_mode,
        max_epochs: epochs.unwrap_or(resolved.train.max_epochs),
        patience: resolved.train.patience,
        views_per_epoch: resolved.train.views_per_epoch,
        iou_threshold: resolved.train.iou_threshold,
        seed: resolved.seed,
    };

    let init = model::init_model(&arch, variant, resolved.seed)?;
    let outcome = train_with_progress(init, &manifest, &config, |e| {
        eprintln!("epoch {:>3}: validation mean IoU {:.4}", e.epoch, e.val_mean_iou);
    })?;
    audit_training_access(&outcome.log, &manifest)?;

    model::save_checkpoint(&outcome.params, &run_dir.join(CHECKPOINT_FILE))?;
    outcome.log.write_csv(&run_dir.join("train.csv"))?;

    let name = run_dir
        .path()
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string());
    let card = ModelCard {
        name,
        variant: match variant {
            Variant::PriorRefinement => "prior".into(),
            Variant::ImageOnly => "image_only".into(),
        },
        iterations: config.iters_per_batch,
    };
    run_dir.write_text(
        MODEL_CARD_FILE,
        &serde_json::to_string_pretty(&card).expect("card serializes"),
    )?;
    let summary = Summary {
        best_val_iou: outcome.best_val_iou,
        epochs_run: outcome.epochs_run,
    };
    run_dir.write_text(
        "summary.json",
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;

    println!(
        "trained {} epochs, best validation mean IoU {:.4}",
        outcome.epochs_run, outcome.best_val_iou
    );
    Ok(vec![
        CHECKPOINT_FILE.to_string(),
        "train.csv".to_string(),
        MODEL_CARD_FILE.to_string(),
        "summary.json".to_string(),
    ])
}

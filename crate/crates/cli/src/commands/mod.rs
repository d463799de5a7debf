//! Subcommand implementations. Each returns the list of artifact files it
//! wrote into the run directory.

pub mod analyze;
pub mod eval;
pub mod gen_data;
pub mod gradcheck;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Failure;
use voxelprior::data::{DatasetManifest, MANIFEST_FILE};
use voxelprior::eval::EvalModel;
use voxelprior::model::{self, Variant};
use voxelprior::Error;

/// Accepts either a gen-data run directory or the dataset root itself.
pub fn load_manifest(data: &Path) -> Result<DatasetManifest, Failure> {
    for candidate in [data.join(MANIFEST_FILE), data.join("dataset").join(MANIFEST_FILE)] {
        if candidate.is_file() {
            return Ok(DatasetManifest::load(&candidate)?);
        }
    }
    Err(Error::MissingInput(format!(
        "dataset manifest at {}",
        data.join(MANIFEST_FILE).display()
    ))
    .into())
}

/// Sidecar written by `train` so eval commands know how a checkpoint was
/// produced without re-reading the training config.
#[derive(Serialize, Deserialize)]
pub struct ModelCard {
    pub name: String,
    pub variant: String,
    pub iterations: usize,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const MODEL_CARD_FILE: &str = "model.json";

pub fn load_model(dir: &Path) -> Result<EvalModel, Failure> {
    let ckpt = dir.join(CHECKPOINT_FILE);
    if !ckpt.is_file() {
        return Err(Error::MissingInput(format!("trained checkpoint at {}", ckpt.display())).into());
    }
    let card_path = dir.join(MODEL_CARD_FILE);
    let card: ModelCard = match std::fs::read_to_string(&card_path) {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| Failure::from(Error::format(&card_path, e.to_string())))?,
        Err(_) => {
            return Err(Error::MissingInput(format!("model card at {}", card_path.display())).into())
        }
    };
    let params = model::load_checkpoint(&ckpt)?;
    Ok(EvalModel {
        name: card.name,
        params,
        iterations: card.iterations.max(1),
    })
}

pub fn parse_variant(s: &str) -> Result<Variant, Failure> {
    match s {
        "prior" => Ok(Variant::PriorRefinement),
        "image-only" | "image_only" => Ok(Variant::ImageOnly),
        other => Err(Error::InvalidConfig(format!(
            "unknown variant `{}` (expected prior or image-only)",
            other
        ))
        .into()),
    }
}

pub type Produced = Vec<String>;
pub type CmdResult = Result<Produced, Failure>;

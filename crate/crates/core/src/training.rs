//! Adadelta optimizer, the iterative-refinement training loop, early
//! stopping on base-class validation IoU, and the SGD finetuning baseline.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_ppm, load_voxel, CategoryRole, DatasetManifest, Split, VoxelGrid};
use crate::error::{Error, Result};
use crate::eval::iou;
use crate::model::{self, ModelParams, Variant};
use crate::ops;
use crate::prior::average_prior;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    Full,
    Kshot(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Refinement iterations per batch (Algorithm-style: one train op per
    /// iteration, outputs become the next iteration's input shapes).
    pub iters_per_batch: usize,
    pub prior_mode: PriorMode,
    pub max_epochs: usize,
    pub patience: usize,
    /// Number of random views drawn per train instance per epoch.
    pub views_per_epoch: usize,
    /// Binarization threshold for the validation IoU metric.
    pub iou_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            iters_per_batch: 1,
            prior_mode: PriorMode::Kshot(1),
            max_epochs: 30,
            patience: 5,
            views_per_epoch: 4,
            iou_threshold: 0.4,
            seed: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Adadelta

/// Per-parameter running averages of squared gradients and squared updates.
#[derive(Debug, Clone)]
pub struct AdadeltaState {
    pub rho: f64,
    pub epsilon: f64,
    avg_sq_grad: Vec<Tensor>,
    avg_sq_update: Vec<Tensor>,
}

impl AdadeltaState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| t.zeros_like())
            .collect();
        Self {
            rho: 0.95,
            epsilon: 1e-6,
            avg_sq_grad: zeros.clone(),
            avg_sq_update: zeros,
        }
    }

    pub fn accumulators(&self) -> (&[Tensor], &[Tensor]) {
        (&self.avg_sq_grad, &self.avg_sq_update)
    }
}

/// One Adadelta update:
///   E[g^2] <- rho E[g^2] + (1-rho) g^2
///   delta   = -sqrt(E[d^2]+eps)/sqrt(E[g^2]+eps) * g
///   E[d^2] <- rho E[d^2] + (1-rho) delta^2
///   p      <- p + delta
pub fn adadelta_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdadeltaState,
) -> Result<()> {
    let grad_tensors = grads.named_tensors();
    for (name, g) in &grad_tensors {
        if !g.all_finite() {
            return Err(Error::NonFinite {
                context: "adadelta_step".into(),
                detail: format!("gradient for tensor {}", name),
            });
        }
    }
    let rho = state.rho;
    let eps = state.epsilon;
    for (((p, (_, g)), eg), ed) in params
        .tensors_mut()
        .into_iter()
        .zip(&grad_tensors)
        .zip(state.avg_sq_grad.iter_mut())
        .zip(state.avg_sq_update.iter_mut())
    {
        let pd = p.data_mut();
        let gd = g.data();
        let egd = eg.data_mut();
        let edd = ed.data_mut();
        for i in 0..pd.len() {
            let gi = gd[i];
            egd[i] = rho * egd[i] + (1.0 - rho) * gi * gi;
            let delta = -((edd[i] + eps).sqrt() / (egd[i] + eps).sqrt()) * gi;
            edd[i] = rho * edd[i] + (1.0 - rho) * delta * delta;
            pd[i] += delta;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// in-memory dataset

/// 8-bit RGB image kept compact; expanded to an f64 tensor on demand.
#[derive(Debug, Clone)]
struct CompactImage {
    size: usize,
    rgb: Vec<u8>,
}

impl CompactImage {
    fn from_tensor(t: &Tensor) -> Self {
        let size = t.shape()[1];
        let plane = size * size;
        let data = t.data();
        let mut rgb = Vec::with_capacity(3 * plane);
        for c in 0..3 {
            for i in 0..plane {
                rgb.push((data[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        Self { size, rgb }
    }

    fn to_tensor(&self) -> Tensor {
        let data = self.rgb.iter().map(|&b| b as f64 / 255.0).collect();
        Tensor::new(vec![3, self.size, self.size], data).expect("image buffer matches shape")
    }
}

#[derive(Debug, Clone)]
struct LoadedInstance {
    grid: VoxelGrid,
    views: Vec<CompactImage>,
}

#[derive(Debug, Clone)]
struct LoadedCategory {
    name: String,
    train: Vec<LoadedInstance>,
    val: Vec<LoadedInstance>,
}

struct LoadedDataset {
    categories: Vec<LoadedCategory>,
    /// Every category name whose files were read; audited against the
    /// novel-category exclusion invariant.
    accessed_categories: Vec<String>,
}

fn load_instance(manifest: &DatasetManifest, inst: &crate::data::InstanceEntry) -> Result<LoadedInstance> {
    let grid = load_voxel(&manifest.resolve(&inst.voxel_path))?;
    let views = inst
        .views
        .iter()
        .map(|v| Ok(CompactImage::from_tensor(&load_ppm(&manifest.resolve(&v.path))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedInstance { grid, views })
}

fn load_base_dataset(manifest: &DatasetManifest) -> Result<LoadedDataset> {
    let mut categories = Vec::new();
    let mut accessed = Vec::new();
    for cat in manifest.categories_with_role(CategoryRole::Base) {
        accessed.push(cat.name.clone());
        let train: Result<Vec<_>> = manifest
            .instances_in_split(cat, Split::Train)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|inst| load_instance(manifest, inst))
            .collect();
        let val: Result<Vec<_>> = manifest
            .instances_in_split(cat, Split::Val)
            .map(|inst| load_instance(manifest, inst))
            .collect();
        categories.push(LoadedCategory {
            name: cat.name.clone(),
            train: train?,
            val: val?,
        });
    }
    if categories.iter().any(|c| c.train.is_empty()) || categories.is_empty() {
        return Err(Error::MissingInput(
            "base training split is empty".to_string(),
        ));
    }
    Ok(LoadedDataset {
        categories,
        accessed_categories: accessed,
    })
}

// ---------------------------------------------------------------------------
// training loop

#[derive(Debug, Clone, Serialize)]
pub struct BatchRecord {
    pub epoch: usize,
    pub batch: usize,
    pub iteration_index: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub val_mean_iou: f64,
    pub per_category: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainLog {
    pub batches: Vec<BatchRecord>,
    pub epochs: Vec<EpochRecord>,
    pub accessed_categories: Vec<String>,
}

impl TrainLog {
    /// One CSV with batch rows; validation columns are filled on the
    /// per-epoch summary rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let categories: Vec<&str> = self
            .epochs
            .first()
            .map(|e| e.per_category.iter().map(|(n, _)| n.as_str()).collect())
            .unwrap_or_default();
        let mut out = String::from("epoch,batch,iteration_index,loss,val_mean_iou");
        for c in &categories {
            out.push_str(&format!(",val_iou_{}", c));
        }
        out.push('\n');
        for b in &self.batches {
            out.push_str(&format!(
                "{},{},{},{:.6},",
                b.epoch, b.batch, b.iteration_index, b.loss
            ));
            out.push_str(&",".repeat(categories.len()));
            out.push('\n');
        }
        for e in &self.epochs {
            out.push_str(&format!("{},,,,{:.6}", e.epoch, e.val_mean_iou));
            for (_, v) in &e.per_category {
                out.push_str(&format!(",{:.6}", v));
            }
            out.push('\n');
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub struct TrainOutcome {
    /// Weights at the best validation epoch.
    pub params: ModelParams,
    pub log: TrainLog,
    pub best_val_iou: f64,
    pub epochs_run: usize,
}

struct Sample {
    image: Tensor,
    target: Tensor,
    prior: Option<VoxelGrid>,
}

/// Mean loss over the batch plus averaged parameter gradients and the
/// detached predictions. Per-sample work runs in parallel; the reduction
/// order is fixed so results do not depend on thread count.
fn batch_forward_backward(
    params: &ModelParams,
    samples: &[Sample],
) -> Result<(f64, ModelParams, Vec<VoxelGrid>)> {
    let per_sample: Result<Vec<(f64, ModelParams, VoxelGrid)>> = samples
        .par_iter()
        .map(|s| {
            let (pred, cache) = model::forward_cached(params, &s.image, s.prior.as_ref())?;
            let loss = ops::bce_loss(&pred, &s.target)?;
            let grad_pred = ops::bce_loss_backward(&pred, &s.target)?;
            let grads = model::backward(params, &cache, &grad_pred)?;
            Ok((loss, grads, VoxelGrid::from_tensor(&pred)?))
        })
        .collect();
    let per_sample = per_sample?;

    let scale = 1.0 / samples.len() as f64;
    let mut total_loss = 0.0;
    let mut acc = params.zeros_like();
    let mut outputs = Vec::with_capacity(per_sample.len());
    for (loss, grads, pred) in per_sample {
        total_loss += loss;
        acc.add_scaled(&grads, scale);
        outputs.push(pred);
    }
    Ok((total_loss * scale, acc, outputs))
}

fn validate(
    params: &ModelParams,
    data: &LoadedDataset,
    val_priors: &[Option<VoxelGrid>],
    iters: usize,
    threshold: f64,
) -> Result<(f64, Vec<(String, f64)>)> {
    let mut per_category = Vec::new();
    for (ci, cat) in data.categories.iter().enumerate() {
        let ious: Result<Vec<f64>> = cat
            .val
            .par_iter()
            .map(|inst| {
                let image = inst.views[0].to_tensor();
                let pred = match &val_priors[ci] {
                    Some(prior) => {
                        let mut current = prior.clone();
                        for _ in 0..iters {
                            current = model::forward(params, &image, &current)?;
                        }
                        current
                    }
                    None => model::forward_image_only(params, &image)?,
                };
                iou(&pred, &inst.grid, threshold)
            })
            .collect();
        let ious = ious?;
        let mean = ious.iter().sum::<f64>() / ious.len().max(1) as f64;
        per_category.push((cat.name.clone(), mean));
    }
    let mean = per_category.iter().map(|(_, v)| v).sum::<f64>() / per_category.len() as f64;
    Ok((mean, per_category))
}

/// Train on the base categories with iterative refinement and early
/// stopping. Returns the checkpoint from the best validation epoch.
pub fn train(
    params: ModelParams,
    manifest: &DatasetManifest,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_progress(params, manifest, config, |_| {})
}

/// `train` with a per-epoch observer, called after each validation pass.
/// The observer sees the log record only; it cannot influence the run.
pub fn train_with_progress(
    mut params: ModelParams,
    manifest: &DatasetManifest,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if config.batch_size == 0 || config.iters_per_batch == 0 {
        return Err(Error::InvalidConfig(
            "batch_size and iters_per_batch must be >= 1".into(),
        ));
    }
    let uses_prior = params.variant == Variant::PriorRefinement;
    let data = load_base_dataset(manifest)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // fixed full priors per category (used by Full mode and by validation)
    let full_priors: Vec<VoxelGrid> = data
        .categories
        .iter()
        .map(|c| average_prior(&c.train.iter().map(|i| i.grid.clone()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;

    // validation priors are fixed across epochs so the metric is comparable
    let val_priors: Vec<Option<VoxelGrid>> = if uses_prior {
        match config.prior_mode {
            PriorMode::Full => full_priors.iter().cloned().map(Some).collect(),
            PriorMode::Kshot(k) => data
                .categories
                .iter()
                .enumerate()
                .map(|(ci, cat)| {
                    let mut prng =
                        ChaCha8Rng::seed_from_u64(config.seed ^ (0xa117 ^ ci as u64).rotate_left(17));
                    let mut idx: Vec<usize> = (0..cat.train.len()).collect();
                    idx.shuffle(&mut prng);
                    let chosen: Vec<VoxelGrid> = idx
                        .iter()
                        .take(k.min(cat.train.len()))
                        .map(|&i| cat.train[i].grid.clone())
                        .collect();
                    average_prior(&chosen).map(Some)
                })
                .collect::<Result<Vec<_>>>()?,
        }
    } else {
        vec![None; data.categories.len()]
    };

    let mut log = TrainLog {
        batches: Vec::new(),
        epochs: Vec::new(),
        accessed_categories: data.accessed_categories.clone(),
    };
    let mut best_val = f64::NEG_INFINITY;
    let mut best_params = params.clone();
    let mut epochs_since_best = 0usize;
    let mut state = AdadeltaState::new(&params);
    let mut epochs_run = 0;

    for epoch in 0..config.max_epochs {
        epochs_run = epoch + 1;
        // one entry per (category, instance, drawn view)
        let mut schedule: Vec<(usize, usize, usize)> = Vec::new();
        for _ in 0..config.views_per_epoch {
            for (ci, cat) in data.categories.iter().enumerate() {
                for ii in 0..cat.train.len() {
                    let view = rng.gen_range(0..cat.train[ii].views.len());
                    schedule.push((ci, ii, view));
                }
            }
        }
        schedule.shuffle(&mut rng);

        for (batch_idx, chunk) in schedule.chunks(config.batch_size).enumerate() {
            let mut samples: Vec<Sample> = chunk
                .iter()
                .map(|&(ci, ii, view)| {
                    let inst = &data.categories[ci].train[ii];
                    let prior = if !uses_prior {
                        None
                    } else {
                        Some(match config.prior_mode {
                            PriorMode::Full => full_priors[ci].clone(),
                            PriorMode::Kshot(k) => {
                                // fresh random prior per image-target pair
                                let pool = &data.categories[ci].train;
                                let mut idx: Vec<usize> = (0..pool.len()).collect();
                                idx.shuffle(&mut rng);
                                let chosen: Vec<VoxelGrid> = idx
                                    .iter()
                                    .take(k.min(pool.len()))
                                    .map(|&i| pool[i].grid.clone())
                                    .collect();
                                average_prior(&chosen)?
                            }
                        })
                    };
                    Ok(Sample {
                        image: inst.views[view].to_tensor(),
                        target: inst.grid.to_tensor(),
                        prior,
                    })
                })
                .collect::<Result<Vec<_>>>()?;

            for iter_i in 0..config.iters_per_batch {
                let (loss, grads, outputs) = batch_forward_backward(&params, &samples)?;
                if !loss.is_finite() {
                    return Err(Error::TrainingAborted {
                        epoch,
                        batch: batch_idx,
                        detail: format!("loss became {} at iteration {}", loss, iter_i),
                    });
                }
                adadelta_step(&mut params, &grads, &mut state).map_err(|e| {
                    Error::TrainingAborted {
                        epoch,
                        batch: batch_idx,
                        detail: e.to_string(),
                    }
                })?;
                log.batches.push(BatchRecord {
                    epoch,
                    batch: batch_idx,
                    iteration_index: iter_i,
                    loss,
                });
                if uses_prior && iter_i + 1 < config.iters_per_batch {
                    // outputs become the next iteration's input shapes (detached)
                    for (s, out) in samples.iter_mut().zip(outputs) {
                        s.prior = Some(out);
                    }
                }
            }
        }

        let (val_mean, per_category) = validate(
            &params,
            &data,
            &val_priors,
            config.iters_per_batch,
            config.iou_threshold,
        )?;
        log.epochs.push(EpochRecord {
            epoch,
            val_mean_iou: val_mean,
            per_category,
        });
        on_epoch(log.epochs.last().unwrap());
        if val_mean > best_val {
            best_val = val_mean;
            best_params = params.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= config.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        log,
        best_val_iou: best_val,
        epochs_run,
    })
}

// ---------------------------------------------------------------------------
// finetuning baseline

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub k: usize,
    pub renders_per_shape: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl FinetuneConfig {
    pub fn new(k: usize, renders_per_shape: usize, seed: u64) -> Self {
        Self {
            k,
            renders_per_shape,
            learning_rate: 0.005,
            steps: 200,
            batch_size: 32,
            seed,
        }
    }
}

/// Plain SGD finetuning of the image-only baseline on the novel categories'
/// few-shot pool (k shapes per category, `renders_per_shape` views each).
/// Returns the finetuned weights and the per-step losses.
pub fn finetune_baseline(
    mut params: ModelParams,
    manifest: &DatasetManifest,
    config: &FinetuneConfig,
) -> Result<(ModelParams, Vec<f64>)> {
    if params.variant != Variant::ImageOnly {
        return Err(Error::InvalidArgument {
            op: "finetune_baseline",
            detail: "finetuning baseline applies to the image_only variant".into(),
        });
    }
    if config.k == 0 {
        return Err(Error::InvalidArgument {
            op: "finetune_baseline",
            detail: "k must be >= 1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut pool: Vec<(Tensor, Tensor)> = Vec::new();
    for cat in manifest.categories_with_role(CategoryRole::Novel) {
        let train: Vec<_> = manifest.instances_in_split(cat, Split::Train).collect();
        if train.len() < config.k {
            return Err(Error::MissingInput(format!(
                "category {} has only {} few-shot shapes, need {}",
                cat.name,
                train.len(),
                config.k
            )));
        }
        let mut idx: Vec<usize> = (0..train.len()).collect();
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(config.k) {
            let inst = train[i];
            let target = load_voxel(&manifest.resolve(&inst.voxel_path))?.to_tensor();
            let n_views = config.renders_per_shape.min(inst.views.len());
            for v in 0..n_views {
                let image = load_ppm(&manifest.resolve(&inst.views[v].path))?;
                pool.push((image, target.clone()));
            }
        }
    }
    if pool.is_empty() {
        return Err(Error::MissingInput("empty finetuning pool".into()));
    }

    let mut losses = Vec::with_capacity(config.steps);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut cursor = order.len(); // trigger reshuffle on first step
    for _ in 0..config.steps {
        let batch_n = config.batch_size.min(pool.len());
        let mut batch = Vec::with_capacity(batch_n);
        for _ in 0..batch_n {
            if cursor >= order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let samples: Vec<Sample> = batch
            .iter()
            .map(|&i| Sample {
                image: pool[i].0.clone(),
                target: pool[i].1.clone(),
                prior: None,
            })
            .collect();
        let (loss, grads, _) = batch_forward_backward(&params, &samples)?;
        params.add_scaled(&grads, -config.learning_rate);
        losses.push(loss);
    }
    Ok((params, losses))
}

//! Metrics and experiment harness: voxel IoU, the few-shot transfer grid,
//! multi-view iterative inference, prior ablations, and distribution
//! analytics over per-instance scores.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{
    fnv1a64, load_image_tensor, load_voxel, CategoryEntry, CategoryRole, DatasetManifest,
    InstanceEntry, Split, VoxelGrid,
};
use crate::error::{Error, Result};
use crate::model::{self, ModelParams, Variant};
use crate::prior::average_prior;
use crate::tensor::Tensor;
use crate::training::TrainLog;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.4;

/// Intersection-over-union of binarized occupancies. The prediction is
/// thresholded; the target must already be binary. 0/0 (both empty) is 1.
pub fn iou(pred: &VoxelGrid, target: &VoxelGrid, threshold: f64) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch {
            op: "iou",
            detail: format!("extent {} vs {}", pred.dim(), target.dim()),
        });
    }
    if !target.is_binary() {
        return Err(Error::InvalidArgument {
            op: "iou",
            detail: "target grid must be binary".into(),
        });
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &t) in pred.values().iter().zip(target.values()) {
        let p = p >= threshold;
        let t = t > 0.5;
        if p && t {
            inter += 1;
        }
        if p || t {
            union += 1;
        }
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub model: String,
    pub condition: String,
    pub category: String,
    pub instance: usize,
    pub view: usize,
    pub prior_kind: String,
    pub iterations: usize,
    pub seed: u64,
    pub iou: f64,
}

/// Per-instance IoU records with experiment metadata. The overall mean is
/// always the unweighted mean over per-category means.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub experiment: String,
    pub config_digest: u64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn new(experiment: impl Into<String>, config_digest: u64) -> Self {
        Self {
            experiment: experiment.into(),
            config_digest,
            rows: Vec::new(),
        }
    }

    /// Per-category mean IoU over rows matching (model, condition), mean
    /// over seeds included.
    pub fn category_means(&self, model: &str, condition: &str) -> Vec<(String, f64)> {
        let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            if r.model == model && r.condition == condition {
                let e = acc.entry(r.category.as_str()).or_insert((0.0, 0));
                e.0 += r.iou;
                e.1 += 1;
            }
        }
        acc.into_iter()
            .map(|(k, (s, n))| (k.to_string(), s / n as f64))
            .collect()
    }

    /// Category-wise average IoU: unweighted mean of per-category means.
    pub fn overall_mean(&self, model: &str, condition: &str) -> Option<f64> {
        let means = self.category_means(model, condition);
        if means.is_empty() {
            return None;
        }
        Some(means.iter().map(|(_, v)| v).sum::<f64>() / means.len() as f64)
    }

    /// Per-seed overall means for (model, condition); used for spread.
    pub fn per_seed_means(&self, model: &str, condition: &str) -> Vec<f64> {
        let mut seeds: Vec<u64> = self
            .rows
            .iter()
            .filter(|r| r.model == model && r.condition == condition)
            .map(|r| r.seed)
            .collect();
        seeds.sort_unstable();
        seeds.dedup();
        seeds
            .iter()
            .map(|&s| {
                let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
                for r in &self.rows {
                    if r.model == model && r.condition == condition && r.seed == s {
                        let e = acc.entry(r.category.as_str()).or_insert((0.0, 0));
                        e.0 += r.iou;
                        e.1 += 1;
                    }
                }
                let n = acc.len() as f64;
                acc.values().map(|(sum, c)| sum / *c as f64).sum::<f64>() / n
            })
            .collect()
    }

    pub fn conditions(&self, model: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .rows
            .iter()
            .filter(|r| r.model == model)
            .map(|r| r.condition.clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn models(&self) -> Vec<String> {
        let mut out: Vec<String> = self.rows.iter().map(|r| r.model.clone()).collect();
        out.sort();
        out.dedup();
        out
    }

    /// One CSV row per instance-condition.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from(
            "experiment,model,condition,category,instance,view,prior_kind,iterations,seed,iou\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{:.6}\n",
                self.experiment,
                r.model,
                r.condition,
                r.category,
                r.instance,
                r.view,
                r.prior_kind,
                r.iterations,
                r.seed,
                r.iou
            ));
        }
        write_text(path, &out)
    }

    /// JSON summary: per (model, condition) category means and the overall
    /// category-wise mean, plus seed spread.
    pub fn write_json_summary(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Summary<'a> {
            experiment: &'a str,
            config_digest: u64,
            entries: Vec<SummaryEntry>,
        }
        #[derive(Serialize)]
        struct SummaryEntry {
            model: String,
            condition: String,
            category_means: Vec<(String, f64)>,
            overall_mean: f64,
            seed_means: Vec<f64>,
            seed_std: f64,
        }
        let mut entries = Vec::new();
        for m in self.models() {
            for c in self.conditions(&m) {
                let seed_means = self.per_seed_means(&m, &c);
                let std = std_dev(&seed_means);
                entries.push(SummaryEntry {
                    category_means: self.category_means(&m, &c),
                    overall_mean: self.overall_mean(&m, &c).unwrap_or(f64::NAN),
                    seed_means,
                    seed_std: std,
                    model: m.clone(),
                    condition: c,
                });
            }
        }
        let summary = Summary {
            experiment: &self.experiment,
            config_digest: self.config_digest,
            entries,
        };
        write_text(path, &serde_json::to_string_pretty(&summary)?)
    }

    pub fn digest(&self) -> u64 {
        fnv1a64(serde_json::to_string(self).expect("report serializes").as_bytes())
    }
}

pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// inference helpers

/// A trained model paired with the iteration count it was trained for;
/// evaluation always runs the same number of refinement iterations.
pub struct EvalModel {
    pub name: String,
    pub params: ModelParams,
    pub iterations: usize,
}

/// Single-view iterative refinement: the output is fed back as the prior
/// with the same image, `iterations` times total.
pub fn refine(params: &ModelParams, image: &Tensor, prior: &VoxelGrid, iterations: usize) -> Result<VoxelGrid> {
    let mut current = prior.clone();
    for _ in 0..iterations.max(1) {
        current = model::forward(params, image, &current)?;
    }
    Ok(current)
}

/// Multi-view iterative inference: step 1 uses the initial prior, step i>1
/// uses step i-1's output as the prior with view i as the image. Returns
/// the full trajectory (one grid per step).
pub fn multiview_infer(
    params: &ModelParams,
    views: &[Tensor],
    initial_prior: &VoxelGrid,
) -> Result<Vec<VoxelGrid>> {
    if views.is_empty() {
        return Err(Error::InvalidArgument {
            op: "multiview_infer",
            detail: "at least one view is required".into(),
        });
    }
    if params.variant != Variant::PriorRefinement {
        return Err(Error::InvalidArgument {
            op: "multiview_infer",
            detail: "multi-view inference requires a prior-refinement model".into(),
        });
    }
    let mut trajectory = Vec::with_capacity(views.len());
    let mut prior = initial_prior.clone();
    for image in views {
        prior = model::forward(params, image, &prior)?;
        trajectory.push(prior.clone());
    }
    Ok(trajectory)
}

fn load_test_instances<'a>(
    manifest: &'a DatasetManifest,
    cat: &'a CategoryEntry,
) -> Vec<&'a InstanceEntry> {
    manifest.instances_in_split(cat, Split::Test).collect()
}

/// Few-shot pools per novel category: one shuffled index order per seed,
/// shared across all k so the k-curves are nested.
fn fewshot_pool(
    manifest: &DatasetManifest,
    cat: &CategoryEntry,
    seed: u64,
) -> Result<Vec<VoxelGrid>> {
    let train: Vec<&InstanceEntry> = manifest.instances_in_split(cat, Split::Train).collect();
    let mut idx: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(cat.name.as_bytes()));
    idx.shuffle(&mut rng);
    idx.iter()
        .map(|&i| load_voxel(&manifest.resolve(&train[i].voxel_path)))
        .collect()
}

// ---------------------------------------------------------------------------
// few-shot experiment

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KValue {
    K(usize),
    Full,
}

impl KValue {
    pub fn label(&self) -> String {
        match self {
            KValue::K(k) => format!("k={}", k),
            KValue::Full => "k=full".to_string(),
        }
    }
}

pub struct FewshotConfig {
    pub k_values: Vec<KValue>,
    pub seeds: Vec<u64>,
    pub views_per_instance: usize,
    pub iou_threshold: f64,
}

impl Default for FewshotConfig {
    fn default() -> Self {
        Self {
            k_values: vec![
                KValue::K(1),
                KValue::K(2),
                KValue::K(3),
                KValue::K(4),
                KValue::K(5),
                KValue::K(10),
                KValue::K(25),
                KValue::Full,
            ],
            seeds: vec![1, 2, 3],
            views_per_instance: 1,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

/// Reconstruct every novel test instance for each (model, k, seed) and
/// report per-category and overall means. Image-only models are evaluated
/// once per seed under the condition "image_only".
pub fn fewshot_experiment(
    models: &[EvalModel],
    manifest: &DatasetManifest,
    config: &FewshotConfig,
) -> Result<EvalReport> {
    if !models.iter().any(|m| m.params.variant == Variant::PriorRefinement) {
        return Err(Error::MissingInput(
            "few-shot experiment needs at least one prior-refinement model".into(),
        ));
    }
    let digest = fnv1a64(format!("{:?}|{:?}", config.seeds, config.views_per_instance).as_bytes());
    let mut report = EvalReport::new("fewshot", digest);

    let novel: Vec<&CategoryEntry> = manifest.categories_with_role(CategoryRole::Novel).collect();
    if novel.is_empty() {
        return Err(Error::MissingInput("manifest has no novel categories".into()));
    }

    for &seed in &config.seeds {
        let pools: Vec<Vec<VoxelGrid>> = novel
            .iter()
            .map(|cat| fewshot_pool(manifest, cat, seed))
            .collect::<Result<Vec<_>>>()?;

        for (cat, pool) in novel.iter().zip(&pools) {
            let tests = load_test_instances(manifest, cat);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(cat.name.as_bytes()) ^ 0xf00d);
            let jobs: Vec<(&InstanceEntry, usize, Tensor, VoxelGrid)> = tests
                .iter()
                .flat_map(|inst| {
                    let mut picks = Vec::new();
                    for _ in 0..config.views_per_instance.max(1).min(inst.views.len()) {
                        picks.push(rng.gen_range(0..inst.views.len()));
                    }
                    picks.sort_unstable();
                    picks.dedup();
                    picks.into_iter().map(move |v| (*inst, v)).collect::<Vec<_>>()
                })
                .map(|(inst, v)| {
                    let image = load_image_tensor(&manifest.resolve(&inst.views[v].path))?;
                    let target = load_voxel(&manifest.resolve(&inst.voxel_path))?;
                    Ok((inst, v, image, target))
                })
                .collect::<Result<Vec<_>>>()?;

            for m in models {
                match m.params.variant {
                    Variant::ImageOnly => {
                        let rows: Result<Vec<EvalRow>> = jobs
                            .par_iter()
                            .map(|(inst, v, image, target)| {
                                let pred = model::forward_image_only(&m.params, image)?;
                                Ok(EvalRow {
                                    model: m.name.clone(),
                                    condition: "image_only".to_string(),
                                    category: cat.name.clone(),
                                    instance: inst.id,
                                    view: *v,
                                    prior_kind: "none".to_string(),
                                    iterations: 1,
                                    seed,
                                    iou: iou(&pred, target, config.iou_threshold)?,
                                })
                            })
                            .collect();
                        report.rows.extend(rows?);
                    }
                    Variant::PriorRefinement => {
                        for kv in &config.k_values {
                            let k = match kv {
                                KValue::K(k) => *k,
                                KValue::Full => pool.len(),
                            };
                            if k == 0 || k > pool.len() {
                                return Err(Error::InvalidArgument {
                                    op: "fewshot_experiment",
                                    detail: format!(
                                        "k={} but category {} has {} pool shapes",
                                        k,
                                        cat.name,
                                        pool.len()
                                    ),
                                });
                            }
                            let prior = average_prior(&pool[..k])?;
                            let rows: Result<Vec<EvalRow>> = jobs
                                .par_iter()
                                .map(|(inst, v, image, target)| {
                                    let pred =
                                        refine(&m.params, image, &prior, m.iterations)?;
                                    Ok(EvalRow {
                                        model: m.name.clone(),
                                        condition: kv.label(),
                                        category: cat.name.clone(),
                                        instance: inst.id,
                                        view: *v,
                                        prior_kind: kv.label(),
                                        iterations: m.iterations,
                                        seed,
                                        iou: iou(&pred, target, config.iou_threshold)?,
                                    })
                                })
                                .collect();
                            report.rows.extend(rows?);
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// multi-view experiment

pub struct MultiviewConfig {
    pub max_views: usize,
    pub role: CategoryRole,
    pub seed: u64,
    pub iou_threshold: f64,
}

/// Evaluate reconstruction as views accumulate: condition "views=i" holds
/// the IoU of the step-i trajectory output. Base categories use the full
/// prior, novel categories a 1-shot prior.
pub fn multiview_experiment(
    models: &[EvalModel],
    manifest: &DatasetManifest,
    config: &MultiviewConfig,
) -> Result<EvalReport> {
    let digest = fnv1a64(format!("multiview|{}|{}", config.max_views, config.seed).as_bytes());
    let mut report = EvalReport::new("multiview", digest);
    let categories: Vec<&CategoryEntry> = manifest.categories_with_role(config.role).collect();

    for cat in categories {
        let pool = fewshot_pool(manifest, cat, config.seed)?;
        let prior = match config.role {
            CategoryRole::Base => average_prior(&pool)?,
            CategoryRole::Novel => average_prior(&pool[..1])?,
        };
        let prior_kind = match config.role {
            CategoryRole::Base => "full",
            CategoryRole::Novel => "kshot(1)",
        };
        let tests = load_test_instances(manifest, cat);
        let jobs: Vec<(usize, Vec<Tensor>, VoxelGrid)> = tests
            .iter()
            .map(|inst| {
                // manifest view order under the experiment seed
                let n = config.max_views.min(inst.views.len());
                let views = inst.views[..n]
                    .iter()
                    .map(|v| load_image_tensor(&manifest.resolve(&v.path)))
                    .collect::<Result<Vec<_>>>()?;
                let target = load_voxel(&manifest.resolve(&inst.voxel_path))?;
                Ok((inst.id, views, target))
            })
            .collect::<Result<Vec<_>>>()?;

        for m in models {
            let rows: Result<Vec<Vec<EvalRow>>> = jobs
                .par_iter()
                .map(|(id, views, target)| {
                    let trajectory = multiview_infer(&m.params, views, &prior)?;
                    trajectory
                        .iter()
                        .enumerate()
                        .map(|(i, pred)| {
                            Ok(EvalRow {
                                model: m.name.clone(),
                                condition: format!("views={}", i + 1),
                                category: cat.name.clone(),
                                instance: *id,
                                view: i,
                                prior_kind: prior_kind.to_string(),
                                iterations: m.iterations,
                                seed: config.seed,
                                iou: iou(pred, target, config.iou_threshold)?,
                            })
                        })
                        .collect()
                })
                .collect();
            for group in rows? {
                report.rows.extend(group);
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// prior ablations

pub struct AblationConfig {
    pub seed: u64,
    pub iou_threshold: f64,
}

/// Four conditions over the novel test sets:
///   naive_prior      — output the 1-shot prior itself, no network
///   correct_1shot    — model with a correct-category 1-shot prior
///   random_category  — model with a 1-shot prior from another category
///   target_prior     — model with the evaluation target as the prior
pub fn ablation_suite(
    m: &EvalModel,
    manifest: &DatasetManifest,
    config: &AblationConfig,
) -> Result<EvalReport> {
    if m.params.variant != Variant::PriorRefinement {
        return Err(Error::MissingInput(
            "ablation suite needs a trained prior-refinement model".into(),
        ));
    }
    let digest = fnv1a64(format!("ablations|{}", config.seed).as_bytes());
    let mut report = EvalReport::new("ablations", digest);
    let novel: Vec<&CategoryEntry> = manifest.categories_with_role(CategoryRole::Novel).collect();
    let all_names: Vec<String> = manifest.categories.iter().map(|c| c.name.clone()).collect();

    for cat in &novel {
        let pool = fewshot_pool(manifest, cat, config.seed)?;
        let one_shot = average_prior(&pool[..1])?;

        // 1-shot prior from a uniformly chosen different category
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ fnv1a64(cat.name.as_bytes()));
        let others: Vec<&String> = all_names.iter().filter(|n| **n != cat.name).collect();
        let other_name = others[rng.gen_range(0..others.len())].clone();
        let other_cat = manifest.category(&other_name)?;
        let other_pool = fewshot_pool(manifest, other_cat, config.seed)?;
        let random_prior = average_prior(&other_pool[..1])?;

        let tests = load_test_instances(manifest, cat);
        let mut vrng = ChaCha8Rng::seed_from_u64(config.seed ^ fnv1a64(cat.name.as_bytes()) ^ 0xab1a);
        let jobs: Vec<(usize, usize, Tensor, VoxelGrid)> = tests
            .iter()
            .map(|inst| {
                let v = vrng.gen_range(0..inst.views.len());
                let image = load_image_tensor(&manifest.resolve(&inst.views[v].path))?;
                let target = load_voxel(&manifest.resolve(&inst.voxel_path))?;
                Ok((inst.id, v, image, target))
            })
            .collect::<Result<Vec<_>>>()?;

        let conditions: [(&str, &str); 4] = [
            ("naive_prior", "kshot(1)"),
            ("correct_1shot", "kshot(1)"),
            ("random_category", "kshot(1) other"),
            ("target_prior", "target_oracle"),
        ];
        for (cond, pkind) in conditions {
            let rows: Result<Vec<EvalRow>> = jobs
                .par_iter()
                .map(|(id, v, image, target)| {
                    let pred = match cond {
                        "naive_prior" => one_shot.clone(),
                        "correct_1shot" => refine(&m.params, image, &one_shot, m.iterations)?,
                        "random_category" => {
                            refine(&m.params, image, &random_prior, m.iterations)?
                        }
                        "target_prior" => refine(&m.params, image, target, m.iterations)?,
                        _ => unreachable!(),
                    };
                    Ok(EvalRow {
                        model: m.name.clone(),
                        condition: cond.to_string(),
                        category: cat.name.clone(),
                        instance: *id,
                        view: *v,
                        prior_kind: pkind.to_string(),
                        iterations: if cond == "naive_prior" { 0 } else { m.iterations },
                        seed: config.seed,
                        iou: iou(&pred, target, config.iou_threshold)?,
                    })
                })
                .collect();
            report.rows.extend(rows?);
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// distribution analytics

#[derive(Debug, Clone, Serialize)]
pub struct DistributionReport {
    /// (model, category) -> IoUs sorted ascending.
    pub sorted_curves: Vec<(String, String, Vec<f64>)>,
    /// per-instance key plus one IoU column per model, models in input order.
    pub model_names: Vec<String>,
    pub paired: Vec<((String, usize, usize), Vec<f64>)>,
    /// fraction of instances with IoU < 0.1 per model.
    pub frac_below_point1: Vec<(String, f64)>,
}

/// Cross-model distribution analysis. Each input report must contain one
/// model's rows over the same instance set (same category/instance/view
/// keys), one condition per report.
pub fn distribution_report(reports: &[&EvalReport]) -> Result<DistributionReport> {
    let mut model_names = Vec::new();
    let mut per_model: Vec<BTreeMap<(String, usize, usize), f64>> = Vec::new();
    for rep in reports {
        let models = rep.models();
        if models.len() != 1 {
            return Err(Error::InvalidArgument {
                op: "distribution_report",
                detail: format!("expected exactly one model per report, got {:?}", models),
            });
        }
        let mut map = BTreeMap::new();
        for r in &rep.rows {
            map.insert((r.category.clone(), r.instance, r.view), r.iou);
        }
        model_names.push(models[0].clone());
        per_model.push(map);
    }
    let keys: Vec<(String, usize, usize)> = per_model
        .first()
        .map(|m| m.keys().cloned().collect())
        .unwrap_or_default();
    for (name, m) in model_names.iter().zip(&per_model) {
        if m.len() != keys.len() || !keys.iter().all(|k| m.contains_key(k)) {
            return Err(Error::InvalidArgument {
                op: "distribution_report",
                detail: format!("instance set of model {} does not match the first report", name),
            });
        }
    }

    let mut sorted_curves = Vec::new();
    for (name, m) in model_names.iter().zip(&per_model) {
        let mut by_cat: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for ((cat, _, _), &v) in m {
            by_cat.entry(cat.as_str()).or_default().push(v);
        }
        for (cat, mut vals) in by_cat {
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sorted_curves.push((name.clone(), cat.to_string(), vals));
        }
    }

    let paired: Vec<((String, usize, usize), Vec<f64>)> = keys
        .iter()
        .map(|k| (k.clone(), per_model.iter().map(|m| m[k]).collect()))
        .collect();

    let frac_below_point1 = model_names
        .iter()
        .zip(&per_model)
        .map(|(name, m)| {
            let below = m.values().filter(|&&v| v < 0.1).count();
            (name.clone(), below as f64 / m.len().max(1) as f64)
        })
        .collect();

    Ok(DistributionReport {
        sorted_curves,
        model_names,
        paired,
        frac_below_point1,
    })
}

impl DistributionReport {
    /// CSVs shaped for direct plotting: sorted curves, paired columns, and
    /// the below-0.1 fractions.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let mut curves = String::from("model,category,rank,iou\n");
        for (model, cat, vals) in &self.sorted_curves {
            for (i, v) in vals.iter().enumerate() {
                curves.push_str(&format!("{},{},{},{:.6}\n", model, cat, i, v));
            }
        }
        write_text(&dir.join("sorted_curves.csv"), &curves)?;

        let mut paired = String::from("category,instance,view");
        for m in &self.model_names {
            paired.push_str(&format!(",{}", m));
        }
        paired.push('\n');
        for ((cat, inst, view), vals) in &self.paired {
            paired.push_str(&format!("{},{},{}", cat, inst, view));
            for v in vals {
                paired.push_str(&format!(",{:.6}", v));
            }
            paired.push('\n');
        }
        write_text(&dir.join("paired_ious.csv"), &paired)?;

        let mut frac = String::from("model,frac_below_0.1\n");
        for (m, f) in &self.frac_below_point1 {
            frac.push_str(&format!("{},{:.6}\n", m, f));
        }
        write_text(&dir.join("frac_below.csv"), &frac)
    }
}

// ---------------------------------------------------------------------------
// k-shot variability

/// Reconstruct one image-target pair under n distinct priors and report the
/// standard deviation of the IoU. With `use_full_prior` the same full prior
/// is used every time, so the spread is exactly zero.
#[allow(clippy::too_many_arguments)]
pub fn kshot_variability(
    m: &EvalModel,
    manifest: &DatasetManifest,
    category: &str,
    instance_id: usize,
    n: usize,
    use_full_prior: bool,
    seed: u64,
    threshold: f64,
) -> Result<f64> {
    let cat = manifest.category(category)?;
    let pool = fewshot_pool(manifest, cat, seed)?;
    if !use_full_prior && pool.len() < n {
        return Err(Error::InvalidArgument {
            op: "kshot_variability",
            detail: format!(
                "need {} distinct 1-shot choices, category {} has {}",
                n,
                category,
                pool.len()
            ),
        });
    }
    let inst = cat
        .instances
        .iter()
        .find(|i| i.id == instance_id && i.split == Split::Test)
        .ok_or_else(|| Error::MissingInput(format!("test instance {} in {}", instance_id, category)))?;
    let image = load_image_tensor(&manifest.resolve(&inst.views[0].path))?;
    let target = load_voxel(&manifest.resolve(&inst.voxel_path))?;
    let full = average_prior(&pool)?;

    let ious: Result<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let prior = if use_full_prior {
                full.clone()
            } else {
                average_prior(&pool[i..i + 1])?
            };
            let pred = refine(&m.params, &image, &prior, m.iterations)?;
            iou(&pred, &target, threshold)
        })
        .collect();
    Ok(std_dev(&ious?))
}

// ---------------------------------------------------------------------------
// training audit

/// Assert that base training touched no novel-category data.
pub fn audit_training_access(log: &TrainLog, manifest: &DatasetManifest) -> Result<()> {
    for name in &log.accessed_categories {
        let cat = manifest.category(name)?;
        if cat.role == CategoryRole::Novel {
            return Err(Error::InvalidArgument {
                op: "audit_training_access",
                detail: format!("novel category {} was read during base training", name),
            });
        }
    }
    Ok(())
}

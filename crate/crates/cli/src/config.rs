//! Config file loading and flag merging. Files are TOML, parsed strictly:
//! any key outside the known schema is rejected with a nearest-key hint.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voxelprior::data::{BASE_CATEGORIES, NOVEL_CATEGORIES};
use voxelprior::model::ArchConfig;

#[derive(Debug)]
pub enum ConfigError {
    /// File-level problem: unreadable, unparsable, unknown keys, bad values.
    Invalid(String),
    /// A referenced file does not exist.
    Missing(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Invalid(m) => write!(f, "{}", m),
            ConfigError::Missing(m) => write!(f, "{}", m),
        }
    }
}

// ---------------------------------------------------------------------------
// raw file schema (all optional; defaults filled during resolution)

#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
pub struct DatasetSection {
    pub base_categories: Option<Vec<String>>,
    pub novel_categories: Option<Vec<String>>,
    pub instances: Option<usize>,
    pub views: Option<usize>,
    pub voxel_dim: Option<usize>,
    pub image_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
pub struct TrainSection {
    pub variant: Option<String>,
    pub batch_size: Option<usize>,
    pub iters: Option<usize>,
    pub prior: Option<String>,
    pub k: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub views_per_epoch: Option<usize>,
    pub iou_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
pub struct EvalSection {
    pub k: Option<Vec<usize>>,
    pub include_full: Option<bool>,
    pub seeds: Option<Vec<u64>>,
    pub views: Option<usize>,
    pub iou_threshold: Option<f64>,
    pub role: Option<String>,
}

const TOP_KEYS: &[&str] = &["preset", "seed", "out", "threads", "dataset", "train", "eval"];
const DATASET_KEYS: &[&str] = &[
    "base_categories",
    "novel_categories",
    "instances",
    "views",
    "voxel_dim",
    "image_size",
];
const TRAIN_KEYS: &[&str] = &[
    "variant",
    "batch_size",
    "iters",
    "prior",
    "k",
    "max_epochs",
    "patience",
    "views_per_epoch",
    "iou_threshold",
];
const EVAL_KEYS: &[&str] = &["k", "include_full", "seeds", "views", "iou_threshold", "role"];

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut row = vec![i + 1];
        for (j, &cb) in b.iter().enumerate() {
            let cost = if ca == cb { 0 } else { 1 };
            row.push((prev[j] + cost).min(prev[j + 1] + 1).min(row[j] + 1));
        }
        prev = row;
    }
    prev[b.len()]
}

fn nearest<'a>(key: &str, valid: &[&'a str]) -> &'a str {
    valid
        .iter()
        .min_by_key(|v| levenshtein(key, v))
        .expect("non-empty key list")
}

fn check_keys(table: &toml::Table, valid: &[&str], scope: &str) -> Result<(), ConfigError> {
    for key in table.keys() {
        if !valid.contains(&key.as_str()) {
            return Err(ConfigError::Invalid(format!(
                "unknown key `{}{}` (did you mean `{}`?)",
                scope,
                key,
                nearest(key, valid)
            )));
        }
    }
    Ok(())
}

pub fn load_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ConfigError::Missing(format!(
                "config file not found: {}",
                path.display()
            )))
        }
        Err(e) => {
            return Err(ConfigError::Invalid(format!(
                "cannot read {}: {}",
                path.display(),
                e
            )))
        }
    };
    // toml errors carry line/column in their rendered message
    let root: toml::Table = text
        .parse()
        .map_err(|e| ConfigError::Invalid(format!("{}: {}", path.display(), e)))?;
    check_keys(&root, TOP_KEYS, "")?;
    for (section, keys) in [("dataset", DATASET_KEYS), ("train", TRAIN_KEYS), ("eval", EVAL_KEYS)] {
        if let Some(value) = root.get(section) {
            let table = value.as_table().ok_or_else(|| {
                ConfigError::Invalid(format!("`{}` must be a table", section))
            })?;
            check_keys(table, keys, &format!("{}.", section))?;
        }
    }
    toml::Table::try_into(root).map_err(|e| ConfigError::Invalid(format!("{}: {}", path.display(), e)))
}

// ---------------------------------------------------------------------------
// resolved configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(ConfigError::Invalid(format!(
                "unknown preset `{}` (expected desk or paper)",
                other
            ))),
        }
    }

    pub fn arch(&self) -> ArchConfig {
        match self {
            Preset::Desk => ArchConfig::desk(),
            Preset::Paper => ArchConfig::paper(),
        }
    }
}

/// Fully resolved settings: defaults, then config file, then flags. The
/// echo written into every run directory serializes this struct verbatim.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub command: String,
    pub preset: Preset,
    pub seed: u64,
    pub threads: usize,
    pub out: String,
    pub dataset: ResolvedDataset,
    pub train: ResolvedTrain,
    pub eval: ResolvedEval,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedDataset {
    pub base_categories: Vec<String>,
    pub novel_categories: Vec<String>,
    pub instances: usize,
    pub views: usize,
    pub voxel_dim: usize,
    pub image_size: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedTrain {
    pub variant: String,
    pub batch_size: usize,
    pub iters: usize,
    pub prior: String,
    pub k: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub views_per_epoch: usize,
    pub iou_threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedEval {
    pub k: Vec<usize>,
    pub include_full: bool,
    pub seeds: Vec<u64>,
    pub views: usize,
    pub iou_threshold: f64,
    pub role: String,
}

/// Flag-level overrides shared by every command.
#[derive(Debug, Default)]
pub struct GlobalFlags {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub preset: Option<String>,
}

pub fn resolve(command: &str, flags: &GlobalFlags) -> Result<ResolvedConfig, ConfigError> {
    let file = match &flags.config {
        Some(path) => load_file(path)?,
        None => FileConfig::default(),
    };

    let preset = match flags.preset.as_deref().or(file.preset.as_deref()) {
        Some(s) => Preset::parse(s)?,
        None => Preset::Desk,
    };
    let seed = flags.seed.or(file.seed).unwrap_or(0);
    let threads = flags.threads.or(file.threads).unwrap_or(0);

    let out = flags
        .out
        .as_ref()
        .map(|p| p.display().to_string())
        .or(file.out.clone())
        .or_else(|| {
            std::env::var("VOXELPRIOR_OUT")
                .ok()
                .map(|root| format!("{}/{}", root, command))
        })
        .unwrap_or_else(|| format!("runs/{}", command));

    let arch = preset.arch();
    let dataset = ResolvedDataset {
        base_categories: file
            .dataset
            .base_categories
            .unwrap_or_else(|| BASE_CATEGORIES.iter().map(|s| s.to_string()).collect()),
        novel_categories: file
            .dataset
            .novel_categories
            .unwrap_or_else(|| NOVEL_CATEGORIES.iter().map(|s| s.to_string()).collect()),
        instances: file.dataset.instances.unwrap_or(60),
        views: file.dataset.views.unwrap_or(24),
        voxel_dim: file.dataset.voxel_dim.unwrap_or(arch.voxel_dim),
        image_size: file.dataset.image_size.unwrap_or(arch.image_size),
    };

    let train = ResolvedTrain {
        variant: file.train.variant.unwrap_or_else(|| "prior".into()),
        batch_size: file.train.batch_size.unwrap_or(32),
        iters: file.train.iters.unwrap_or(1),
        prior: file.train.prior.unwrap_or_else(|| "kshot".into()),
        k: file.train.k.unwrap_or(1),
        max_epochs: file.train.max_epochs.unwrap_or(30),
        patience: file.train.patience.unwrap_or(5),
        views_per_epoch: file.train.views_per_epoch.unwrap_or(4),
        iou_threshold: file.train.iou_threshold.unwrap_or(0.4),
    };

    let eval = ResolvedEval {
        k: file.eval.k.unwrap_or_else(|| vec![1, 2, 3, 4, 5, 10, 25]),
        include_full: file.eval.include_full.unwrap_or(true),
        seeds: file.eval.seeds.unwrap_or_else(|| vec![1, 2, 3]),
        views: file.eval.views.unwrap_or(5),
        iou_threshold: file.eval.iou_threshold.unwrap_or(0.4),
        role: file.eval.role.unwrap_or_else(|| "base".into()),
    };

    Ok(ResolvedConfig {
        command: command.to_string(),
        preset,
        seed,
        threads,
        out,
        dataset,
        train,
        eval,
    })
}

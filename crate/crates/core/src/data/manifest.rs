use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{save_ppm, save_voxel};
use super::render::render;
use super::shapes::{generate_shape, is_known_category, ShapeSpec};
use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryRole {
    Base,
    Novel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewEntry {
    pub path: String,
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub id: usize,
    pub voxel_path: String,
    pub views: Vec<ViewEntry>,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub name: String,
    pub role: CategoryRole,
    pub instances: Vec<InstanceEntry>,
}

/// Index of every generated shape, its rendered views, and split assignment.
/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub voxel_dim: usize,
    pub image_size: usize,
    pub seed: u64,
    pub categories: Vec<CategoryEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest = serde_json::from_slice(&bytes)?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::format(
                path,
                format!(
                    "manifest schema version {} unsupported (expected {})",
                    manifest.schema_version, MANIFEST_SCHEMA_VERSION
                ),
            ));
        }
        manifest.root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn category(&self, name: &str) -> Result<&CategoryEntry> {
        self.categories
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))
    }

    pub fn categories_with_role(&self, role: CategoryRole) -> impl Iterator<Item = &CategoryEntry> {
        self.categories.iter().filter(move |c| c.role == role)
    }

    pub fn instances_in_split<'a>(
        &'a self,
        category: &'a CategoryEntry,
        split: Split,
    ) -> impl Iterator<Item = &'a InstanceEntry> {
        category.instances.iter().filter(move |i| i.split == split)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Digest over the serialized manifest (excluding the runtime root path).
    pub fn digest(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("manifest serializes");
        super::fnv1a64(&json)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub base_categories: Vec<String>,
    pub novel_categories: Vec<String>,
    pub instances_per_category: usize,
    pub views_per_instance: usize,
    pub voxel_dim: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl DatasetConfig {
    pub fn desk(seed: u64) -> Self {
        Self {
            base_categories: super::BASE_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            novel_categories: super::NOVEL_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            instances_per_category: 60,
            views_per_instance: 24,
            voxel_dim: 16,
            image_size: 64,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.instances_per_category < 20 {
            return Err(Error::InvalidConfig(format!(
                "instances_per_category must be >= 20 so every split is nonempty, got {}",
                self.instances_per_category
            )));
        }
        for name in self.base_categories.iter().chain(&self.novel_categories) {
            if !is_known_category(name) {
                return Err(Error::UnknownCategory(name.clone()));
            }
        }
        if self.voxel_dim < 8 || self.image_size < 8 {
            return Err(Error::InvalidConfig(
                "voxel_dim and image_size must be >= 8".into(),
            ));
        }
        Ok(())
    }
}

/// 75-5-20 split of n instances; val gets at least one instance.
fn split_counts(n: usize) -> (usize, usize) {
    let train = (n as f64 * 0.75).round() as usize;
    let val = ((n as f64 * 0.05).round() as usize).max(1);
    (train, val)
}

fn instance_seed(dataset_seed: u64, category: &str, index: usize) -> u64 {
    let mut bytes = dataset_seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(category.as_bytes());
    bytes.extend_from_slice(&(index as u64).to_le_bytes());
    super::fnv1a64(&bytes)
}

/// Generate every shape and view to disk under `out_dir` and write the
/// manifest. Deterministic per seed; rendering runs in parallel across
/// instances but the manifest order is fixed.
pub fn build_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let roles = config
        .base_categories
        .iter()
        .map(|c| (c.clone(), CategoryRole::Base))
        .chain(
            config
                .novel_categories
                .iter()
                .map(|c| (c.clone(), CategoryRole::Novel)),
        );

    let mut categories = Vec::new();
    for (name, role) in roles {
        let n = config.instances_per_category;
        let (train_n, val_n) = split_counts(n);

        // deterministic split assignment: shuffle indices with a per-category rng
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(config.seed, &name, u64::MAX as usize));
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut splits = vec![Split::Test; n];
        for (rank, &idx) in order.iter().enumerate() {
            splits[idx] = if rank < train_n {
                Split::Train
            } else if rank < train_n + val_n {
                Split::Val
            } else {
                Split::Test
            };
        }

        let jobs: Vec<(usize, u64, Split)> = (0..n)
            .map(|i| (i, instance_seed(config.seed, &name, i), splits[i]))
            .collect();

        let instances: Result<Vec<InstanceEntry>> = jobs
            .par_iter()
            .map(|&(i, seed, split)| {
                let spec = ShapeSpec::new(name.clone(), seed);
                let grid = generate_shape(&spec, config.voxel_dim)?;
                let voxel_rel = format!("{}/{:04}.voxl", name, i);
                save_voxel(&grid, &out_dir.join(&voxel_rel))?;

                let mut view_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_u64);
                let mut views = Vec::with_capacity(config.views_per_instance);
                for v in 0..config.views_per_instance {
                    let azimuth = view_rng.gen_range(0.0..360.0);
                    let elevation = view_rng.gen_range(10.0..=50.0);
                    let rendered = render(&grid, azimuth, elevation, config.image_size);
                    let view_rel = format!("{}/{:04}_view{:02}.ppm", name, i, v);
                    save_ppm(&rendered.image, &out_dir.join(&view_rel))?;
                    views.push(ViewEntry {
                        path: view_rel,
                        azimuth,
                        elevation,
                    });
                }
                Ok(InstanceEntry {
                    id: i,
                    voxel_path: voxel_rel,
                    views,
                    split,
                })
            })
            .collect();

        categories.push(CategoryEntry {
            name,
            role,
            instances: instances?,
        });
    }

    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        voxel_dim: config.voxel_dim,
        image_size: config.image_size,
        seed: config.seed,
        categories,
        root: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

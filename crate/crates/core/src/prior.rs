//! Category-specific shape priors: averaged voxel grids built from training
//! shapes, the ablation variants, and the occupancy-frequency analysis.

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{load_voxel, DatasetManifest, Split, VoxelGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Kshot(usize),
    Full,
    TargetOracle,
    RandomCategory,
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub category: String,
    pub seed: u64,
}

/// A constructed prior plus the category its shapes were actually drawn
/// from (differs from the requested one for random_category priors).
#[derive(Debug, Clone)]
pub struct Prior {
    pub grid: VoxelGrid,
    pub source_category: String,
}

/// Per-voxel arithmetic mean of equally sized grids.
pub fn average_prior(grids: &[VoxelGrid]) -> Result<VoxelGrid> {
    let first = grids.first().ok_or(Error::InvalidArgument {
        op: "average_prior",
        detail: "empty grid list".into(),
    })?;
    let dim = first.dim();
    let mut acc = vec![0.0f64; first.values().len()];
    for g in grids {
        if g.dim() != dim {
            return Err(Error::ShapeMismatch {
                op: "average_prior",
                detail: format!("extent {} vs {}", g.dim(), dim),
            });
        }
        for (a, &v) in acc.iter_mut().zip(g.values()) {
            *a += v;
        }
    }
    let n = grids.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    VoxelGrid::new(dim, acc)
}

fn train_shapes(manifest: &DatasetManifest, category: &str) -> Result<Vec<VoxelGrid>> {
    let cat = manifest.category(category)?;
    manifest
        .instances_in_split(cat, Split::Train)
        .map(|inst| load_voxel(&manifest.resolve(&inst.voxel_path)))
        .collect()
}

/// Build a prior per the spec. k-shot priors sample without replacement
/// from the category's train-split shapes, deterministically by seed.
pub fn make_prior(spec: &PriorSpec, manifest: &DatasetManifest) -> Result<Prior> {
    match spec.kind {
        PriorKind::Zero => Ok(Prior {
            grid: VoxelGrid::zeros(manifest.voxel_dim),
            source_category: spec.category.clone(),
        }),
        PriorKind::Full => {
            let shapes = train_shapes(manifest, &spec.category)?;
            Ok(Prior {
                grid: average_prior(&shapes)?,
                source_category: spec.category.clone(),
            })
        }
        PriorKind::Kshot(k) => {
            if k == 0 {
                return Err(Error::InvalidArgument {
                    op: "make_prior",
                    detail: "k must be >= 1".into(),
                });
            }
            let shapes = train_shapes(manifest, &spec.category)?;
            if k > shapes.len() {
                return Err(Error::InvalidArgument {
                    op: "make_prior",
                    detail: format!(
                        "k={} exceeds the {} train shapes of category {}",
                        k,
                        shapes.len(),
                        spec.category
                    ),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut indices: Vec<usize> = (0..shapes.len()).collect();
            indices.shuffle(&mut rng);
            let chosen: Vec<VoxelGrid> =
                indices[..k].iter().map(|&i| shapes[i].clone()).collect();
            Ok(Prior {
                grid: average_prior(&chosen)?,
                source_category: spec.category.clone(),
            })
        }
        PriorKind::RandomCategory => {
            let others: Vec<&str> = manifest
                .categories
                .iter()
                .map(|c| c.name.as_str())
                .filter(|n| *n != spec.category)
                .collect();
            if others.is_empty() {
                return Err(Error::InvalidArgument {
                    op: "make_prior",
                    detail: "no other category available for a random-category prior".into(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let pick = others[rng.gen_range(0..others.len())].to_string();
            let inner = PriorSpec {
                kind: PriorKind::Kshot(1),
                category: pick.clone(),
                seed: rng.gen(),
            };
            let prior = make_prior(&inner, manifest)?;
            Ok(Prior {
                grid: prior.grid,
                source_category: pick,
            })
        }
        PriorKind::TargetOracle => Err(Error::InvalidArgument {
            op: "make_prior",
            detail: "target_oracle priors are wired by the evaluation harness, not built here"
                .into(),
        }),
    }
}

/// Occupancy-frequency bins: [0.9,1.0], [0.6,0.9), [0.3,0.6), [0,0.3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyBins {
    pub high: usize,
    pub mid: usize,
    pub low: usize,
    pub background: usize,
}

impl OccupancyBins {
    pub fn total(&self) -> usize {
        self.high + self.mid + self.low + self.background
    }
}

fn bin_label(v: f64) -> usize {
    if v >= 0.9 {
        3
    } else if v >= 0.6 {
        2
    } else if v >= 0.3 {
        1
    } else {
        0
    }
}

/// Bin counts plus a per-voxel label grid (labels 0..=3 stored as
/// label/3 so the grid stays in [0,1] for VOXL1 export).
pub fn occupancy_bins(prior: &VoxelGrid) -> (OccupancyBins, VoxelGrid) {
    let mut bins = OccupancyBins {
        high: 0,
        mid: 0,
        low: 0,
        background: 0,
    };
    let mut labels = VoxelGrid::zeros(prior.dim());
    for (i, &v) in prior.values().iter().enumerate() {
        let label = bin_label(v);
        match label {
            3 => bins.high += 1,
            2 => bins.mid += 1,
            1 => bins.low += 1,
            _ => bins.background += 1,
        }
        labels.values_mut()[i] = label as f64 / 3.0;
    }
    (bins, labels)
}

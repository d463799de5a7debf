use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Cubic occupancy grid, D cells per axis, values in [0,1].
/// Layout is row-major with z fastest: index = (x*D + y)*D + z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    dim: usize,
    values: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != dim * dim * dim {
            return Err(Error::ShapeMismatch {
                op: "VoxelGrid::new",
                detail: format!("dim {} needs {} values, got {}", dim, dim * dim * dim, values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument {
                op: "VoxelGrid::new",
                detail: format!("occupancy value {} outside [0,1]", v),
            });
        }
        Ok(Self { dim, values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[(x * self.dim + y) * self.dim + z]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        self.values[(x * self.dim + y) * self.dim + z] = v;
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn occupied_fraction(&self) -> f64 {
        let hits = self.values.iter().filter(|&&v| v > 0.5).count();
        hits as f64 / self.values.len() as f64
    }

    /// View as a 1-channel tensor [1,D,D,D] for the shape encoder.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, self.dim, self.dim, self.dim], self.values.clone())
            .expect("grid volume matches tensor shape")
    }

    /// Interpret a [1,D,D,D] or [D,D,D] tensor as a grid, clamping to [0,1].
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let dim = match t.shape() {
            [1, a, b, c] | [a, b, c] if a == b && b == c => *a,
            s => {
                return Err(Error::ShapeMismatch {
                    op: "VoxelGrid::from_tensor",
                    detail: format!("expected cubic tensor, got shape {:?}", s),
                })
            }
        };
        let values = t.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self { dim, values })
    }

    pub fn binarize(&self, threshold: f64) -> VoxelGrid {
        VoxelGrid {
            dim: self.dim,
            values: self
                .values
                .iter()
                .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// True if all occupied cells form one 6-connected component.
    pub fn is_connected(&self) -> bool {
        let d = self.dim;
        let occupied: Vec<bool> = self.values.iter().map(|&v| v > 0.5).collect();
        let total = occupied.iter().filter(|&&b| b).count();
        if total == 0 {
            return true;
        }
        let start = occupied.iter().position(|&b| b).unwrap();
        let mut seen = vec![false; occupied.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 0;
        while let Some(idx) = stack.pop() {
            count += 1;
            let z = idx % d;
            let y = (idx / d) % d;
            let x = idx / (d * d);
            let neighbors = [
                (x.wrapping_sub(1), y, z),
                (x + 1, y, z),
                (x, y.wrapping_sub(1), z),
                (x, y + 1, z),
                (x, y, z.wrapping_sub(1)),
                (x, y, z + 1),
            ];
            for (nx, ny, nz) in neighbors {
                if nx < d && ny < d && nz < d {
                    let ni = (nx * d + ny) * d + nz;
                    if occupied[ni] && !seen[ni] {
                        seen[ni] = true;
                        stack.push(ni);
                    }
                }
            }
        }
        count == total
    }
}

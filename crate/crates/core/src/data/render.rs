use serde::{Deserialize, Serialize};

use super::grid::VoxelGrid;
use crate::tensor::Tensor;

/// One rendered viewpoint of a shape. Pixel values are in [0,1] with three
/// identical channels (depth shading carries the only signal).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderedView {
    pub image: Tensor,
    pub azimuth: f64,
    pub elevation: f64,
}

/// Image span in voxel units relative to the grid extent; leaves headroom
/// for rotated shapes without clipping.
const SPAN_FACTOR: f64 = 1.5;
/// Ray-march step in voxel units.
const STEP: f64 = 0.25;
/// Depth shading range: nearest hit 1.0, farthest 1.0 - SHADE_RANGE.
const SHADE_RANGE: f64 = 0.7;

/// Orthographic depth-shaded render of a binary grid. The camera orbits the
/// grid center: azimuth rotates about the vertical z axis, elevation lifts
/// the camera above the horizon. Background pixels are 0.
pub fn render(grid: &VoxelGrid, azimuth_deg: f64, elevation_deg: f64, size: usize) -> RenderedView {
    let d = grid.dim() as f64;
    let az = azimuth_deg.to_radians();
    let el = elevation_deg.to_radians();

    // camera sits along +v from the center, looking along -v
    let v = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
    let dir = [-v[0], -v[1], -v[2]];
    let right = [-az.sin(), az.cos(), 0.0];
    let up = [
        right[1] * dir[2] - right[2] * dir[1],
        right[2] * dir[0] - right[0] * dir[2],
        right[0] * dir[1] - right[1] * dir[0],
    ];

    let span = SPAN_FACTOR * d;
    let start_dist = d; // outside the grid's circumscribed sphere (r = d*sqrt(3)/2)
    let march_len = 2.0 * start_dist;
    let half = d / 2.0;
    let dim = grid.dim();

    let mut pixels = vec![0.0f64; size * size];
    for py in 0..size {
        for px in 0..size {
            let u = ((px as f64 + 0.5) / size as f64 - 0.5) * span;
            let w = (0.5 - (py as f64 + 0.5) / size as f64) * span;
            // ray origin behind the grid, marching along dir
            let ox = v[0] * start_dist + right[0] * u + up[0] * w;
            let oy = v[1] * start_dist + right[1] * u + up[1] * w;
            let oz = v[2] * start_dist + right[2] * u + up[2] * w;
            let mut t = 0.0;
            while t <= march_len {
                let x = ox + dir[0] * t + half;
                let y = oy + dir[1] * t + half;
                let z = oz + dir[2] * t + half;
                if x >= 0.0 && y >= 0.0 && z >= 0.0 {
                    let (ix, iy, iz) = (x as usize, y as usize, z as usize);
                    if ix < dim && iy < dim && iz < dim && grid.get(ix, iy, iz) > 0.5 {
                        let frac = ((t - (start_dist - half * 1.74)) / (1.74 * d)).clamp(0.0, 1.0);
                        pixels[py * size + px] = 1.0 - SHADE_RANGE * frac;
                        break;
                    }
                }
                t += STEP;
            }
        }
    }

    let mut data = Vec::with_capacity(3 * size * size);
    for _ in 0..3 {
        data.extend_from_slice(&pixels);
    }
    RenderedView {
        image: Tensor::new(vec![3, size, size], data).expect("pixel buffer matches shape"),
        azimuth: azimuth_deg.rem_euclid(360.0),
        elevation: elevation_deg,
    }
}

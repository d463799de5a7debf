use std::collections::BTreeMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::VoxelGrid;
use crate::error::{Error, Result};

/// Base categories: seen during training.
pub const BASE_CATEGORIES: [&str; 5] = ["box", "table", "chair", "tower", "cross"];
/// Novel categories: held out, represented only by few-shot example shapes.
pub const NOVEL_CATEGORIES: [&str; 5] = ["rod", "l_bracket", "h_frame", "ring", "ellipsoid"];

/// Recipe for one procedural shape instance. Unset params are sampled from
/// the seed; explicit entries override the sampled value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub category: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
}

impl ShapeSpec {
    pub fn new(category: impl Into<String>, seed: u64) -> Self {
        Self {
            category: category.into(),
            params: BTreeMap::new(),
            seed,
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }
}

struct ParamDraw<'a> {
    rng: ChaCha8Rng,
    overrides: &'a BTreeMap<String, f64>,
}

impl<'a> ParamDraw<'a> {
    fn new(spec: &'a ShapeSpec) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            overrides: &spec.params,
        }
    }

    /// Draw uniformly in [lo,hi) unless overridden. The draw always happens
    /// so that overriding one param does not shift the others.
    fn uniform(&mut self, name: &str, lo: f64, hi: f64) -> f64 {
        let sampled = self.rng.gen_range(lo..hi);
        self.overrides.get(name).copied().unwrap_or(sampled)
    }
}

fn cells(frac: f64, dim: usize) -> usize {
    ((frac * dim as f64).round() as usize).max(1)
}

fn centered(extent: usize, dim: usize) -> Range<usize> {
    let extent = extent.min(dim);
    let lo = (dim - extent) / 2;
    lo..lo + extent
}

fn fill_box(g: &mut VoxelGrid, xs: Range<usize>, ys: Range<usize>, zs: Range<usize>) {
    for x in xs {
        for y in ys.clone() {
            for z in zs.clone() {
                g.set(x, y, z, 1.0);
            }
        }
    }
}

/// Shift a free-floating shape vertically by up to `j` cells either way,
/// clamped so the occupied cells stay in bounds. Vertical placement is the
/// one pose dimension every rendered view exposes (the camera only orbits
/// the z axis), so this diversity stays learnable from a single image while
/// still separating instances of a category.
fn lift(g: &VoxelGrid, t: f64, j: isize) -> VoxelGrid {
    let d = g.dim();
    let (mut lo, mut hi) = (d, 0usize);
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                if g.get(x, y, z) > 0.5 {
                    lo = lo.min(z);
                    hi = hi.max(z);
                }
            }
        }
    }
    if lo == d {
        return g.clone();
    }
    // uniform choice among the 2j+1 offsets, clamped to stay in bounds
    let offsets = 2 * j + 1;
    let want = (t.clamp(0.0, 1.0) * offsets as f64).floor() as isize;
    let shift = (want.min(offsets - 1) - j)
        .clamp(-(lo as isize), (d - 1 - hi) as isize);
    if shift == 0 {
        return g.clone();
    }
    let mut out = VoxelGrid::zeros(d);
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                if g.get(x, y, z) > 0.5 {
                    out.set(x, y, (z as isize + shift) as usize, 1.0);
                }
            }
        }
    }
    out
}

/// Generate a binary shape for the spec's category. Deterministic per seed;
/// axes are (x, y, z) with z vertical. All instances of a category share one
/// canonical alignment — diversity comes from proportions (and, for the
/// free-floating novel categories, vertical placement), so a category
/// average remains a meaningful shape prior.
pub fn generate_shape(spec: &ShapeSpec, dim: usize) -> Result<VoxelGrid> {
    let mut p = ParamDraw::new(spec);
    let mut g = VoxelGrid::zeros(dim);
    match spec.category.as_str() {
        "box" => {
            // extent fractions; 1.0 ("full extents") clamps to a 1-cell margin
            let ex = cells(p.uniform("ex", 0.35, 0.85), dim).min(dim - 2);
            let ey = cells(p.uniform("ey", 0.35, 0.85), dim).min(dim - 2);
            let ez = cells(p.uniform("ez", 0.35, 0.85), dim).min(dim - 2);
            fill_box(&mut g, centered(ex, dim), centered(ey, dim), centered(ez, dim));
        }
        "table" => {
            let top_w = cells(p.uniform("top_w", 0.55, 0.9), dim);
            let top_th = cells(p.uniform("top_th", 0.07, 0.13), dim);
            let top_z = cells(p.uniform("top_z", 0.5, 0.85), dim).min(dim - top_th);
            let leg_t = cells(p.uniform("leg_t", 0.08, 0.15), dim);
            let xs = centered(top_w, dim);
            let ys = centered(top_w, dim);
            fill_box(&mut g, xs.clone(), ys.clone(), top_z..top_z + top_th);
            let leg_t = leg_t.min(top_w);
            for (lx, ly) in [
                (xs.start, ys.start),
                (xs.start, ys.end - leg_t),
                (xs.end - leg_t, ys.start),
                (xs.end - leg_t, ys.end - leg_t),
            ] {
                fill_box(&mut g, lx..lx + leg_t, ly..ly + leg_t, 0..top_z + 1);
            }
        }
        "chair" => {
            let seat_w = cells(p.uniform("seat_w", 0.4, 0.75), dim);
            let seat_th = cells(p.uniform("seat_th", 0.07, 0.13), dim);
            let seat_z = cells(p.uniform("seat_z", 0.35, 0.5), dim);
            let back_h = cells(p.uniform("back_h", 0.75, 0.95), dim).min(dim);
            let leg_t = cells(p.uniform("leg_t", 0.08, 0.15), dim).min(seat_w);
            let xs = centered(seat_w, dim);
            let ys = centered(seat_w, dim);
            fill_box(&mut g, xs.clone(), ys.clone(), seat_z..(seat_z + seat_th).min(dim));
            // backrest along the -x edge of the seat
            let back_th = leg_t;
            fill_box(&mut g, xs.start..xs.start + back_th, ys.clone(), seat_z..back_h);
            for (lx, ly) in [
                (xs.start, ys.start),
                (xs.start, ys.end - leg_t),
                (xs.end - leg_t, ys.start),
                (xs.end - leg_t, ys.end - leg_t),
            ] {
                fill_box(&mut g, lx..lx + leg_t, ly..ly + leg_t, 0..seat_z + 1);
            }
        }
        "tower" => {
            // square cross-section and centered placement: from a single view
            // a tower silhouette can also be a deep or shallow box, so the
            // depth axis is only pinned by knowing the category
            let side = cells(p.uniform("side", 0.18, 0.5), dim);
            let height = cells(p.uniform("height", 0.65, 0.95), dim).min(dim);
            fill_box(&mut g, centered(side, dim), centered(side, dim), centered(height, dim));
        }
        "cross" => {
            let tx = cells(p.uniform("bar_tx", 0.13, 0.3), dim);
            let ty = cells(p.uniform("bar_ty", 0.13, 0.3), dim);
            let lx = cells(p.uniform("len_x", 0.8, 0.95), dim);
            let ly = cells(p.uniform("len_y", 0.8, 0.95), dim);
            let zs = centered(tx.max(ty), dim);
            fill_box(&mut g, centered(lx, dim), centered(tx, dim), zs.clone());
            fill_box(&mut g, centered(ty, dim), centered(ly, dim), zs);
        }
        "rod" => {
            let len = cells(p.uniform("length", 0.6, 0.95), dim).min(dim);
            let width = cells(p.uniform("width", 0.18, 0.33), dim)
                .clamp(3, (len / 3).max(3));
            fill_box(&mut g, centered(len, dim), centered(width, dim), centered(width, dim));
            g = lift(&g, p.uniform("dz", 0.0, 1.0), (dim / 5) as isize);
        }
        "l_bracket" => {
            let t = cells(p.uniform("bar_t", 0.16, 0.3), dim);
            let vlen = cells(p.uniform("v_len", 0.45, 0.95), dim).min(dim);
            let hlen = cells(p.uniform("h_len", 0.45, 0.95), dim).min(dim);
            let depth = cells(p.uniform("depth", 0.16, 0.45), dim);
            let x0 = (dim - hlen) / 2;
            let ys = centered(depth, dim);
            fill_box(&mut g, x0..x0 + t, ys.clone(), 0..vlen);
            fill_box(&mut g, x0..x0 + hlen, ys, 0..t);
        }
        "h_frame" => {
            let t = cells(p.uniform("bar_t", 0.13, 0.25), dim);
            let h = cells(p.uniform("height", 0.55, 0.95), dim).min(dim);
            let span = cells(p.uniform("span", 0.5, 0.9), dim).min(dim);
            // crossbar center as a fraction of the post height
            let bar_z = p.uniform("bar_z", 0.25, 0.7);
            let x0 = (dim - span) / 2;
            let ys = centered(t, dim);
            fill_box(&mut g, x0..x0 + t, ys.clone(), 0..h);
            fill_box(&mut g, x0 + span - t..x0 + span, ys.clone(), 0..h);
            let mid = ((bar_z * h as f64) as usize).min(h.saturating_sub(t));
            fill_box(&mut g, x0..x0 + span, ys, mid..mid + t);
        }
        "ring" => {
            let outer = cells(p.uniform("outer", 0.5, 0.9), dim).min(dim);
            let t = cells(p.uniform("band_t", 0.12, 0.22), dim).max(2).min(outer / 2);
            let depth = cells(p.uniform("depth", 0.12, 0.3), dim).max(2);
            let xs = centered(outer, dim);
            let zs = centered(outer, dim);
            let ys = centered(depth, dim);
            fill_box(&mut g, xs.clone(), ys.clone(), zs.clone());
            // carve the hole, keeping a band of thickness t
            if outer > 2 * t {
                for x in xs.start + t..xs.end - t {
                    for y in ys.clone() {
                        for z in zs.start + t..zs.end - t {
                            g.set(x, y, z, 0.0);
                        }
                    }
                }
            }
            g = lift(&g, p.uniform("dz", 0.0, 1.0), (dim / 5) as isize);
        }
        "ellipsoid" => {
            let ax = p.uniform("ax", 0.18, 0.48) * dim as f64;
            let ay = p.uniform("ay", 0.18, 0.48) * dim as f64;
            let az = p.uniform("az", 0.18, 0.48) * dim as f64;
            let c = dim as f64 / 2.0;
            for x in 0..dim {
                for y in 0..dim {
                    for z in 0..dim {
                        let dx = (x as f64 + 0.5 - c) / ax;
                        let dy = (y as f64 + 0.5 - c) / ay;
                        let dz = (z as f64 + 0.5 - c) / az;
                        if dx * dx + dy * dy + dz * dz <= 1.0 {
                            g.set(x, y, z, 1.0);
                        }
                    }
                }
            }
            g = lift(&g, p.uniform("dz", 0.0, 1.0), (dim / 5) as isize);
        }
        other => return Err(Error::UnknownCategory(other.to_string())),
    }
    Ok(g)
}

pub fn is_known_category(name: &str) -> bool {
    BASE_CATEGORIES.contains(&name) || NOVEL_CATEGORIES.contains(&name)
}

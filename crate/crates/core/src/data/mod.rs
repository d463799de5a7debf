//! Procedural synthetic dataset: parametric voxel shapes per category, an
//! orthographic depth-shaded renderer, split management, and the on-disk
//! formats (VOXL1 voxel files, P6 PPM views, JSON manifest).

mod grid;
mod io;
mod manifest;
mod render;
mod shapes;

pub use grid::VoxelGrid;
pub use io::{load_image_tensor, load_ppm, load_voxel, save_ppm, save_voxel};
pub use manifest::{
    build_dataset, CategoryEntry, CategoryRole, DatasetConfig, DatasetManifest, InstanceEntry,
    Split, ViewEntry, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION,
};
pub use render::{render, RenderedView};
pub use shapes::{generate_shape, ShapeSpec, BASE_CATEGORIES, NOVEL_CATEGORIES};

/// FNV-1a over bytes; used for cheap reproducibility digests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

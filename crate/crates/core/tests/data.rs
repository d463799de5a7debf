//! Shape generators, the renderer, file formats, and dataset builds.

mod support;

use tempfile::tempdir;
use voxelprior::data::{
    self, build_dataset, generate_shape, load_ppm, load_voxel, render, save_ppm, save_voxel,
    CategoryRole, DatasetConfig, ShapeSpec, Split, VoxelGrid, BASE_CATEGORIES, NOVEL_CATEGORIES,
};
use voxelprior::Tensor;

#[test]
fn grid_rejects_out_of_range_values() {
    assert!(VoxelGrid::new(2, vec![0.0; 8]).is_ok());
    assert!(VoxelGrid::new(2, vec![1.5; 8]).is_err());
    assert!(VoxelGrid::new(2, vec![-0.1; 8]).is_err());
    assert!(VoxelGrid::new(2, vec![0.0; 7]).is_err());
}

#[test]
fn grid_layout_is_z_fastest() {
    let mut g = VoxelGrid::zeros(4);
    g.set(1, 2, 3, 1.0);
    assert_eq!(g.values()[(1 * 4 + 2) * 4 + 3], 1.0);
    assert_eq!(g.get(1, 2, 3), 1.0);
}

#[test]
fn connectivity_flood_fill() {
    let mut g = VoxelGrid::zeros(4);
    g.set(0, 0, 0, 1.0);
    g.set(0, 0, 1, 1.0);
    assert!(g.is_connected());
    g.set(3, 3, 3, 1.0); // diagonal-only contact does not count
    assert!(!g.is_connected());
}

#[test]
fn all_generators_produce_valid_connected_shapes() {
    for category in BASE_CATEGORIES.iter().chain(NOVEL_CATEGORIES.iter()) {
        for seed in 0..30 {
            let g = generate_shape(&ShapeSpec::new(*category, seed), 16).unwrap();
            assert!(g.is_binary(), "{} seed {} not binary", category, seed);
            let occ = g.occupied_fraction();
            assert!(
                (0.02..=0.6).contains(&occ),
                "{} seed {} occupancy {}",
                category,
                seed,
                occ
            );
            assert!(g.is_connected(), "{} seed {} disconnected", category, seed);
        }
    }
}

#[test]
fn generators_are_deterministic() {
    let a = generate_shape(&ShapeSpec::new("chair", 9), 16).unwrap();
    let b = generate_shape(&ShapeSpec::new("chair", 9), 16).unwrap();
    assert_eq!(a.values(), b.values());
}

#[test]
fn unknown_category_rejected() {
    assert!(generate_shape(&ShapeSpec::new("pyramid", 0), 16).is_err());
}

#[test]
fn box_with_full_extents_is_block_with_margin() {
    let spec = ShapeSpec::new("box", 0)
        .with_param("ex", 1.0)
        .with_param("ey", 1.0)
        .with_param("ez", 1.0);
    let g = generate_shape(&spec, 16).unwrap();
    for x in 0..16 {
        for y in 0..16 {
            for z in 0..16 {
                let inside = (1..15).contains(&x) && (1..15).contains(&y) && (1..15).contains(&z);
                assert_eq!(g.get(x, y, z) > 0.5, inside, "at ({},{},{})", x, y, z);
            }
        }
    }
}

fn bounding_extents(g: &VoxelGrid) -> [usize; 3] {
    let d = g.dim();
    let (mut lo, mut hi) = ([d; 3], [0usize; 3]);
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                if g.get(x, y, z) > 0.5 {
                    for (i, c) in [x, y, z].iter().enumerate() {
                        lo[i] = lo[i].min(*c);
                        hi[i] = hi[i].max(*c);
                    }
                }
            }
        }
    }
    [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1]
}

#[test]
fn rod_axis_ratio_at_least_three() {
    for seed in 0..30 {
        let g = generate_shape(&ShapeSpec::new("rod", seed), 16).unwrap();
        let e = bounding_extents(&g);
        let longest = *e.iter().max().unwrap() as f64;
        let shortest = *e.iter().min().unwrap() as f64;
        assert!(longest / shortest >= 3.0, "seed {} extents {:?}", seed, e);
    }
}

#[test]
fn table_occupancy_over_100_samples() {
    for seed in 0..100 {
        let occ = generate_shape(&ShapeSpec::new("table", seed), 16)
            .unwrap()
            .occupied_fraction();
        assert!((0.02..=0.6).contains(&occ), "seed {} occupancy {}", seed, occ);
    }
}

#[test]
fn render_empty_grid_is_black() {
    let img = render(&VoxelGrid::zeros(16), 123.0, 30.0, 32).image;
    assert_eq!(img.shape(), &[3, 32, 32]);
    assert!(img.data().iter().all(|&v| v == 0.0));
}

#[test]
fn render_values_in_unit_range_with_identical_channels() {
    let g = generate_shape(&ShapeSpec::new("chair", 1), 16).unwrap();
    let img = render(&g, 42.0, 25.0, 32).image;
    assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    let plane = 32 * 32;
    assert_eq!(img.data()[..plane], img.data()[plane..2 * plane]);
    assert_eq!(img.data()[..plane], img.data()[2 * plane..]);
}

#[test]
fn render_solid_block_is_centered_bright_square() {
    let mut solid = VoxelGrid::zeros(16);
    for x in 4..12 {
        for y in 4..12 {
            for z in 4..12 {
                solid.set(x, y, z, 1.0);
            }
        }
    }
    let size = 64;
    let img = render(&solid, 0.0, 0.0, size).image;
    let px = |x: usize, y: usize| img.data()[y * size + x];
    assert!(px(size / 2, size / 2) > 0.5);
    assert!(px(1, 1) == 0.0 && px(size - 2, size - 2) == 0.0);
    // silhouette is centrally symmetric
    for y in 0..size {
        for x in 0..size {
            let a = px(x, y) > 0.0;
            let b = px(size - 1 - x, size - 1 - y) > 0.0;
            assert_eq!(a, b, "asymmetric at ({},{})", x, y);
        }
    }
}

#[test]
fn rod_side_view_covers_more_pixels_than_end_view() {
    let rod = generate_shape(&ShapeSpec::new("rod", 5), 16).unwrap();
    let count = |t: &Tensor| t.data().iter().filter(|&&v| v > 0.0).count();
    // long axis pinned to x, so azimuth 90 sees the side, azimuth 0 the end
    let side = count(&render(&rod, 90.0, 10.0, 64).image);
    let end = count(&render(&rod, 0.0, 10.0, 64).image);
    assert!(side > end, "side {} end {}", side, end);
}

/// Rotate occupancy 90 degrees about the vertical axis: (x,y) -> (y, d-1-x).
fn rotate90_z(g: &VoxelGrid) -> VoxelGrid {
    let d = g.dim();
    let mut out = VoxelGrid::zeros(d);
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                out.set(y, d - 1 - x, z, g.get(x, y, z));
            }
        }
    }
    out
}

#[test]
fn render_is_rotation_consistent() {
    let g = generate_shape(&ShapeSpec::new("chair", 3), 16).unwrap();
    let rotated = rotate90_z(&g);
    for az in [0.0, 33.0, 120.0, 251.0] {
        let a = render(&rotated, az, 25.0, 64).image;
        let b = render(&g, az + 90.0, 25.0, 64).image;
        let mean_abs: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / a.len() as f64;
        assert!(mean_abs < 0.05, "azimuth {}: diff {}", az, mean_abs);
    }
}

#[test]
fn voxel_file_round_trip() {
    let dir = tempdir().unwrap();
    let g = generate_shape(&ShapeSpec::new("tower", 2), 16).unwrap();
    let path = dir.path().join("g.voxl");
    save_voxel(&g, &path).unwrap();
    let loaded = load_voxel(&path).unwrap();
    assert_eq!(g.values(), loaded.values());
}

#[test]
fn truncated_voxel_file_names_byte_counts() {
    let dir = tempdir().unwrap();
    let g = VoxelGrid::zeros(8);
    let path = dir.path().join("g.voxl");
    save_voxel(&g, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 10);
    let bad = dir.path().join("bad.voxl");
    std::fs::write(&bad, &bytes).unwrap();
    let msg = load_voxel(&bad).unwrap_err().to_string();
    assert!(msg.contains("expected") && msg.contains("byte"), "{}", msg);
}

#[test]
fn foreign_magic_rejected() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("bad.voxl");
    std::fs::write(&path, b"LXOV1junkjunkjunk").unwrap();
    assert!(load_voxel(&path).is_err());
}

#[test]
fn ppm_round_trip_within_quantization() {
    let dir = tempdir().unwrap();
    let g = generate_shape(&ShapeSpec::new("cross", 4), 16).unwrap();
    let img = render(&g, 70.0, 20.0, 32).image;
    let path = dir.path().join("view.ppm");
    save_ppm(&img, &path).unwrap();
    let loaded = load_ppm(&path).unwrap();
    assert_eq!(loaded.shape(), img.shape());
    for (&a, &b) in img.data().iter().zip(loaded.data()) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
    }
}

fn small_config(seed: u64) -> DatasetConfig {
    DatasetConfig {
        base_categories: vec!["box".into()],
        novel_categories: vec!["rod".into()],
        instances_per_category: 20,
        views_per_instance: 3,
        voxel_dim: 8,
        image_size: 16,
        seed,
    }
}

#[test]
fn build_dataset_split_views_and_roles() {
    let dir = tempdir().unwrap();
    let manifest = build_dataset(&small_config(7), dir.path()).unwrap();
    assert_eq!(manifest.categories.len(), 2);
    for cat in &manifest.categories {
        assert_eq!(cat.instances.len(), 20);
        let count = |s: Split| cat.instances.iter().filter(|i| i.split == s).count();
        assert_eq!(count(Split::Train), 15);
        assert_eq!(count(Split::Val), 1);
        assert_eq!(count(Split::Test), 4);
        for inst in &cat.instances {
            assert_eq!(inst.views.len(), 3);
            for view in &inst.views {
                assert!((0.0..360.0).contains(&view.azimuth));
                assert!((10.0..=50.0).contains(&view.elevation));
                assert!(manifest.resolve(&view.path).exists());
            }
            let g = load_voxel(&manifest.resolve(&inst.voxel_path)).unwrap();
            assert!(g.is_binary());
        }
    }
    assert_eq!(manifest.category("box").unwrap().role, CategoryRole::Base);
    assert_eq!(manifest.category("rod").unwrap().role, CategoryRole::Novel);
}

#[test]
fn build_dataset_hundred_instances_split_75_5_20() {
    let dir = tempdir().unwrap();
    let mut config = small_config(1);
    config.novel_categories.clear();
    config.instances_per_category = 100;
    config.views_per_instance = 1;
    config.image_size = 8;
    let manifest = build_dataset(&config, dir.path()).unwrap();
    let cat = manifest.category("box").unwrap();
    let count = |s: Split| cat.instances.iter().filter(|i| i.split == s).count();
    assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (75, 5, 20));
}

#[test]
fn build_dataset_is_deterministic_per_seed() {
    let d1 = tempdir().unwrap();
    let d2 = tempdir().unwrap();
    let a = build_dataset(&small_config(11), d1.path()).unwrap();
    let b = build_dataset(&small_config(11), d2.path()).unwrap();
    assert_eq!(a.digest(), b.digest());
    let c = build_dataset(&small_config(12), tempdir().unwrap().path()).unwrap();
    assert_ne!(a.digest(), c.digest());
}

#[test]
fn build_dataset_rejects_tiny_instance_counts() {
    let mut config = small_config(0);
    config.instances_per_category = 10;
    assert!(build_dataset(&config, tempdir().unwrap().path()).is_err());
}

#[test]
fn manifest_round_trip_via_disk() {
    let dir = tempdir().unwrap();
    let manifest = build_dataset(&small_config(3), dir.path()).unwrap();
    let loaded =
        data::DatasetManifest::load(&dir.path().join(data::MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.digest(), loaded.digest());
}

#[test]
fn fnv_digest_reference_values() {
    // published FNV-1a 64 test vectors
    assert_eq!(data::fnv1a64(b""), 0xcbf29ce484222325);
    assert_eq!(data::fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    assert_eq!(data::fnv1a64(b"foobar"), 0x85944171f73967e8);
}

//! gen-data: build the procedural dataset under <run dir>/dataset/.

use super::CmdResult;
use crate::config::ResolvedConfig;
use crate::rundir::RunDir;
use voxelprior::data::{build_dataset, DatasetConfig, MANIFEST_FILE};

pub fn run(
    resolved: &ResolvedConfig,
    run_dir: &RunDir,
    instances: Option<usize>,
    views: Option<usize>,
) -> CmdResult {
    let config = DatasetConfig {
        base_categories: resolved.dataset.base_categories.clone(),
        novel_categories: resolved.dataset.novel_categories.clone(),
        instances_per_category: instances.unwrap_or(resolved.dataset.instances),
        views_per_instance: views.unwrap_or(resolved.dataset.views),
        voxel_dim: resolved.dataset.voxel_dim,
        image_size: resolved.dataset.image_size,
        seed: resolved.seed,
    };
    let root = run_dir.join("dataset");
    let manifest = build_dataset(&config, &root)?;
    let digest = manifest.digest();
    run_dir.write_text("digest.txt", &format!("{:016x}\n", digest))?;

    let shapes: usize = manifest.categories.iter().map(|c| c.instances.len()).sum();
    println!(
        "dataset: {} categories, {} instances, manifest digest {:016x}",
        manifest.categories.len(),
        shapes,
        digest
    );
    Ok(vec![
        format!("dataset/{}", MANIFEST_FILE),
        "digest.txt".to_string(),
    ])
}

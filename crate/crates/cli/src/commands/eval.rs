//! eval-fewshot / eval-multiview / eval-ablations: run the evaluation
//! suites against trained checkpoints and write CSV + JSON reports.

use std::path::Path;

use serde::Serialize;

use super::{load_manifest, load_model, CmdResult};
use crate::config::ResolvedConfig;
use crate::rundir::RunDir;
use voxelprior::data::{CategoryRole, Split};
use voxelprior::eval::{
    ablation_suite, fewshot_experiment, kshot_variability, multiview_experiment, AblationConfig,
    EvalReport, FewshotConfig, KValue, MultiviewConfig,
};
use voxelprior::Error;

fn write_report(run_dir: &RunDir, report: &EvalReport, stem: &str) -> CmdResult {
    let csv = format!("{}.csv", stem);
    let json = format!("{}.json", stem);
    report.write_csv(&run_dir.join(&csv))?;
    report.write_json_summary(&run_dir.join(&json))?;
    Ok(vec![csv, json])
}

fn print_means(report: &EvalReport) {
    for model in report.models() {
        for condition in report.conditions(&model) {
            if let Some(mean) = report.overall_mean(&model, &condition) {
                println!("{} {} mean IoU {:.4}", model, condition, mean);
            }
        }
    }
}

pub fn fewshot(
    resolved: &ResolvedConfig,
    run_dir: &RunDir,
    data: &Path,
    model_dirs: &[std::path::PathBuf],
    k_flags: &[usize],
    views: Option<usize>,
) -> CmdResult {
    let manifest = load_manifest(data)?;
    let models: Vec<_> = model_dirs
        .iter()
        .map(|d| load_model(d))
        .collect::<Result<_, _>>()?;

    let ks: &[usize] = if k_flags.is_empty() { &resolved.eval.k } else { k_flags };
    let mut k_values: Vec<KValue> = ks.iter().map(|&k| KValue::K(k)).collect();
    if resolved.eval.include_full {
        k_values.push(KValue::Full);
    }
    let config = FewshotConfig {
        k_values,
        seeds: resolved.eval.seeds.clone(),
        views_per_instance: views.unwrap_or(resolved.eval.views),
        iou_threshold: resolved.eval.iou_threshold,
    };
    let report = fewshot_experiment(&models, &manifest, &config)?;
    print_means(&report);
    let seeds: Vec<String> = config.seeds.iter().map(|s| s.to_string()).collect();
    write_report(run_dir, &report, &format!("fewshot_seeds{}", seeds.join("-")))
}

pub fn multiview(
    resolved: &ResolvedConfig,
    run_dir: &RunDir,
    data: &Path,
    model_dir: &Path,
    views: Option<usize>,
    role: Option<&str>,
) -> CmdResult {
    let manifest = load_manifest(data)?;
    let model = load_model(model_dir)?;
    let role = match role.unwrap_or(&resolved.eval.role) {
        "base" => CategoryRole::Base,
        "novel" => CategoryRole::Novel,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown role `{}` (expected base or novel)",
                other
            ))
            .into())
        }
    };
    let config = MultiviewConfig {
        max_views: views.unwrap_or(resolved.eval.views),
        role,
        seed: resolved.seed,
        iou_threshold: resolved.eval.iou_threshold,
    };
    let report = multiview_experiment(&[model], &manifest, &config)?;
    print_means(&report);
    write_report(run_dir, &report, &format!("multiview_seed{}", config.seed))
}

#[derive(Serialize)]
struct Variability {
    category: String,
    instance: usize,
    n: usize,
    sigma_1shot: f64,
    sigma_full: f64,
}

pub fn ablations(
    resolved: &ResolvedConfig,
    run_dir: &RunDir,
    data: &Path,
    model_dir: &Path,
) -> CmdResult {
    let manifest = load_manifest(data)?;
    let model = load_model(model_dir)?;
    let config = AblationConfig {
        seed: resolved.seed,
        iou_threshold: resolved.eval.iou_threshold,
    };
    let report = ablation_suite(&model, &manifest, &config)?;
    print_means(&report);
    let mut files = write_report(run_dir, &report, &format!("ablations_seed{}", config.seed))?;

    // 1-shot spread on one fixed novel test pair, n distinct single shapes
    let cat = manifest
        .categories_with_role(CategoryRole::Novel)
        .next()
        .ok_or_else(|| Error::MissingInput("manifest has no novel categories".into()))?;
    let inst = manifest
        .instances_in_split(cat, Split::Test)
        .next()
        .ok_or_else(|| Error::MissingInput(format!("test instances in {}", cat.name)))?;
    let n = 10;
    let sigma_1shot = kshot_variability(
        &model,
        &manifest,
        &cat.name,
        inst.id,
        n,
        false,
        config.seed,
        config.iou_threshold,
    )?;
    let sigma_full = kshot_variability(
        &model,
        &manifest,
        &cat.name,
        inst.id,
        n,
        true,
        config.seed,
        config.iou_threshold,
    )?;
    let var = Variability {
        category: cat.name.clone(),
        instance: inst.id,
        n,
        sigma_1shot,
        sigma_full,
    };
    run_dir.write_text(
        "variability.json",
        &serde_json::to_string_pretty(&var).expect("variability serializes"),
    )?;
    println!(
        "1-shot IoU spread on {}/{}: sigma={:.4} (full prior sigma={:.4})",
        var.category, var.instance, sigma_1shot, sigma_full
    );
    files.push("variability.json".to_string());
    Ok(files)
}

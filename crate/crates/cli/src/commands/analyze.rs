//! analyze: read evaluation CSVs back in and emit plotting-ready
//! distribution tables (sorted curves, paired IoUs, low-IoU fractions).

use std::path::{Path, PathBuf};

use super::CmdResult;
use crate::rundir::RunDir;
use voxelprior::eval::{distribution_report, EvalReport, EvalRow};
use voxelprior::Error;

fn parse_report_csv(path: &Path) -> Result<EvalReport, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty report"))?;
    let expected = "experiment,model,condition,category,instance,view,prior_kind,iterations,seed,iou";
    if header != expected {
        return Err(Error::format(
            path,
            format!("unexpected header `{}`", header),
        ));
    }
    let mut experiment = String::new();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::format(path, format!("row {}: expected 10 fields", i + 2)));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::format(path, format!("row {}: bad integer `{}`", i + 2, s)))
        };
        experiment = fields[0].to_string();
        rows.push(EvalRow {
            model: fields[1].to_string(),
            condition: fields[2].to_string(),
            category: fields[3].to_string(),
            instance: parse_usize(fields[4])?,
            view: parse_usize(fields[5])?,
            prior_kind: fields[6].to_string(),
            iterations: parse_usize(fields[7])?,
            seed: fields[8]
                .parse()
                .map_err(|_| Error::format(path, format!("row {}: bad seed", i + 2)))?,
            iou: fields[9]
                .parse()
                .map_err(|_| Error::format(path, format!("row {}: bad iou", i + 2)))?,
        });
    }
    let mut report = EvalReport::new(experiment, 0);
    report.rows = rows;
    Ok(report)
}

/// Slice one (model, condition) out of a possibly mixed report; the
/// distribution analysis wants exactly one model and condition per input.
fn slice(report: &EvalReport, model: &str, condition: &str) -> EvalReport {
    let mut out = EvalReport::new(report.experiment.clone(), report.config_digest);
    out.rows = report
        .rows
        .iter()
        .filter(|r| r.model == model && r.condition == condition)
        .cloned()
        .collect();
    out
}

pub fn run(run_dir: &RunDir, reports: &[PathBuf], condition: Option<&str>) -> CmdResult {
    let mut slices = Vec::new();
    for path in reports {
        let full = parse_report_csv(path)?;
        for model in full.models() {
            let conditions = full.conditions(&model);
            let picked = match condition {
                Some(c) if conditions.iter().any(|x| x == c) => c.to_string(),
                Some(_) => continue, // this model was not run under that condition
                None if conditions.len() == 1 => conditions[0].clone(),
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "model {} in {} has conditions {:?}; pick one with --condition",
                        model,
                        path.display(),
                        conditions
                    ))
                    .into())
                }
            };
            slices.push(slice(&full, &model, &picked));
        }
    }
    if slices.is_empty() {
        return Err(Error::MissingInput("no report rows matched the requested condition".into()).into());
    }
    let refs: Vec<&EvalReport> = slices.iter().collect();
    let dist = distribution_report(&refs)?;
    dist.write_csv(run_dir.path())?;
    for (model, frac) in &dist.frac_below_point1 {
        println!("{}: {:.1}% of instances below IoU 0.1", model, frac * 100.0);
    }
    Ok(vec![
        "sorted_curves.csv".to_string(),
        "paired_ious.csv".to_string(),
        "frac_below.csv".to_string(),
    ])
}

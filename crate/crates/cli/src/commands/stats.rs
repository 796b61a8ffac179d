use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::ValueEnum;
use serde::Serialize;
use texnet::eval::{
    cd_diagram, friedman_ranks, nemenyi_cd, Alpha, CdDiagramData, FoldMetrics, MetricsReport,
    RankMatrix,
};

use crate::pipeline::{read_json, write_json};

/// Per-fold score used to rank models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AccuracyPatient,
    AccuracyImage,
}

impl Metric {
    fn of(self, fold: &FoldMetrics) -> f64 {
        match self {
            Metric::AccuracyPatient => fold.accuracy_patient,
            Metric::AccuracyImage => fold.accuracy_image,
        }
    }
}

#[derive(Debug, Serialize)]
struct StatsOutput {
    models: Vec<String>,
    metric: Metric,
    alpha: f64,
    critical_distance: f64,
    #[serde(flatten)]
    ranks: RankMatrix,
}

fn model_names(reports: &[MetricsReport], files: &[PathBuf]) -> Vec<String> {
    let base: Vec<String> = reports
        .iter()
        .map(|r| format!("{} {}x", r.model, r.aug_factor))
        .collect();
    let unique: BTreeSet<&String> = base.iter().collect();
    if unique.len() == base.len() {
        return base;
    }
    base.iter()
        .zip(files)
        .map(|(name, file)| format!("{name} ({})", file.display()))
        .collect()
}

/// Friedman ranks, the Nemenyi critical distance and a CD diagram over
/// several MetricsReport files scored on the same folds.
pub fn run(files: &[PathBuf], alpha: f64, metric: Metric, out: &std::path::Path) -> Result<()> {
    if files.len() < 2 {
        bail!(
            "stats needs at least 2 metrics reports, got {}",
            files.len()
        );
    }
    let alpha = Alpha::try_from(alpha)?;
    let reports: Vec<MetricsReport> = files.iter().map(|f| read_json(f)).collect::<Result<_>>()?;
    let n = reports[0].folds.len();
    for (report, file) in reports.iter().zip(files) {
        if report.folds.len() != n {
            bail!(
                "fold count mismatch: {} has {} folds, {} has {n}",
                file.display(),
                report.folds.len(),
                files[0].display()
            );
        }
    }
    let matrix: Vec<Vec<f64>> = (0..n)
        .map(|f| reports.iter().map(|r| metric.of(&r.folds[f])).collect())
        .collect();
    let ranks = friedman_ranks(&matrix)?;
    let k = reports.len();
    let cd = nemenyi_cd(k, n, alpha)?;
    let models = model_names(&reports, files);

    println!("{k} models over {n} folds, alpha = {}", alpha.value());
    println!(
        "Friedman chi2 = {:.3} (p = {:.4})",
        ranks.friedman_chi2, ranks.friedman_p_value
    );
    let data = CdDiagramData::new(&models, &ranks.average_ranks, cd);
    for &m in &data.order {
        println!("  {:>6.3}  {}", ranks.average_ranks[m], models[m]);
    }
    println!("critical distance CD = {cd:.4}");

    std::fs::create_dir_all(out)?;
    write_json(
        &out.join("ranks.json"),
        &StatsOutput {
            models,
            metric,
            alpha: alpha.value(),
            critical_distance: cd,
            ranks,
        },
    )?;
    write_json(&out.join("cd_diagram.json"), &data)?;
    std::fs::write(out.join("cd_diagram.svg"), cd_diagram(&data))?;
    println!("wrote {}", out.join("cd_diagram.svg").display());
    Ok(())
}

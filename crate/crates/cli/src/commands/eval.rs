use anyhow::{bail, Context, Result};
use texnet::data::{FoldPlan, Role};
use texnet::engine::Precision;
use texnet::eval::{aggregate_folds, FoldMetrics, MetricsReport};
use texnet::model::{build, load_checkpoint};
use texnet::optim::evaluate;

use crate::config::RunConfig;
use crate::pipeline::{fold_dir, image_set, load_data, role_records, write_json};

fn fmt_rate(mean: Option<f64>, sd: Option<f64>) -> String {
    match (mean, sd) {
        (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
        _ => "undefined".to_owned(),
    }
}

/// Scores every fold's checkpoint on that fold's test patients and writes
/// `metrics.json` (a MetricsReport) to the run directory.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let run_dir = cfg.run_dir();
    let run_file = run_dir.join("run.toml");
    if !run_file.exists() {
        bail!(
            "no training run at {} (run `texnet train` first)",
            run_dir.display()
        );
    }
    let trained = RunConfig::from_file(&run_file)?;
    let mut cfg = cfg.clone();
    // network geometry comes from the run; the data location may move
    cfg.input = trained.input;
    cfg.resize_any |= trained.resize_any;
    if cfg.data.is_none() && cfg.manifest.is_none() {
        cfg.data = trained.data;
        cfg.manifest = trained.manifest;
    }

    let plan =
        FoldPlan::load(&run_dir.join("folds.json")).context("reading the run's fold plan")?;
    if let Some(path) = &cfg.plan {
        if FoldPlan::load(path)? != plan {
            bail!(
                "{} differs from the plan the run was trained on",
                path.display()
            );
        }
    }
    let manifest = load_data(&cfg)?;
    plan.validate(&manifest)?;
    let spec = build(cfg.arch).with_input_size(cfg.input.height, cfg.input.width);

    let mut folds = Vec::with_capacity(plan.n_folds());
    for fold in 0..plan.n_folds() {
        let dir = fold_dir(&run_dir, fold);
        let checkpoint = dir.join("model.ckpt");
        if !checkpoint.exists() {
            bail!("missing checkpoint {}", checkpoint.display());
        }
        let test = image_set(&cfg, role_records(&manifest, &plan, fold, Role::Test))?;
        let batch = cfg.train.batch_size;
        let predictions = match cfg.precision {
            Precision::F32 => evaluate(
                &spec,
                &load_checkpoint::<f32>(&checkpoint, &spec)?,
                &test,
                batch,
            )?,
            Precision::F64 => evaluate(
                &spec,
                &load_checkpoint::<f64>(&checkpoint, &spec)?,
                &test,
                batch,
            )?,
        };
        write_json(&dir.join("predictions.json"), &predictions)?;
        let metrics = FoldMetrics::from_predictions(&predictions)?;
        println!(
            "fold {fold}: patient accuracy {:.4}, image accuracy {:.4} ({} images)",
            metrics.accuracy_patient,
            metrics.accuracy_image,
            predictions.len()
        );
        folds.push(metrics);
    }
    let report: MetricsReport = aggregate_folds(cfg.arch.as_str(), cfg.aug, folds)?;
    let (m, s) = (&report.mean, &report.sd);
    println!(
        "{} {}x over {} folds:",
        report.model, report.aug_factor, report.n_folds
    );
    println!(
        "  patient-level accuracy       {:.3} ± {:.3}",
        m.accuracy_patient, s.accuracy_patient
    );
    println!(
        "  image-level accuracy         {:.3} ± {:.3}",
        m.accuracy_image, s.accuracy_image
    );
    println!(
        "  sensitivity (images)         {}",
        fmt_rate(m.sensitivity, s.sensitivity)
    );
    println!(
        "  specificity (images)         {}",
        fmt_rate(m.specificity, s.specificity)
    );
    println!(
        "  sensitivity (patient means)  {}",
        fmt_rate(m.patient_sensitivity, s.patient_sensitivity)
    );
    println!(
        "  specificity (patient means)  {}",
        fmt_rate(m.patient_specificity, s.patient_specificity)
    );
    let path = run_dir.join("metrics.json");
    write_json(&path, &report)?;
    println!("wrote {}", path.display());
    Ok(())
}

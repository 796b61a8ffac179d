use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use texnet::augment::AugmentedSet;
use texnet::data::{FoldPlan, Manifest, Role};
use texnet::engine::{Precision, Scalar};
use texnet::model::{build, init_parameters, save_checkpoint, NetworkSpec};
use texnet::optim::{fit, ExampleSet, TrainConfig, TrainReport};
use texnet::seed;

use crate::config::RunConfig;
use crate::pipeline::{
    check_memory, fold_dir, image_set, load_data, pin_plan, resolve_plan, role_records, write_json,
};

#[derive(Debug, Serialize)]
struct FoldSummary {
    fold: usize,
    train_items: usize,
    validation_images: usize,
    stopped_epoch: usize,
    best_epoch: usize,
    best_validation_accuracy: f64,
    wall_time_secs: f64,
}

/// Trains one network per fold; writes `fold<k>/model.ckpt` and
/// `fold<k>/train_report.json` under the run directory.
pub fn run(cfg: &RunConfig, folds_given: bool) -> Result<()> {
    cfg.validate()?;
    let spec = build(cfg.arch).with_input_size(cfg.input.height, cfg.input.width);
    spec.validate()?;
    if cfg.memory_check {
        check_memory(cfg, &spec)?;
    }
    let manifest = load_data(cfg)?;
    let plan = resolve_plan(cfg, &manifest, folds_given)?;
    let run_dir = cfg.run_dir();
    std::fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    pin_plan(&run_dir, &plan)?;
    std::fs::write(run_dir.join("run.toml"), toml::to_string(cfg)?)?;

    let n = plan.n_folds();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<FoldSummary>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..cfg.jobs.min(n) {
            s.spawn(|| loop {
                let fold = next.fetch_add(1, Ordering::SeqCst);
                if fold >= n {
                    break;
                }
                let outcome = train_fold(cfg, &spec, &manifest, &plan, fold);
                if let Err(e) = &outcome {
                    log::error!("fold {fold} failed: {e:#}");
                }
                results.lock().expect("no worker panicked holding the lock")[fold] = Some(outcome);
            });
        }
    });

    let mut summaries = Vec::with_capacity(n);
    for (fold, outcome) in results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .enumerate()
    {
        let summary = outcome
            .ok_or_else(|| anyhow!("fold {fold} did not run"))?
            .with_context(|| format!("training fold {fold}"))?;
        println!(
            "fold {fold}: stopped at epoch {:>3}, best epoch {:>3}, validation accuracy {:.4} ({:.0}s)",
            summary.stopped_epoch, summary.best_epoch, summary.best_validation_accuracy, summary.wall_time_secs
        );
        summaries.push(summary);
    }
    write_json(&run_dir.join("train_summary.json"), &summaries)?;
    println!("wrote checkpoints under {}", run_dir.display());
    Ok(())
}

fn train_fold(
    cfg: &RunConfig,
    spec: &NetworkSpec,
    manifest: &Manifest,
    plan: &FoldPlan,
    fold: usize,
) -> Result<FoldSummary> {
    match cfg.precision {
        Precision::F32 => train_fold_as::<f32>(cfg, spec, manifest, plan, fold),
        Precision::F64 => train_fold_as::<f64>(cfg, spec, manifest, plan, fold),
    }
}

fn train_fold_as<T: Scalar>(
    cfg: &RunConfig,
    spec: &NetworkSpec,
    manifest: &Manifest,
    plan: &FoldPlan,
    fold: usize,
) -> Result<FoldSummary> {
    let path = [fold as u64];
    let originals = image_set(cfg, role_records(manifest, plan, fold, Role::Train))?;
    let validation = image_set(cfg, role_records(manifest, plan, fold, Role::Validation))?;
    let train = AugmentedSet::new(
        &originals,
        &cfg.augment_config(seed::derive(cfg.seed, seed::AUGMENT, &path)),
    )?;
    log::info!(
        "fold {fold}: {} training items ({} images x{}), {} validation images",
        train.len(),
        originals.len(),
        cfg.aug,
        validation.len()
    );
    let mut store = init_parameters::<T>(spec, seed::derive(cfg.seed, seed::INIT, &path));
    let train_cfg = TrainConfig {
        seed: seed::derive(cfg.seed, seed::SHUFFLE, &path),
        ..cfg.train
    };
    let report: TrainReport = fit(spec, &mut store, &train, &validation, &train_cfg)?;
    let dir = fold_dir(&cfg.run_dir(), fold);
    std::fs::create_dir_all(&dir)?;
    save_checkpoint(&dir.join("model.ckpt"), spec, &store)?;
    write_json(&dir.join("train_report.json"), &report)?;
    Ok(FoldSummary {
        fold,
        train_items: train.len(),
        validation_images: validation.len(),
        stopped_epoch: report.stopped_epoch,
        best_epoch: report.best_epoch,
        best_validation_accuracy: report.best_validation_accuracy,
        wall_time_secs: report.wall_time_secs,
    })
}

//! Steps shared by several commands: loading data, resolving fold plans,
//! building per-role sets and writing artifacts.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use texnet::data::{
    filter_magnification, load_manifest, make_folds, FoldPlan, ImageRecord, ImageSet, LoadOptions,
    Manifest, Role, SplitConfig,
};
use texnet::engine::Precision;
use texnet::model::{LayerKind, NetworkSpec};

use crate::config::RunConfig;

/// Manifest restricted to the configured magnification.
pub fn load_data(cfg: &RunConfig) -> Result<Manifest> {
    let source = match (&cfg.data, &cfg.manifest) {
        (Some(dir), _) => dir,
        (None, Some(csv)) => csv,
        (None, None) => bail!("no data source: pass --data <dir> or --manifest <csv>"),
    };
    let all = load_manifest(source, LoadOptions::default())
        .with_context(|| format!("loading data from {}", source.display()))?;
    let manifest = filter_magnification(&all, cfg.mag);
    if manifest.is_empty() {
        bail!(
            "no {}x images found in {} ({} images at other magnifications)",
            cfg.mag.factor(),
            source.display(),
            all.len()
        );
    }
    log::info!(
        "{} images from {} patients at {}x",
        manifest.len(),
        manifest.num_patients(),
        cfg.mag.factor()
    );
    Ok(manifest)
}

pub fn split_config(cfg: &RunConfig) -> SplitConfig {
    SplitConfig {
        n_folds: cfg.folds,
        ..SplitConfig::default()
    }
}

/// The plan named by `--plan`, or a fresh one drawn from `--seed`.
pub fn resolve_plan(cfg: &RunConfig, manifest: &Manifest, folds_given: bool) -> Result<FoldPlan> {
    let plan = match &cfg.plan {
        Some(path) => {
            let plan = FoldPlan::load(path)
                .with_context(|| format!("reading fold plan {}", path.display()))?;
            if folds_given && plan.n_folds() != cfg.folds {
                bail!(
                    "fold plan {} has {} folds but --folds {} was requested",
                    path.display(),
                    plan.n_folds(),
                    cfg.folds
                );
            }
            plan
        }
        None => make_folds(manifest, &split_config(cfg), cfg.seed)?,
    };
    plan.validate(manifest).context(
        "the fold plan does not match the data (was it made for another dataset or magnification?)",
    )?;
    Ok(plan)
}

/// Stores `plan` in `run_dir`, refusing to mix folds from different plans.
pub fn pin_plan(run_dir: &Path, plan: &FoldPlan) -> Result<()> {
    let path = run_dir.join("folds.json");
    if path.exists() {
        let existing = FoldPlan::load(&path)?;
        if existing != *plan {
            bail!(
                "{} was trained on a different fold plan; use another --out or pass --plan {}",
                run_dir.display(),
                path.display()
            );
        }
        return Ok(());
    }
    plan.save(&path)?;
    Ok(())
}

pub fn role_records(
    manifest: &Manifest,
    plan: &FoldPlan,
    fold: usize,
    role: Role,
) -> Vec<ImageRecord> {
    let patients = plan.folds[fold].role_set(role);
    manifest.select_patients(&patients).cloned().collect()
}

pub fn image_set(cfg: &RunConfig, records: Vec<ImageRecord>) -> Result<ImageSet> {
    if cfg.cache_images {
        Ok(ImageSet::cached(records, cfg.image_options())?)
    } else {
        Ok(ImageSet::new(records, cfg.image_options()))
    }
}

pub fn fold_dir(run_dir: &Path, fold: usize) -> PathBuf {
    run_dir.join(format!("fold{fold}"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Rough training footprint of one batch: activations, their gradients and
/// the largest im2col buffer.
pub fn training_bytes(spec: &NetworkSpec, batch: usize, precision: Precision) -> Result<u64> {
    let shapes = spec.shape_trace()?;
    let activations: usize =
        spec.input_feature_shape().len() + shapes.iter().map(|s| s.len()).sum::<usize>();
    let im2col = spec
        .layers
        .iter()
        .zip(&shapes)
        .filter_map(|(layer, out)| match (layer.kind, out.dims().as_slice()) {
            (LayerKind::Conv2d(g), [h, w, _]) => {
                Some(g.kernel_h * g.kernel_w * g.in_channels * h * w)
            }
            _ => None,
        })
        .max()
        .unwrap_or(0);
    Ok(((2 * activations + im2col) * batch * precision.byte_width()) as u64)
}

pub fn available_memory() -> Option<u64> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kib: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024)
}

const GIB: f64 = (1u64 << 30) as f64;

/// Fails with sizing advice when the estimated footprint exceeds free memory.
pub fn check_memory(cfg: &RunConfig, spec: &NetworkSpec) -> Result<()> {
    let need = training_bytes(spec, cfg.train.batch_size, cfg.precision)? * cfg.jobs as u64;
    log::info!("estimated activation memory: {:.2} GiB", need as f64 / GIB);
    let Some(free) = available_memory() else {
        return Ok(());
    };
    if need > free {
        bail!(
            "training {} at {} with --batch {} and --jobs {} needs about {:.1} GiB of activation memory, \
             but only {:.1} GiB is available.\n\
             Try a smaller --batch (e.g. 8), a lower --input (e.g. 115x175 with --resize-any), \
             --precision f32, or --jobs 1. Pass --no-memory-check to try anyway.",
            cfg.arch,
            cfg.input,
            cfg.train.batch_size,
            cfg.jobs,
            need as f64 / GIB,
            free as f64 / GIB
        );
    }
    Ok(())
}

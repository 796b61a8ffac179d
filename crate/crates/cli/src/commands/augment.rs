use std::path::Path;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;
use texnet::augment::{apply_affine, augment_dataset, AugmentedRecord};
use texnet::data::{load_image, save_png, Role};
use texnet::seed;

use crate::config::RunConfig;
use crate::pipeline::{load_data, resolve_plan, role_records, write_json};

#[derive(Debug, Serialize)]
struct AugmentationPlan {
    fold: usize,
    factor: usize,
    seed: u64,
    originals: usize,
    items: Vec<AugmentedRecord>,
}

/// Writes each fold's training-role expansion (parameters only) and, with
/// `preview`, renders the first `preview` items as PNG files.
pub fn run(
    cfg: &RunConfig,
    folds_given: bool,
    only_fold: Option<usize>,
    preview: usize,
) -> Result<()> {
    cfg.validate()?;
    let manifest = load_data(cfg)?;
    let plan = resolve_plan(cfg, &manifest, folds_given)?;
    let folds: Vec<usize> = match only_fold {
        Some(f) if f >= plan.n_folds() => bail!(
            "--fold {f} is out of range (plan has {} folds)",
            plan.n_folds()
        ),
        Some(f) => vec![f],
        None => (0..plan.n_folds()).collect(),
    };
    let dir = cfg.out.join(format!("augment_aug{}", cfg.aug));
    for fold in folds {
        let records = role_records(&manifest, &plan, fold, Role::Train);
        let fold_seed = seed::derive(cfg.seed, seed::AUGMENT, &[fold as u64]);
        let items = augment_dataset(&records, &cfg.augment_config(fold_seed))?;
        println!(
            "fold {fold}: {} training images x{} = {} items",
            records.len(),
            cfg.aug,
            items.len()
        );
        if preview > 0 {
            let out = dir.join(format!("fold{fold}_preview"));
            render(cfg, &items[..preview.min(items.len())], &out)?;
            println!(
                "  rendered {} previews to {}",
                preview.min(items.len()),
                out.display()
            );
        }
        write_json(
            &dir.join(format!("fold{fold}.json")),
            &AugmentationPlan {
                fold,
                factor: cfg.aug,
                seed: fold_seed,
                originals: records.len(),
                items,
            },
        )?;
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn render(cfg: &RunConfig, items: &[AugmentedRecord], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let options = cfg.image_options();
    items.par_iter().try_for_each(|item| -> Result<()> {
        let image = load_image(&item.record.path, &options)?;
        let stem = item
            .record
            .path
            .file_stem()
            .map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
        save_png(
            &apply_affine(&image, &item.params)?,
            &out.join(format!("{stem}_aug{}.png", item.variant)),
        )?;
        Ok(())
    })
}

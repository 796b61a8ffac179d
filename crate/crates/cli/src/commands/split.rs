use anyhow::Result;
use texnet::data::Role;

use crate::config::RunConfig;
use crate::pipeline::{load_data, split_config, write_json};

/// Writes a patient-wise fold plan to `--plan` (default `<out>/folds.json`).
pub fn run(cfg: &RunConfig) -> Result<()> {
    let manifest = load_data(cfg)?;
    let plan = texnet::data::make_folds(&manifest, &split_config(cfg), cfg.seed)?;
    let path = cfg
        .plan
        .clone()
        .unwrap_or_else(|| cfg.out.join("folds.json"));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    plan.validate(&manifest)?;
    plan.save(&path)?;

    println!("fold  train  validation  test   (patients; images)");
    let mut summary = Vec::new();
    for (f, fold) in plan.folds.iter().enumerate() {
        let count = |role: Role| {
            let patients = fold.role_set(role);
            (patients.len(), manifest.select_patients(&patients).count())
        };
        let (tr, va, te) = (
            count(Role::Train),
            count(Role::Validation),
            count(Role::Test),
        );
        println!(
            "{f:>4}  {:>2}; {:>5}  {:>2}; {:>5}  {:>2}; {:>5}",
            tr.0, tr.1, va.0, va.1, te.0, te.1
        );
        summary.push(serde_json::json!({
            "fold": f,
            "patients": {"train": tr.0, "validation": va.0, "test": te.0},
            "images": {"train": tr.1, "validation": va.1, "test": te.1},
        }));
    }
    write_json(&path.with_file_name("folds_summary.json"), &summary)?;
    println!("wrote {}", path.display());
    Ok(())
}

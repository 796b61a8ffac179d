//! End-to-end runs of the `texnet` binary on a tiny synthetic dataset.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use texnet::data::save_png;
use texnet::engine::Tensor;

fn texnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_texnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env("TEXNET_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = texnet(args);
    assert!(
        out.status.success(),
        "texnet {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = texnet(args);
    assert!(
        !out.status.success(),
        "texnet {args:?} unexpectedly succeeded"
    );
    String::from_utf8(out.stderr).unwrap()
}

/// 4 benign and 8 malignant patients, 2 images each at 200x and one at 40x.
fn dataset(root: &Path) -> PathBuf {
    let dir = root.join("data");
    std::fs::create_dir_all(&dir).unwrap();
    for p in 0..12 {
        let (class, subtype, level) = if p < 4 {
            ("B", "A", 0.2)
        } else {
            ("M", "DC", 0.8)
        };
        for (mag, seq) in [(200, 1), (200, 2), (40, 1)] {
            let value = level + 0.05 * seq as f32;
            let image = Tensor::filled(&[20, 24, 3], value);
            let name = format!("SOB_{class}_{subtype}-14-{p:04}-{mag}-{seq:03}.png");
            save_png(&image, &dir.join(name)).unwrap();
        }
    }
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 10] = [
    "--input",
    "12x12",
    "--resize-any",
    "--epochs",
    "3",
    "--patience",
    "1",
    "--batch",
    "4",
    "--no-cache",
];

#[test]
fn params_table_and_json() {
    let table = ok(&["params"]);
    assert!(table.contains("11,762") && table.contains("1,252,386") && table.contains("512"));
    assert!(table.contains("11,900") && table.contains("1,252,392"));
    let json: serde_json::Value = serde_json::from_str(&ok(&["params", "--json"])).unwrap();
    assert_eq!(json[0]["trainable"], 11_762);
    assert_eq!(json[1]["non_trainable"], 512);
}

#[test]
fn split_is_deterministic_and_reports_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let printed = ok(&["split", "--data", s(&data), "--seed", "3", "--out", s(&a)]);
    ok(&["split", "--data", s(&data), "--seed", "3", "--out", s(&b)]);
    assert_eq!(
        printed
            .lines()
            .filter(|l| l.trim_start().starts_with(char::is_numeric))
            .count(),
        5
    );
    let bytes = |d: &Path| std::fs::read(d.join("folds.json")).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    let plan: serde_json::Value = serde_json::from_slice(&bytes(&a)).unwrap();
    assert_eq!(plan["seed"], 3);
    assert_eq!(plan["folds"].as_array().unwrap().len(), 5);

    let err = fails(&[
        "split",
        "--data",
        s(&tmp.path().join("missing")),
        "--out",
        s(&a),
    ]);
    assert!(err.starts_with("error:"), "{err}");
    let err = fails(&["split", "--out", s(&a)]);
    assert!(err.contains("--data"), "{err}");
}

#[test]
fn factor_validation_and_memory_guidance() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let out = tmp.path().join("out");
    let err = fails(&["train", "--data", s(&data), "--aug", "7", "--out", s(&out)]);
    assert!(
        err.contains("allow_any_factor") || err.contains("factor"),
        "{err}"
    );
    ok(&[
        "augment",
        "--data",
        s(&data),
        "--aug",
        "7",
        "--allow-any-factor",
        "--out",
        s(&out),
    ]);
    ok(&[
        "augment",
        "--data",
        s(&data),
        "--arch",
        "tcnn_inception",
        "--aug",
        "72",
        "--out",
        s(&out),
    ]);

    let err = fails(&[
        "train",
        "--data",
        s(&data),
        "--arch",
        "tcnn_inception",
        "--batch",
        "100000",
        "--out",
        s(&out),
    ]);
    assert!(
        err.contains("--batch") && err.contains("--no-memory-check"),
        "{err}"
    );
}

#[test]
fn augment_counts_and_previews() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let out = tmp.path().join("out");
    ok(&[
        "augment",
        "--data",
        s(&data),
        "--aug",
        "6",
        "--fold",
        "1",
        "--preview",
        "4",
        "--input",
        "12x12",
        "--resize-any",
        "--out",
        s(&out),
    ]);
    let dir = out.join("augment_aug6");
    let plan: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("fold1.json")).unwrap()).unwrap();
    let originals = plan["originals"].as_u64().unwrap();
    assert_eq!(
        plan["items"].as_array().unwrap().len() as u64,
        originals * 6
    );
    let previews = std::fs::read_dir(dir.join("fold1_preview"))
        .unwrap()
        .count();
    assert_eq!(previews, 4);
    assert!(fails(&[
        "augment",
        "--data",
        s(&data),
        "--fold",
        "9",
        "--out",
        s(&out)
    ])
    .contains("out of range"));
}

#[test]
fn train_eval_stats_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let out = tmp.path().join("out");
    let with_small = |args: &[&str]| -> Vec<String> {
        args.iter()
            .chain(SMALL.iter())
            .map(|a| a.to_string())
            .collect()
    };
    let run = |args: Vec<String>| ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    run(with_small(&[
        "train",
        "--data",
        s(&data),
        "--seed",
        "5",
        "--out",
        s(&out),
    ]));
    let run_dir = out.join("tcnn_aug1");
    for f in 0..5 {
        assert!(run_dir.join(format!("fold{f}/model.ckpt")).is_file());
        let report: serde_json::Value = serde_json::from_slice(
            &std::fs::read(run_dir.join(format!("fold{f}/train_report.json"))).unwrap(),
        )
        .unwrap();
        assert!(report["stopped_epoch"].as_u64().unwrap() <= 3);
    }

    // same seed, same bytes
    let again = tmp.path().join("again");
    run(with_small(&[
        "train",
        "--data",
        s(&data),
        "--seed",
        "5",
        "--out",
        s(&again),
    ]));
    for f in 0..5 {
        let ckpt =
            |d: &Path| std::fs::read(d.join(format!("tcnn_aug1/fold{f}/model.ckpt"))).unwrap();
        assert_eq!(ckpt(&out), ckpt(&again), "fold {f} checkpoint differs");
    }

    ok(&["eval", "--data", s(&data), "--out", s(&out)]);
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["model"], "tcnn");
    assert_eq!(metrics["aug_factor"], 1);
    assert_eq!(metrics["n_folds"], 5);
    assert_eq!(metrics["folds"].as_array().unwrap().len(), 5);
    for key in ["accuracy_patient", "accuracy_image"] {
        let mean = metrics["mean"][key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&mean));
        assert!(metrics["sd"][key].as_f64().unwrap() >= 0.0);
    }

    // a second model through a config file; the flag overrides its epoch count
    let config = tmp.path().join("run.toml");
    std::fs::write(&config, "aug = 6\nseed = 5\n[train]\nmax_epochs = 50\n").unwrap();
    run(with_small(&[
        "train",
        "--config",
        s(&config),
        "--data",
        s(&data),
        "--out",
        s(&out),
    ]));
    let second = out.join("tcnn_aug6");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(second.join("fold0/train_report.json")).unwrap())
            .unwrap();
    assert!(report["stopped_epoch"].as_u64().unwrap() <= 3);
    ok(&[
        "eval",
        "--config",
        s(&config),
        "--data",
        s(&data),
        "--out",
        s(&out),
    ]);

    let stats_dir = tmp.path().join("stats");
    let printed = ok(&[
        "stats",
        s(&run_dir.join("metrics.json")),
        s(&second.join("metrics.json")),
        "--out",
        s(&stats_dir),
    ]);
    assert!(printed.contains("CD = 0.876"), "{printed}");
    let ranks: serde_json::Value =
        serde_json::from_slice(&std::fs::read(stats_dir.join("ranks.json")).unwrap()).unwrap();
    for fold in ranks["ranks"].as_array().unwrap() {
        let sum: f64 = fold
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r.as_f64().unwrap())
            .sum();
        assert_eq!(sum, 3.0);
    }
    let svg = std::fs::read_to_string(stats_dir.join("cd_diagram.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(stats_dir.join("cd_diagram.json").is_file());

    assert!(fails(&[
        "stats",
        s(&run_dir.join("metrics.json")),
        "--out",
        s(&stats_dir)
    ])
    .contains("at least 2"));
    let err = fails(&[
        "eval",
        "--data",
        s(&data),
        "--arch",
        "tcnn_inception",
        "--out",
        s(&out),
    ]);
    assert!(err.contains("texnet train"), "{err}");
    std::fs::remove_file(second.join("fold3/model.ckpt")).unwrap();
    let err = fails(&["eval", "--data", s(&data), "--aug", "6", "--out", s(&out)]);
    assert!(err.contains("missing checkpoint"), "{err}");
}

#[test]
fn stats_rejects_fold_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let report = |n: usize| {
        let folds: Vec<serde_json::Value> = (0..n)
            .map(|i| {
                serde_json::json!({
                    "accuracy_patient": 0.5 + i as f64 * 0.01, "accuracy_image": 0.5,
                    "sensitivity": 0.5, "specificity": 0.5,
                    "patient_sensitivity": 0.5, "patient_specificity": 0.5
                })
            })
            .collect();
        let summary = serde_json::json!({
            "accuracy_patient": 0.5, "accuracy_image": 0.5, "sensitivity": 0.5, "specificity": 0.5,
            "patient_sensitivity": 0.5, "patient_specificity": 0.5
        });
        serde_json::json!({"model": "tcnn", "aug_factor": n, "n_folds": n, "folds": folds, "mean": summary, "sd": summary})
    };
    let (a, b) = (tmp.path().join("a.json"), tmp.path().join("b.json"));
    std::fs::write(&a, report(5).to_string()).unwrap();
    std::fs::write(&b, report(4).to_string()).unwrap();
    let err = fails(&["stats", s(&a), s(&b), "--out", s(tmp.path())]);
    assert!(err.contains("fold count mismatch"), "{err}");
}

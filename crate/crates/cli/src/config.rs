//! Run configuration: built-in defaults, then an optional TOML file, then
//! command-line flags (flags win).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use texnet::augment::{AffineRanges, AugmentConfig};
use texnet::data::{ImageOptions, Magnification, SizePolicy};
use texnet::engine::Precision;
use texnet::model::Architecture;
use texnet::optim::TrainConfig;

/// Network input resolution, written `HxW`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct InputSize {
    pub height: usize,
    pub width: usize,
}

impl Default for InputSize {
    fn default() -> Self {
        let [height, width, _] = texnet::model::INPUT_SHAPE;
        Self { height, width }
    }
}

impl FromStr for InputSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (h, w) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("input size `{s}` is not of the form HxW"))?;
        let parse = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n > 0);
        match (parse(h), parse(w)) {
            (Some(height), Some(width)) => Ok(Self { height, width }),
            _ => Err(format!("input size `{s}` needs two positive integers")),
        }
    }
}

impl TryFrom<String> for InputSize {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<InputSize> for String {
    fn from(size: InputSize) -> String {
        size.to_string()
    }
}

impl fmt::Display for InputSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

pub fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        other => Err(format!("unknown precision `{other}` (expected f32 or f64)")),
    }
}

/// Every setting a command may read. The TOML file uses these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub arch: Architecture,
    /// Dataset directory tree.
    pub data: Option<PathBuf>,
    /// Manifest CSV, used instead of `data`.
    pub manifest: Option<PathBuf>,
    pub mag: Magnification,
    pub aug: usize,
    pub allow_any_factor: bool,
    pub folds: usize,
    pub plan: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    /// Folds trained concurrently.
    pub jobs: usize,
    pub precision: Precision,
    pub input: InputSize,
    /// Resize sources of any size instead of rejecting unexpected ones.
    pub resize_any: bool,
    /// Decode every image of a fold once up front.
    pub cache_images: bool,
    pub memory_check: bool,
    pub alpha: f64,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::Tcnn,
            data: None,
            manifest: None,
            mag: Magnification::X200,
            aug: 1,
            allow_any_factor: false,
            folds: 5,
            plan: None,
            seed: 0,
            out: PathBuf::from("runs"),
            jobs: 1,
            precision: Precision::F32,
            input: InputSize::default(),
            resize_any: false,
            cache_images: true,
            memory_check: true,
            alpha: 0.05,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::from_file)
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds == 0 {
            bail!("--folds must be at least 1");
        }
        if self.jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        self.augment_config(0).validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// `<out>/<arch>_aug<factor>`.
    pub fn run_dir(&self) -> PathBuf {
        self.out.join(format!("{}_aug{}", self.arch, self.aug))
    }

    pub fn image_options(&self) -> ImageOptions {
        ImageOptions {
            target: [self.input.height, self.input.width],
            on_mismatch: if self.resize_any {
                SizePolicy::Resize
            } else {
                SizePolicy::Reject
            },
            ..ImageOptions::default()
        }
    }

    pub fn augment_config(&self, seed: u64) -> AugmentConfig {
        AugmentConfig {
            factor: self.aug,
            seed,
            ranges: AffineRanges::default(),
            allow_any_factor: self.allow_any_factor,
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct DataFlags {
    /// Dataset directory (BreakHis layout).
    #[arg(long, conflicts_with = "manifest")]
    pub data: Option<PathBuf>,
    /// Manifest CSV (path, patient_id, class, subtype, magnification, seq).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Magnification to keep: 40, 100, 200 or 400.
    #[arg(long)]
    pub mag: Option<Magnification>,
}

impl DataFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if self.data.is_some() {
            cfg.data.clone_from(&self.data);
            cfg.manifest = None;
        }
        if self.manifest.is_some() {
            cfg.manifest.clone_from(&self.manifest);
            cfg.data = None;
        }
        if let Some(mag) = self.mag {
            cfg.mag = mag;
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct PlanFlags {
    /// Fold plan JSON.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Number of hold-out repetitions.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Root seed for every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl PlanFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if self.plan.is_some() {
            cfg.plan.clone_from(&self.plan);
        }
        if let Some(folds) = self.folds {
            cfg.folds = folds;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct ModelFlags {
    /// tcnn or tcnn_inception.
    #[arg(long)]
    pub arch: Option<Architecture>,
    /// Augmentation factor: 1, 6, 12, 24, 48 or 72.
    #[arg(long)]
    pub aug: Option<usize>,
    /// Accept augmentation factors outside the standard set.
    #[arg(long)]
    pub allow_any_factor: bool,
    /// Network input size `HxW`.
    #[arg(long)]
    pub input: Option<InputSize>,
    /// Resize source images of any size instead of rejecting unexpected sizes.
    #[arg(long)]
    pub resize_any: bool,
}

impl ModelFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(arch) = self.arch {
            cfg.arch = arch;
        }
        if let Some(aug) = self.aug {
            cfg.aug = aug;
        }
        cfg.allow_any_factor |= self.allow_any_factor;
        if let Some(input) = self.input {
            cfg.input = input;
        }
        cfg.resize_any |= self.resize_any;
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct ExecFlags {
    /// Mini-batch size.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Folds processed concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Arithmetic precision: f32 or f64.
    #[arg(long, value_parser = parse_precision)]
    pub precision: Option<Precision>,
    /// Decode images on every access instead of caching them per fold.
    #[arg(long)]
    pub no_cache: bool,
}

impl ExecFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(batch) = self.batch {
            cfg.train.batch_size = batch;
        }
        if let Some(jobs) = self.jobs {
            cfg.jobs = jobs;
        }
        if let Some(precision) = self.precision {
            cfg.precision = precision;
        }
        if self.no_cache {
            cfg.cache_images = false;
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct TrainFlags {
    /// Maximum epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Smallest validation-accuracy gain counted as an improvement.
    #[arg(long)]
    pub min_delta: Option<f64>,
    /// Keep the last weights instead of restoring the best-validation ones.
    #[arg(long)]
    pub keep_last: bool,
    /// Skip the activation-memory estimate check.
    #[arg(long)]
    pub no_memory_check: bool,
}

impl TrainFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(epochs) = self.epochs {
            cfg.train.max_epochs = epochs;
        }
        if let Some(patience) = self.patience {
            cfg.train.patience = patience;
        }
        if let Some(min_delta) = self.min_delta {
            cfg.train.min_delta = min_delta;
        }
        if self.keep_last {
            cfg.train.restore_best = false;
        }
        if self.no_memory_check {
            cfg.memory_check = false;
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct OutFlags {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl OutFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(out) = &self.out {
            cfg.out.clone_from(out);
        }
    }
}

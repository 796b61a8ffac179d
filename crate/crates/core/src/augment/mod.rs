//! Random affine augmentation and dataset expansion.
//!
//! A factor `f` keeps every original and adds `f − 1` transformed variants.
//! Variant parameters come from a stream keyed by `(seed, source, variant)`,
//! so the expansion is the same however it is scheduled. Pixels are produced
//! on access; only the parameters are stored.

mod affine;

use serde::{Deserialize, Serialize};

use crate::data::{ImageRecord, TumorClass};
use crate::engine::Tensor;
use crate::optim::ExampleSet;
use crate::{seed, Error, Result};

pub use affine::{apply_affine, sample_affine, AffineParams, AffineRanges};

pub const STANDARD_FACTORS: [usize; 6] = [1, 6, 12, 24, 48, 72];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub factor: usize,
    pub seed: u64,
    pub ranges: AffineRanges,
    /// Accept factors outside [`STANDARD_FACTORS`].
    pub allow_any_factor: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            factor: 1,
            seed: 0,
            ranges: AffineRanges::default(),
            allow_any_factor: false,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.factor == 0 {
            return Err(Error::Config(
                "augmentation factor must be at least 1".into(),
            ));
        }
        if !self.allow_any_factor && !STANDARD_FACTORS.contains(&self.factor) {
            return Err(Error::Config(format!(
                "augmentation factor {} is not one of {STANDARD_FACTORS:?} (override with allow_any_factor)",
                self.factor
            )));
        }
        self.ranges.validate()
    }
}

/// Variant `variant` of source item `source`; variant 0 is the original.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedItem {
    pub source: usize,
    pub variant: usize,
    pub params: AffineParams,
}

/// `n · factor` items ordered by source, then variant.
pub fn augment_plan(n: usize, config: &AugmentConfig) -> Result<Vec<AugmentedItem>> {
    config.validate()?;
    let mut items = Vec::with_capacity(n * config.factor);
    for source in 0..n {
        items.push(AugmentedItem {
            source,
            variant: 0,
            params: AffineParams::IDENTITY,
        });
        for variant in 1..config.factor {
            let mut rng =
                seed::stream(config.seed, seed::AUGMENT, &[source as u64, variant as u64]);
            items.push(AugmentedItem {
                source,
                variant,
                params: sample_affine(&mut rng, &config.ranges),
            });
        }
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub record: ImageRecord,
    pub variant: usize,
    pub params: AffineParams,
}

/// Expands training records by `config.factor`, preserving label and patient.
pub fn augment_dataset(
    records: &[ImageRecord],
    config: &AugmentConfig,
) -> Result<Vec<AugmentedRecord>> {
    Ok(augment_plan(records.len(), config)?
        .into_iter()
        .map(|item| AugmentedRecord {
            record: records[item.source].clone(),
            variant: item.variant,
            params: item.params,
        })
        .collect())
}

/// A base set seen through an augmentation plan.
pub struct AugmentedSet<'a> {
    base: &'a dyn ExampleSet,
    items: Vec<AugmentedItem>,
}

impl<'a> AugmentedSet<'a> {
    pub fn new(base: &'a dyn ExampleSet, config: &AugmentConfig) -> Result<Self> {
        Ok(Self {
            base,
            items: augment_plan(base.len(), config)?,
        })
    }

    pub fn items(&self) -> &[AugmentedItem] {
        &self.items
    }
}

impl ExampleSet for AugmentedSet<'_> {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn image(&self, index: usize) -> Result<Tensor<f32>> {
        let item = &self.items[index];
        apply_affine(&self.base.image(item.source)?, &item.params)
    }

    fn label(&self, index: usize) -> TumorClass {
        self.base.label(self.items[index].source)
    }

    fn patient(&self, index: usize) -> &str {
        self.base.patient(self.items[index].source)
    }

    fn image_id(&self, index: usize) -> String {
        let item = &self.items[index];
        let id = self.base.image_id(item.source);
        if item.variant == 0 {
            id
        } else {
            format!("{id}#aug{}", item.variant)
        }
    }
}

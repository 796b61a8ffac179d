use rayon::prelude::*;

use crate::engine::Tensor;
use crate::optim::ExampleSet;
use crate::Result;

use super::image::{load_image, ImageOptions};
use super::record::{ImageRecord, TumorClass};

/// Manifest records exposed as an [`ExampleSet`].
///
/// With caching on, every image is decoded once up front (in parallel) and
/// held in memory; otherwise each access decodes from disk.
#[derive(Debug, Clone)]
pub struct ImageSet {
    records: Vec<ImageRecord>,
    options: ImageOptions,
    cache: Option<Vec<Tensor<f32>>>,
}

impl ImageSet {
    pub fn new(records: Vec<ImageRecord>, options: ImageOptions) -> Self {
        Self {
            records,
            options,
            cache: None,
        }
    }

    pub fn cached(records: Vec<ImageRecord>, options: ImageOptions) -> Result<Self> {
        let images = records
            .par_iter()
            .map(|r| load_image(&r.path, &options))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            records,
            options,
            cache: Some(images),
        })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }
}

impl ExampleSet for ImageSet {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn image(&self, index: usize) -> Result<Tensor<f32>> {
        match &self.cache {
            Some(images) => Ok(images[index].clone()),
            None => load_image(&self.records[index].path, &self.options),
        }
    }

    fn label(&self, index: usize) -> TumorClass {
        self.records[index].tumor_class
    }

    fn patient(&self, index: usize) -> &str {
        &self.records[index].patient_id
    }

    fn image_id(&self, index: usize) -> String {
        self.records[index].image_id()
    }
}

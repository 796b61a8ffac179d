use rayon::prelude::*;

use crate::data::TumorClass;
use crate::engine::{Scalar, Tensor};
use crate::{Error, Result};

/// Random-access labelled images, each `[H, W, C]`.
///
/// Implementations must be cheap to index from several threads at once.
pub trait ExampleSet: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn image(&self, index: usize) -> Result<Tensor<f32>>;

    fn label(&self, index: usize) -> TumorClass;

    fn patient(&self, index: usize) -> &str;

    fn image_id(&self, index: usize) -> String;
}

/// Loads `indices` into one `[N, H, W, C]` batch.
pub fn load_batch<T: Scalar>(set: &dyn ExampleSet, indices: &[usize]) -> Result<Tensor<T>> {
    let images = indices
        .par_iter()
        .map(|&i| set.image(i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::stack(&images)?.cast())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InMemoryExample {
    pub id: String,
    pub patient: String,
    pub label: TumorClass,
    pub image: Tensor<f32>,
}

/// Images held fully decoded in memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InMemorySet {
    pub examples: Vec<InMemoryExample>,
}

impl InMemorySet {
    pub fn new(examples: Vec<InMemoryExample>) -> Result<Self> {
        if let Some(first) = examples.first() {
            if let Some(bad) = examples
                .iter()
                .find(|e| e.image.shape() != first.image.shape() || e.image.rank() != 3)
            {
                return Err(Error::Data(format!(
                    "example `{}` has shape {:?}, expected rank-3 {:?}",
                    bad.id,
                    bad.image.shape(),
                    first.image.shape()
                )));
            }
        }
        Ok(Self { examples })
    }
}

impl ExampleSet for InMemorySet {
    fn len(&self) -> usize {
        self.examples.len()
    }

    fn image(&self, index: usize) -> Result<Tensor<f32>> {
        Ok(self.examples[index].image.clone())
    }

    fn label(&self, index: usize) -> TumorClass {
        self.examples[index].label
    }

    fn patient(&self, index: usize) -> &str {
        &self.examples[index].patient
    }

    fn image_id(&self, index: usize) -> String {
        self.examples[index].id.clone()
    }
}

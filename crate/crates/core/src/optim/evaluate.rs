use crate::data::TumorClass;
use crate::engine::{softmax, Mode, Scalar};
use crate::eval::PredictionRecord;
use crate::model::{forward, NetworkSpec, ParameterStore};
use crate::{Error, Result};

use super::dataset::{load_batch, ExampleSet};

/// Index of the largest value; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One prediction per image, in dataset order, with batch norm in infer mode.
pub fn evaluate<T: Scalar>(
    spec: &NetworkSpec,
    store: &ParameterStore<T>,
    set: &dyn ExampleSet,
    batch_size: usize,
) -> Result<Vec<PredictionRecord>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut records = Vec::with_capacity(set.len());
    for chunk in indices.chunks(batch_size) {
        let batch = load_batch::<T>(set, chunk)?;
        let pass = forward(spec, store, &batch, Mode::Infer)?;
        let probs = softmax(pass.logits())?.to_f64_vec();
        for (&i, p) in chunk.iter().zip(probs.chunks(2)) {
            let predicted = argmax(p);
            records.push(PredictionRecord {
                image_id: set.image_id(i),
                patient_id: set.patient(i).to_owned(),
                true_class: set.label(i),
                predicted_class: TumorClass::from_index(predicted).expect("two output classes"),
                probability: p[predicted],
            });
        }
    }
    Ok(records)
}

use serde::{Deserialize, Serialize};

use crate::engine::{Scalar, Tensor};
use crate::model::ParameterStore;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        Self {
            rho: 0.95,
            epsilon: 1e-6,
            learning_rate: 1.0,
        }
    }
}

/// Running averages `E[g²]` and `E[Δx²]`, one tensor per trainable parameter
/// in [`ParameterStore::trainable`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState<T: Scalar = f32> {
    pub config: AdadeltaConfig,
    pub sq_grad: Vec<Tensor<T>>,
    pub sq_update: Vec<Tensor<T>>,
}

impl<T: Scalar> AdadeltaState<T> {
    pub fn new(store: &ParameterStore<T>, config: AdadeltaConfig) -> Self {
        let zeros: Vec<Tensor<T>> = store
            .trainable()
            .map(|p| Tensor::zeros(p.pair.value.shape()))
            .collect();
        Self {
            config,
            sq_grad: zeros.clone(),
            sq_update: zeros,
        }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    ///
    /// A non-finite gradient anywhere aborts the step before any value changes.
    pub fn step(&mut self, store: &mut ParameterStore<T>) -> Result<()> {
        let shapes_match = store.trainable().count() == self.sq_grad.len()
            && store
                .trainable()
                .zip(&self.sq_grad)
                .all(|(p, a)| p.pair.value.shape() == a.shape());
        if !shapes_match {
            return Err(Error::Config(
                "optimizer state does not match the parameter store".into(),
            ));
        }
        if let Some(p) = store.trainable().find(|p| !p.pair.grad.is_finite()) {
            return Err(Error::Network(format!(
                "non-finite gradient in `{}`",
                p.name
            )));
        }
        let rho = T::lit(self.config.rho);
        let keep = T::one() - rho;
        let eps = T::lit(self.config.epsilon);
        let lr = T::lit(self.config.learning_rate);
        for ((p, eg), ex) in store
            .trainable_mut()
            .zip(self.sq_grad.iter_mut())
            .zip(self.sq_update.iter_mut())
        {
            let pair = &mut p.pair;
            for (((x, &g), a), b) in pair
                .value
                .data_mut()
                .iter_mut()
                .zip(pair.grad.data())
                .zip(eg.data_mut())
                .zip(ex.data_mut())
            {
                *a = rho * *a + keep * g * g;
                let dx = -lr * (*b + eps).sqrt() / (*a + eps).sqrt() * g;
                *b = rho * *b + keep * dx * dx;
                *x += dx;
            }
            pair.zero_grad();
        }
        Ok(())
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{GradientPair, Scalar, Tensor};
use crate::{Error, Result};

use super::spec::{LayerKind, NetworkSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T: Scalar> {
    pub name: String,
    pub trainable: bool,
    pub pair: GradientPair<T>,
}

/// Values and gradient buffers for every layer of a [`NetworkSpec`], in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<T: Scalar = f32> {
    layers: Vec<Vec<Param<T>>>,
}

impl<T: Scalar> ParameterStore<T> {
    /// All-zero store laid out for `spec` (running variances included).
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|layer| {
                layer
                    .params()
                    .into_iter()
                    .map(|p| Param {
                        name: p.name.to_string(),
                        trainable: p.trainable,
                        pair: GradientPair::new(Tensor::zeros(&p.shape)),
                    })
                    .collect()
            })
            .collect();
        Self { layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, index: usize) -> &[Param<T>] {
        &self.layers[index]
    }

    pub fn layer_mut(&mut self, index: usize) -> &mut [Param<T>] {
        &mut self.layers[index]
    }

    pub fn get(&self, layer: usize, name: &str) -> Result<&Param<T>> {
        self.layers
            .get(layer)
            .and_then(|ps| ps.iter().find(|p| p.name == name))
            .ok_or_else(|| Error::Network(format!("layer {layer} has no parameter `{name}`")))
    }

    pub fn value(&self, layer: usize, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.get(layer, name)?.pair.value)
    }

    pub(crate) fn grad_mut(&mut self, layer: usize, name: &str) -> Result<&mut Tensor<T>> {
        self.layers
            .get_mut(layer)
            .and_then(|ps| ps.iter_mut().find(|p| p.name == name))
            .map(|p| &mut p.pair.grad)
            .ok_or_else(|| Error::Network(format!("layer {layer} has no parameter `{name}`")))
    }

    pub(crate) fn value_mut(&mut self, layer: usize, name: &str) -> Result<&mut Tensor<T>> {
        self.layers
            .get_mut(layer)
            .and_then(|ps| ps.iter_mut().find(|p| p.name == name))
            .map(|p| &mut p.pair.value)
            .ok_or_else(|| Error::Network(format!("layer {layer} has no parameter `{name}`")))
    }

    /// `(layer index, parameter)` pairs in layer order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Param<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, ps)| ps.iter().map(move |p| (i, p)))
    }

    pub fn trainable(&self) -> impl Iterator<Item = &Param<T>> {
        self.layers.iter().flatten().filter(|p| p.trainable)
    }

    pub fn trainable_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.layers.iter_mut().flatten().filter(|p| p.trainable)
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().map(|p| p.pair.value.len()).sum()
    }

    pub fn non_trainable_count(&self) -> usize {
        self.layers
            .iter()
            .flatten()
            .filter(|p| !p.trainable)
            .map(|p| p.pair.value.len())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        self.layers
            .iter_mut()
            .flatten()
            .for_each(|p| p.pair.zero_grad());
    }

    /// Copies every value (trainable or not) from `other`.
    pub fn copy_values_from(&mut self, other: &ParameterStore<T>) {
        for (a, b) in self
            .layers
            .iter_mut()
            .flatten()
            .zip(other.layers.iter().flatten())
        {
            a.pair.value.data_mut().copy_from_slice(b.pair.value.data());
        }
    }

    /// Checks that the store is laid out exactly as `spec` declares.
    pub fn check_layout(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::Network(format!(
                "store has {} layers, network has {}",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, (ps, layer)) in self.layers.iter().zip(&spec.layers).enumerate() {
            let want = layer.params();
            if ps.len() != want.len()
                || ps
                    .iter()
                    .zip(&want)
                    .any(|(p, w)| p.name != w.name || p.pair.value.shape() != w.shape)
            {
                return Err(Error::Network(format!(
                    "parameters of layer {} do not match the network",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Glorot-uniform kernels, zero biases, unit gamma, zero beta, running mean 0
/// and running variance 1. Deterministic in `seed`.
pub fn init_parameters<T: Scalar>(spec: &NetworkSpec, seed: u64) -> ParameterStore<T> {
    let mut store = ParameterStore::zeros(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (i, layer) in spec.layers.iter().enumerate() {
        let fans = match layer.kind {
            LayerKind::Conv2d(g) => Some(g.fans()),
            LayerKind::Dense { inputs, outputs } => Some((inputs, outputs)),
            _ => None,
        };
        for p in store.layer_mut(i) {
            match p.name.as_str() {
                "kernel" => {
                    let (fan_in, fan_out) = fans.expect("kernel belongs to a conv or dense layer");
                    let limit = glorot_limit(fan_in, fan_out);
                    for v in p.pair.value.data_mut() {
                        *v = T::lit(rng.gen_range(-limit..limit));
                    }
                }
                "gamma" | "moving_variance" => p.pair.value.fill(T::one()),
                _ => {}
            }
        }
    }
    store
}

/// `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builders::{build_tcnn, build_tcnn_inception};
    use crate::model::spec::count_parameters;

    #[test]
    fn same_seed_same_store() {
        let spec = build_tcnn();
        let a = init_parameters::<f32>(&spec, 42);
        let b = init_parameters::<f32>(&spec, 42);
        assert_eq!(a, b);
        let c = init_parameters::<f32>(&spec, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn kernels_within_glorot_bound_and_biases_zero() {
        let spec = build_tcnn();
        let store = init_parameters::<f64>(&spec, 7);
        let conv1 = store.value(0, "kernel").unwrap();
        let limit = glorot_limit(27, 288);
        assert!(conv1.data().iter().all(|v| v.abs() <= limit));
        let dense = store.value(4, "kernel").unwrap();
        assert!(dense.data().iter().all(|v| v.abs() <= glorot_limit(32, 32)));
        for (_, p) in store.iter().filter(|(_, p)| p.name == "bias") {
            assert!(p.pair.value.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn store_counts_match_spec_counts() {
        for spec in [build_tcnn(), build_tcnn_inception()] {
            let store = ParameterStore::<f32>::zeros(&spec);
            let count = count_parameters(&spec);
            assert_eq!(store.trainable_count(), count.trainable);
            assert_eq!(store.non_trainable_count(), count.non_trainable);
            store.check_layout(&spec).unwrap();
        }
    }

    #[test]
    fn batch_norm_initial_state() {
        let spec = build_tcnn_inception();
        let store = init_parameters::<f32>(&spec, 1);
        assert!(store
            .value(13, "gamma")
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 1.0));
        assert!(store
            .value(13, "beta")
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        assert!(store
            .value(13, "moving_mean")
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        assert!(store
            .value(13, "moving_variance")
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 1.0));
        assert!(!store.get(13, "moving_mean").unwrap().trainable);
    }
}

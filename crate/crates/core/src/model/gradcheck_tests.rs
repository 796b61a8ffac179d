//! Whole-network backward pass against central finite differences (f64).

use crate::engine::testing::random_tensor;
use crate::engine::{softmax_cross_entropy, softmax_cross_entropy_backward, Mode, Tensor};

use super::*;

fn loss(spec: &NetworkSpec, store: &ParameterStore<f64>, x: &Tensor<f64>, labels: &[usize]) -> f64 {
    let pass = forward(spec, store, x, Mode::Train).unwrap();
    softmax_cross_entropy(pass.logits(), labels).unwrap().loss
}

/// Returns `‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖)` over the probed
/// parameters (every `stride`-th trainable value).
fn check(spec: &NetworkSpec, seed: u64, batch: usize, stride: usize) -> f64 {
    let [h, w, c] = spec.input_shape;
    let mut store = init_parameters::<f64>(spec, seed);
    // non-zero biases so no unit sits exactly on the ReLU kink
    for p in store.trainable_mut() {
        if p.name == "bias" || p.name == "beta" {
            let n = p.pair.value.len();
            p.pair.value = random_tensor::<f64>(&[n], seed + n as u64).map(|v| 0.05 * v);
        }
    }
    let x = random_tensor::<f64>(&[batch, h, w, c], seed + 1).map(|v| 0.5 + 0.5 * v);
    let labels: Vec<usize> = (0..batch).map(|i| i % 2).collect();

    let pass = forward(spec, &store, &x, Mode::Train).unwrap();
    let ce = softmax_cross_entropy(pass.logits(), &labels).unwrap();
    let g = softmax_cross_entropy_backward(&ce.probabilities, &labels).unwrap();
    store.zero_grads();
    backward(spec, &mut store, &pass, &g).unwrap();

    let h_step = 1e-6;
    let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
    let locations: Vec<(usize, String, usize)> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .flat_map(|(l, p)| (0..p.pair.value.len()).map(move |k| (l, p.name.clone(), k)))
        .step_by(stride)
        .collect();
    for (layer, name, k) in locations {
        let analytic = store.get(layer, &name).unwrap().pair.grad.data()[k];
        let orig = store.value(layer, &name).unwrap().data()[k];
        store.value_mut(layer, &name).unwrap().data_mut()[k] = orig + h_step;
        let up = loss(spec, &store, &x, &labels);
        store.value_mut(layer, &name).unwrap().data_mut()[k] = orig - h_step;
        let down = loss(spec, &store, &x, &labels);
        store.value_mut(layer, &name).unwrap().data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h_step);
        diff += (analytic - numeric).powi(2);
        na += analytic.powi(2);
        nn += numeric.powi(2);
    }
    diff.sqrt() / (na.sqrt() + nn.sqrt())
}

#[test]
fn tcnn_every_parameter() {
    let spec = build_tcnn().with_input_size(8, 12);
    let err = check(&spec, 11, 2, 1);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn tcnn_inception_sampled_parameters() {
    let spec = build_tcnn_inception().with_input_size(4, 5);
    let err = check(&spec, 12, 3, 997);
    assert!(err < 1e-4, "relative error {err}");
}

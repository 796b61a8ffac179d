//! Execution of a [`NetworkSpec`] over a batch.

use crate::engine::{
    batch_norm, batch_norm_backward, concat_channels, concat_channels_backward, conv2d,
    conv2d_backward_with, dense, dense_backward, global_avg_pool, global_avg_pool_backward, relu,
    relu_backward, update_running_stats, BatchNormCache, BatchNormConfig, Mode, Scalar, Tensor,
};
use crate::{Error, Result};

use super::params::ParameterStore;
use super::spec::{Activation, LayerKind, NetworkSpec, Source};

/// Activations and caches of one forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass<T: Scalar> {
    pub mode: Mode,
    input: Tensor<T>,
    outputs: Vec<Tensor<T>>,
    bn_caches: Vec<Option<BatchNormCache<T>>>,
}

impl<T: Scalar> ForwardPass<T> {
    /// Pre-softmax scores `[N, 2]`.
    pub fn logits(&self) -> &Tensor<T> {
        self.outputs.last().expect("network has layers")
    }

    pub fn into_logits(mut self) -> Tensor<T> {
        self.outputs.pop().expect("network has layers")
    }

    /// Post-activation output of layer `index`.
    pub fn output(&self, index: usize) -> &Tensor<T> {
        &self.outputs[index]
    }

    fn source(&self, s: Source) -> &Tensor<T> {
        match s {
            Source::Input => &self.input,
            Source::Layer(j) => &self.outputs[j],
        }
    }
}

fn check_batch<T: Scalar>(spec: &NetworkSpec, batch: &Tensor<T>) -> Result<()> {
    let shape = batch.shape();
    if shape.len() != 4 || shape[1..] != spec.input_shape || shape[0] == 0 {
        return Err(Error::Network(format!(
            "batch of shape {:?} does not match input {:?}",
            shape, spec.input_shape
        )));
    }
    Ok(())
}

/// Runs the graph on `batch: [N, H, W, C]`.
///
/// Train mode normalizes with batch statistics; call
/// [`apply_running_stats`] afterwards to fold them into the running averages.
pub fn forward<T: Scalar>(
    spec: &NetworkSpec,
    store: &ParameterStore<T>,
    batch: &Tensor<T>,
    mode: Mode,
) -> Result<ForwardPass<T>> {
    check_batch(spec, batch)?;
    let bn_config = BatchNormConfig::default();
    let mut pass = ForwardPass {
        mode,
        input: batch.clone(),
        outputs: Vec::with_capacity(spec.layers.len()),
        bn_caches: Vec::with_capacity(spec.layers.len()),
    };
    for (i, layer) in spec.layers.iter().enumerate() {
        let first = pass.source(layer.inputs[0]);
        let mut cache = None;
        let out = match layer.kind {
            LayerKind::Conv2d(g) => conv2d(
                first,
                store.value(i, "kernel")?,
                store.value(i, "bias")?,
                &g,
            )?,
            LayerKind::GlobalAvgPool => global_avg_pool(first)?,
            LayerKind::Flatten => {
                let n = first.shape()[0];
                let d = first.len() / n;
                first.clone().reshape(&[n, d])?
            }
            LayerKind::Dense { .. } => {
                dense(first, store.value(i, "kernel")?, store.value(i, "bias")?)?
            }
            LayerKind::Concat => {
                let parts: Vec<&Tensor<T>> = layer.inputs.iter().map(|&s| pass.source(s)).collect();
                concat_channels(&parts)?
            }
            LayerKind::BatchNorm { .. } => {
                let (out, c) = batch_norm(
                    first,
                    store.value(i, "gamma")?,
                    store.value(i, "beta")?,
                    store.value(i, "moving_mean")?,
                    store.value(i, "moving_variance")?,
                    mode,
                    &bn_config,
                )?;
                cache = Some(c);
                out
            }
        };
        let out = match layer.activation {
            Activation::Relu => relu(&out),
            Activation::Softmax | Activation::None => out,
        };
        if !out.is_finite() {
            return Err(Error::Network(format!(
                "non-finite activation after layer {} ({})",
                i + 1,
                layer.type_name()
            )));
        }
        pass.outputs.push(out);
        pass.bn_caches.push(cache);
    }
    Ok(pass)
}

/// Folds the batch statistics of a train-mode pass into the running averages.
pub fn apply_running_stats<T: Scalar>(
    spec: &NetworkSpec,
    store: &mut ParameterStore<T>,
    pass: &ForwardPass<T>,
) -> Result<()> {
    let bn_config = BatchNormConfig::default();
    for (i, cache) in pass.bn_caches.iter().enumerate() {
        if let (Some(cache), LayerKind::BatchNorm { .. }) = (cache, spec.layers[i].kind) {
            let mut mean = store.value(i, "moving_mean")?.clone();
            let mut var = store.value(i, "moving_variance")?.clone();
            update_running_stats(cache, &mut mean, &mut var, &bn_config);
            *store.value_mut(i, "moving_mean")? = mean;
            *store.value_mut(i, "moving_variance")? = var;
        }
    }
    Ok(())
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, grad: Tensor<T>) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&grad)?,
        None => *slot = Some(grad),
    }
    Ok(())
}

/// Backpropagates `grad_logits` (dLoss/dlogits, `[N, 2]`) through the pass and
/// adds every trainable parameter gradient into `store`.
pub fn backward<T: Scalar>(
    spec: &NetworkSpec,
    store: &mut ParameterStore<T>,
    pass: &ForwardPass<T>,
    grad_logits: &Tensor<T>,
) -> Result<()> {
    if grad_logits.shape() != pass.logits().shape() {
        return Err(Error::Network(format!(
            "upstream gradient {:?} does not match logits {:?}",
            grad_logits.shape(),
            pass.logits().shape()
        )));
    }
    let n_layers = spec.layers.len();
    let mut grads: Vec<Option<Tensor<T>>> = vec![None; n_layers];
    grads[n_layers - 1] = Some(grad_logits.clone());

    for i in (0..n_layers).rev() {
        let Some(mut grad) = grads[i].take() else {
            continue;
        };
        let layer = &spec.layers[i];
        if layer.activation == Activation::Relu {
            grad = relu_backward(&pass.outputs[i], &grad)?;
        }
        let first = layer.inputs[0];
        let x = pass.source(first);
        let mut upstream: Vec<(Source, Tensor<T>)> = Vec::new();
        match layer.kind {
            LayerKind::Conv2d(g) => {
                let want_input = first != Source::Input;
                let gr = conv2d_backward_with(x, store.value(i, "kernel")?, &g, &grad, want_input)?;
                store.grad_mut(i, "kernel")?.add_assign(&gr.weights)?;
                store.grad_mut(i, "bias")?.add_assign(&gr.bias)?;
                if let Some(dx) = gr.input {
                    upstream.push((first, dx));
                }
            }
            LayerKind::GlobalAvgPool => {
                upstream.push((first, global_avg_pool_backward(x.shape(), &grad)?))
            }
            LayerKind::Flatten => upstream.push((first, grad.reshape(x.shape())?)),
            LayerKind::Dense { .. } => {
                let gr = dense_backward(x, store.value(i, "kernel")?, &grad)?;
                store.grad_mut(i, "kernel")?.add_assign(&gr.weights)?;
                store.grad_mut(i, "bias")?.add_assign(&gr.bias)?;
                upstream.push((first, gr.input));
            }
            LayerKind::Concat => {
                let widths: Vec<usize> = layer
                    .inputs
                    .iter()
                    .map(|&s| pass.source(s).shape()[3])
                    .collect();
                let parts = concat_channels_backward(&grad, &widths)?;
                upstream.extend(layer.inputs.iter().copied().zip(parts));
            }
            LayerKind::BatchNorm { .. } => {
                let cache = pass.bn_caches[i]
                    .as_ref()
                    .ok_or_else(|| Error::Network("missing batch-norm cache".into()))?;
                let gr = batch_norm_backward(cache, store.value(i, "gamma")?, &grad)?;
                store.grad_mut(i, "gamma")?.add_assign(&gr.gamma)?;
                store.grad_mut(i, "beta")?.add_assign(&gr.beta)?;
                upstream.push((first, gr.input));
            }
        }
        for (source, g) in upstream {
            if let Source::Layer(j) = source {
                accumulate(&mut grads[j], g)?;
            }
        }
    }
    Ok(())
}

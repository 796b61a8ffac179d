use serde::{Deserialize, Serialize};

use super::{EngineError, Mode, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchNormConfig {
    /// Weight of the previous running value in the moving average.
    pub momentum: f64,
    pub epsilon: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        Self {
            momentum: 0.99,
            epsilon: 1e-5,
        }
    }
}

/// Values kept from the forward pass for the backward pass and for the
/// running-statistics update.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T: Scalar> {
    pub mode: Mode,
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGradients<T: Scalar> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

fn channel_params<T: Scalar>(c: usize, tensors: [&Tensor<T>; 4]) -> Result<(), EngineError> {
    for t in tensors {
        if t.shape() != [c] {
            return Err(EngineError::ShapeMismatch {
                op: "batch_norm",
                detail: format!("per-channel parameter {:?}, expected [{c}]", t.shape()),
            });
        }
    }
    Ok(())
}

/// Per-channel normalization over the `N, H, W` axes.
///
/// Train mode normalizes with the (biased) batch statistics; infer mode with
/// the running statistics.
pub fn batch_norm<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    mode: Mode,
    config: &BatchNormConfig,
) -> Result<(Tensor<T>, BatchNormCache<T>), EngineError> {
    let [n, h, w, c] = input.dims4("batch_norm")?;
    channel_params(c, [gamma, beta, running_mean, running_var])?;
    let count = n * h * w;
    if count == 0 {
        return Err(EngineError::EmptyBatch { op: "batch_norm" });
    }
    input.ensure_finite("batch_norm")?;
    let eps = T::lit(config.epsilon);
    let m = T::from_usize(count).expect("count representable");

    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for px in input.data().chunks(c) {
        for (acc, &v) in mean.iter_mut().zip(px) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v = *v / m);
    for px in input.data().chunks(c) {
        for ((acc, &v), &mu) in var.iter_mut().zip(px).zip(&mean) {
            let d = v - mu;
            *acc += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v = *v / m);

    let (use_mean, use_var) = match mode {
        Mode::Train => (mean.clone(), var.clone()),
        Mode::Infer => (running_mean.data().to_vec(), running_var.data().to_vec()),
    };
    let inv_std: Vec<T> = use_var
        .iter()
        .map(|&v| T::one() / (v + eps).sqrt())
        .collect();

    let mut normalized = input.clone();
    let mut output = input.clone();
    for (xh, y) in normalized
        .data_mut()
        .chunks_mut(c)
        .zip(output.data_mut().chunks_mut(c))
    {
        for ch in 0..c {
            let z = (xh[ch] - use_mean[ch]) * inv_std[ch];
            xh[ch] = z;
            y[ch] = gamma.data()[ch] * z + beta.data()[ch];
        }
    }
    output.ensure_finite("batch_norm")?;
    Ok((
        output,
        BatchNormCache {
            mode,
            normalized,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        },
    ))
}

pub fn batch_norm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    gamma: &Tensor<T>,
    grad_output: &Tensor<T>,
) -> Result<BatchNormGradients<T>, EngineError> {
    if grad_output.shape() != cache.normalized.shape() {
        return Err(EngineError::ShapeMismatch {
            op: "batch_norm_backward",
            detail: format!(
                "{:?} vs {:?}",
                grad_output.shape(),
                cache.normalized.shape()
            ),
        });
    }
    let c = cache.inv_std.len();
    let count = grad_output.len() / c.max(1);
    let m = T::from_usize(count).expect("count representable");

    let mut d_gamma = vec![T::zero(); c];
    let mut d_beta = vec![T::zero(); c];
    for (g, xh) in grad_output
        .data()
        .chunks(c)
        .zip(cache.normalized.data().chunks(c))
    {
        for ch in 0..c {
            d_beta[ch] += g[ch];
            d_gamma[ch] += g[ch] * xh[ch];
        }
    }

    let mut d_input = grad_output.clone();
    for (dx, xh) in d_input
        .data_mut()
        .chunks_mut(c)
        .zip(cache.normalized.data().chunks(c))
    {
        for ch in 0..c {
            let scale = gamma.data()[ch] * cache.inv_std[ch];
            dx[ch] = match cache.mode {
                // batch statistics depend on every input in the channel
                Mode::Train => scale * (dx[ch] - d_beta[ch] / m - xh[ch] * d_gamma[ch] / m),
                Mode::Infer => scale * dx[ch],
            };
        }
    }
    Ok(BatchNormGradients {
        input: d_input,
        gamma: Tensor::from_vec(&[c], d_gamma)?,
        beta: Tensor::from_vec(&[c], d_beta)?,
    })
}

/// `running ← momentum · running + (1 − momentum) · batch` for train-mode caches.
pub fn update_running_stats<T: Scalar>(
    cache: &BatchNormCache<T>,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
    config: &BatchNormConfig,
) {
    if cache.mode != Mode::Train {
        return;
    }
    let keep = T::lit(config.momentum);
    let take = T::one() - keep;
    for (r, &b) in running_mean.data_mut().iter_mut().zip(&cache.batch_mean) {
        *r = keep * *r + take * b;
    }
    for (r, &b) in running_var.data_mut().iter_mut().zip(&cache.batch_var) {
        *r = keep * *r + take * b;
    }
}

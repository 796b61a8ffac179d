use super::{EngineError, Scalar, Tensor};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Masks the upstream gradient where the activation input was `<= 0`.
///
/// `activation` may be either the ReLU input or its output; both have the
/// same positive support.
pub fn relu_backward<T: Scalar>(
    activation: &Tensor<T>,
    grad_output: &Tensor<T>,
) -> Result<Tensor<T>, EngineError> {
    if activation.shape() != grad_output.shape() {
        return Err(EngineError::ShapeMismatch {
            op: "relu_backward",
            detail: format!("{:?} vs {:?}", activation.shape(), grad_output.shape()),
        });
    }
    let mut grad = grad_output.clone();
    for (g, &a) in grad.data_mut().iter_mut().zip(activation.data()) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(grad)
}

/// Row-wise softmax of `[N, K]` logits, stabilized by subtracting the row max.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>, EngineError> {
    let [_, k] = logits.dims2("softmax")?;
    logits.ensure_finite("softmax")?;
    let mut probs = logits.clone();
    for row in probs.data_mut().chunks_mut(k.max(1)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    Ok(probs)
}

/// Mean negative log-likelihood of integer labels under the softmax of `logits`.
#[derive(Debug, Clone)]
pub struct CrossEntropy<T: Scalar> {
    pub loss: T,
    pub probabilities: Tensor<T>,
}

pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<CrossEntropy<T>, EngineError> {
    let [n, k] = logits.dims2("softmax_cross_entropy")?;
    if k < 2 {
        return Err(EngineError::ShapeMismatch {
            op: "softmax_cross_entropy",
            detail: format!("need at least 2 classes, got {k}"),
        });
    }
    if labels.len() != n {
        return Err(EngineError::ShapeMismatch {
            op: "softmax_cross_entropy",
            detail: format!("{} labels for {n} rows", labels.len()),
        });
    }
    if n == 0 {
        return Err(EngineError::EmptyBatch {
            op: "softmax_cross_entropy",
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(EngineError::LabelOutOfRange {
            label: bad,
            classes: k,
        });
    }
    let probabilities = softmax(logits)?;
    // log p = (z - max) - log Σ exp(z - max), computed from the logits
    // directly so that saturated probabilities do not produce -inf.
    let mut total = T::zero();
    for (row, &label) in logits.data().chunks(k).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let log_sum = row.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
        total += log_sum - (row[label] - max);
    }
    let loss = total / T::from_usize(n).expect("batch size representable");
    Ok(CrossEntropy {
        loss,
        probabilities,
    })
}

/// `(softmax − onehot) / N`.
pub fn softmax_cross_entropy_backward<T: Scalar>(
    probabilities: &Tensor<T>,
    labels: &[usize],
) -> Result<Tensor<T>, EngineError> {
    let [n, k] = probabilities.dims2("softmax_cross_entropy_backward")?;
    if labels.len() != n {
        return Err(EngineError::ShapeMismatch {
            op: "softmax_cross_entropy_backward",
            detail: format!("{} labels for {n} rows", labels.len()),
        });
    }
    let scale = T::one() / T::from_usize(n.max(1)).expect("batch size representable");
    let mut grad = probabilities.clone();
    for (row, &label) in grad.data_mut().chunks_mut(k).zip(labels) {
        if label >= k {
            return Err(EngineError::LabelOutOfRange { label, classes: k });
        }
        row[label] -= T::one();
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok(grad)
}

use super::{EngineError, Scalar, Tensor};

/// Whole-map spatial mean: `[N, H, W, C] -> [N, 1, 1, C]`.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>, EngineError> {
    let [n, h, w, c] = input.dims4("global_avg_pool")?;
    if h == 0 || w == 0 {
        return Err(EngineError::EmptyExtent {
            op: "global_avg_pool",
        });
    }
    let area = T::from_usize(h * w).expect("area representable");
    let mut out = Tensor::zeros(&[n, 1, 1, c]);
    for (sample, dst) in input
        .data()
        .chunks(h * w * c)
        .zip(out.data_mut().chunks_mut(c))
    {
        for px in sample.chunks(c) {
            for (d, &v) in dst.iter_mut().zip(px) {
                *d += v;
            }
        }
        for d in dst.iter_mut() {
            *d = *d / area;
        }
    }
    out.ensure_finite("global_avg_pool")?;
    Ok(out)
}

/// Spreads each pooled gradient uniformly, `1 / (H·W)` per position.
pub fn global_avg_pool_backward<T: Scalar>(
    input_shape: &[usize],
    grad_output: &Tensor<T>,
) -> Result<Tensor<T>, EngineError> {
    let [n, h, w, c] = match *input_shape {
        [n, h, w, c] => [n, h, w, c],
        _ => {
            return Err(EngineError::ShapeMismatch {
                op: "global_avg_pool_backward",
                detail: format!("input shape {input_shape:?} is not rank 4"),
            })
        }
    };
    if grad_output.shape() != [n, 1, 1, c] {
        return Err(EngineError::ShapeMismatch {
            op: "global_avg_pool_backward",
            detail: format!(
                "upstream {:?}, expected {:?}",
                grad_output.shape(),
                [n, 1, 1, c]
            ),
        });
    }
    if h == 0 || w == 0 {
        return Err(EngineError::EmptyExtent {
            op: "global_avg_pool_backward",
        });
    }
    let area = T::from_usize(h * w).expect("area representable");
    let mut grad = Tensor::zeros(input_shape);
    for (dst, g) in grad
        .data_mut()
        .chunks_mut(h * w * c)
        .zip(grad_output.data().chunks(c))
    {
        let scaled: Vec<T> = g.iter().map(|&v| v / area).collect();
        for px in dst.chunks_mut(c) {
            px.copy_from_slice(&scaled);
        }
    }
    Ok(grad)
}

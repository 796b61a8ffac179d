use super::{EngineError, Scalar, Tensor};

/// Joins `[N, H, W, Ci]` maps along the channel axis in argument order.
pub fn concat_channels<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>, EngineError> {
    let first = inputs.first().ok_or(EngineError::EmptyBatch {
        op: "concat_channels",
    })?;
    let [n, h, w, _] = first.dims4("concat_channels")?;
    let mut widths = Vec::with_capacity(inputs.len());
    for t in inputs {
        let [tn, th, tw, tc] = t.dims4("concat_channels")?;
        if (tn, th, tw) != (n, h, w) {
            return Err(EngineError::ShapeMismatch {
                op: "concat_channels",
                detail: format!("{:?} vs {:?}", t.shape(), first.shape()),
            });
        }
        widths.push(tc);
    }
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(n * h * w * total);
    for px in 0..n * h * w {
        for (t, &c) in inputs.iter().zip(&widths) {
            data.extend_from_slice(&t.data()[px * c..(px + 1) * c]);
        }
    }
    Tensor::from_vec(&[n, h, w, total], data)
}

/// Slices a concatenated gradient back into per-input blocks of `widths` channels.
pub fn concat_channels_backward<T: Scalar>(
    grad_output: &Tensor<T>,
    widths: &[usize],
) -> Result<Vec<Tensor<T>>, EngineError> {
    let [n, h, w, c] = grad_output.dims4("concat_channels_backward")?;
    if widths.iter().sum::<usize>() != c {
        return Err(EngineError::ShapeMismatch {
            op: "concat_channels_backward",
            detail: format!("block widths {widths:?} do not sum to {c}"),
        });
    }
    let mut blocks: Vec<Vec<T>> = widths
        .iter()
        .map(|&wc| Vec::with_capacity(n * h * w * wc))
        .collect();
    for px in grad_output.data().chunks(c) {
        let mut offset = 0;
        for (block, &wc) in blocks.iter_mut().zip(widths) {
            block.extend_from_slice(&px[offset..offset + wc]);
            offset += wc;
        }
    }
    blocks
        .into_iter()
        .zip(widths)
        .map(|(data, &wc)| Tensor::from_vec(&[n, h, w, wc], data))
        .collect()
}

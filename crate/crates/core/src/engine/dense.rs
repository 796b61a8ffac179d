use super::gemm::gemm;
use super::{EngineError, Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct DenseGradients<T: Scalar> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<[usize; 3], EngineError> {
    let [n, d_in] = input.dims2("dense")?;
    let [w_in, d_out] = weights.dims2("dense")?;
    if w_in != d_in {
        return Err(EngineError::ShapeMismatch {
            op: "dense",
            detail: format!("input width {d_in} vs weight rows {w_in}"),
        });
    }
    Ok([n, d_in, d_out])
}

/// `output = input · weights + bias` for `input: [N, Din]`, `weights: [Din, Dout]`.
pub fn dense<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, EngineError> {
    let [n, d_in, d_out] = check(input, weights)?;
    if bias.shape() != [d_out] {
        return Err(EngineError::ShapeMismatch {
            op: "dense",
            detail: format!("bias {:?}, expected [{d_out}]", bias.shape()),
        });
    }
    input.ensure_finite("dense")?;
    let mut out = Tensor::zeros(&[n, d_out]);
    for row in out.data_mut().chunks_mut(d_out) {
        row.copy_from_slice(bias.data());
    }
    gemm(
        n,
        d_in,
        d_out,
        input.data(),
        false,
        weights.data(),
        false,
        T::one(),
        out.data_mut(),
    );
    Ok(out)
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_output: &Tensor<T>,
) -> Result<DenseGradients<T>, EngineError> {
    let [n, d_in, d_out] = check(input, weights)?;
    if grad_output.shape() != [n, d_out] {
        return Err(EngineError::ShapeMismatch {
            op: "dense_backward",
            detail: format!(
                "upstream {:?}, expected [{n}, {d_out}]",
                grad_output.shape()
            ),
        });
    }
    let mut d_input = Tensor::zeros(&[n, d_in]);
    gemm(
        n,
        d_out,
        d_in,
        grad_output.data(),
        false,
        weights.data(),
        true,
        T::zero(),
        d_input.data_mut(),
    );
    let mut d_weights = Tensor::zeros(&[d_in, d_out]);
    gemm(
        d_in,
        n,
        d_out,
        input.data(),
        true,
        grad_output.data(),
        false,
        T::zero(),
        d_weights.data_mut(),
    );
    let mut d_bias = Tensor::zeros(&[d_out]);
    for row in grad_output.data().chunks(d_out) {
        for (b, &g) in d_bias.data_mut().iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok(DenseGradients {
        input: d_input,
        weights: d_weights,
        bias: d_bias,
    })
}

//! Test-only oracles: seeded random tensors, a nested-loop convolution and
//! central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConvGeometry, Padding, Scalar, Tensor};

pub(crate) fn random_tensor<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &values).unwrap()
}

/// Direct evaluation of the convolution sum, one output element at a time.
pub(crate) fn naive_conv2d(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    g: &ConvGeometry,
) -> Tensor<f64> {
    let [n, h, wd, cin] = x.dims4("naive").unwrap();
    let (oh, pt) = match g.padding {
        Padding::Valid => ((h - g.kernel_h) / g.stride_h + 1, 0),
        Padding::Same => {
            let o = h.div_ceil(g.stride_h);
            (o, ((o - 1) * g.stride_h + g.kernel_h).saturating_sub(h) / 2)
        }
    };
    let (ow, pl) = match g.padding {
        Padding::Valid => ((wd - g.kernel_w) / g.stride_w + 1, 0),
        Padding::Same => {
            let o = wd.div_ceil(g.stride_w);
            (
                o,
                ((o - 1) * g.stride_w + g.kernel_w).saturating_sub(wd) / 2,
            )
        }
    };
    let cout = g.out_channels;
    let mut out = Tensor::zeros(&[n, oh, ow, cout]);
    for s in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = b.data()[co];
                    for ky in 0..g.kernel_h {
                        for kx in 0..g.kernel_w {
                            let iy = (oy * g.stride_h + ky) as isize - pt as isize;
                            let ix = (ox * g.stride_w + kx) as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                let xv =
                                    x.data()[((s * h + iy as usize) * wd + ix as usize) * cin + ci];
                                let wv = w.data()[((ky * g.kernel_w + kx) * cin + ci) * cout + co];
                                acc += xv * wv;
                            }
                        }
                    }
                    out.data_mut()[((s * oh + oy) * ow + ox) * cout + co] = acc;
                }
            }
        }
    }
    out
}

/// Central-difference gradient of `f` with respect to every element of `x`.
pub(crate) fn numeric_grad(
    x: &Tensor<f64>,
    h: f64,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
) -> Tensor<f64> {
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest `|a − n| / max(|a| + |n|, floor)` over all elements.
pub(crate) fn max_rel_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Scalar probe `L = Σ y ⊙ r` with fixed random weights `r`, so that
/// `dL/dy = r`.
pub(crate) fn weighted_sum(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

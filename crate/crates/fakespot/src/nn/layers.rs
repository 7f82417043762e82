//! Layer primitives with hand-derived backward passes.
//!
//! Convolutions are valid (no padding), stride 1. Pooling is 2x2 max with
//! stride 2; odd trailing rows/columns are discarded.

use crate::tensor::{Scalar, Tensor4};
use crate::Error;

/// Valid-convolution output size: `(h - kh + 1, w - kw + 1)`.
pub fn output_shape(h: usize, w: usize, kernel: (usize, usize)) -> Result<(usize, usize), Error> {
    let (kh, kw) = kernel;
    if kh == 0 || kw == 0 || kh > h || kw > w {
        return Err(Error::InvalidArgument(format!(
            "kernel {kh}x{kw} does not fit input {h}x{w}"
        )));
    }
    Ok((h - kh + 1, w - kw + 1))
}

/// Forward convolution. `kernels` is `(filters, in_ch, kh, kw)`, `bias` has
/// one entry per filter. No activation applied.
pub fn conv2d_forward<F: Scalar>(
    x: &Tensor4<F>,
    kernels: &Tensor4<F>,
    bias: &[F],
) -> Result<Tensor4<F>, Error> {
    let (n, c, h, w) = x.shape();
    let (filters, kc, kh, kw) = kernels.shape();
    if kc != c {
        return Err(Error::ShapeMismatch(format!(
            "input has {c} channels, kernel expects {kc}"
        )));
    }
    if bias.len() != filters {
        return Err(Error::ShapeMismatch("bias length != filter count".into()));
    }
    let (oh, ow) = output_shape(h, w, (kh, kw))?;
    let mut out = Tensor4::zeros((n, filters, oh, ow));
    for b in 0..n {
        for f in 0..filters {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = bias[f];
                    for ch in 0..c {
                        for m in 0..kh {
                            for nn in 0..kw {
                                acc = acc + x.get(b, ch, i + m, j + nn) * kernels.get(f, ch, m, nn);
                            }
                        }
                    }
                    out.set(b, f, i, j, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a valid convolution w.r.t. input, kernels and bias.
pub fn conv2d_backward<F: Scalar>(
    x: &Tensor4<F>,
    kernels: &Tensor4<F>,
    upstream: &Tensor4<F>,
) -> (Tensor4<F>, Tensor4<F>, Vec<F>) {
    let (n, c, h, w) = x.shape();
    let (filters, _, kh, kw) = kernels.shape();
    let (_, _, oh, ow) = upstream.shape();

    let mut dx = Tensor4::zeros((n, c, h, w));
    let mut dk = Tensor4::zeros(kernels.shape());
    let mut db = vec![F::zero(); filters];

    for b in 0..n {
        for f in 0..filters {
            for i in 0..oh {
                for j in 0..ow {
                    let up = upstream.get(b, f, i, j);
                    db[f] = db[f] + up;
                    for ch in 0..c {
                        for m in 0..kh {
                            for nn in 0..kw {
                                let dki = dk.index(f, ch, m, nn);
                                dk.data_mut()[dki] =
                                    dk.data_mut()[dki] + up * x.get(b, ch, i + m, j + nn);
                                let dxi = dx.index(b, ch, i + m, j + nn);
                                dx.data_mut()[dxi] =
                                    dx.data_mut()[dxi] + up * kernels.get(f, ch, m, nn);
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dk, db)
}

pub fn relu<F: Scalar>(x: &Tensor4<F>) -> Tensor4<F> {
    x.map_elementwise(|v| if v > F::zero() { v } else { F::zero() })
}

/// Passes upstream gradient where the forward input was strictly positive
/// (subgradient 0 at exactly 0).
pub fn relu_backward<F: Scalar>(x: &Tensor4<F>, upstream: &Tensor4<F>) -> Tensor4<F> {
    assert_eq!(x.shape(), upstream.shape());
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&xi, &ui)| if xi > F::zero() { ui } else { F::zero() })
        .collect();
    Tensor4::from_values(x.shape(), data).unwrap()
}

/// 2x2 stride-2 max pooling. Returns the pooled tensor and the flat input
/// index of each window maximum (first index wins ties). Odd trailing
/// rows/columns are discarded.
pub fn maxpool2<F: Scalar>(x: &Tensor4<F>) -> (Tensor4<F>, Vec<usize>) {
    let (n, c, h, w) = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros((n, c, oh, ow));
    let mut argmax = vec![0usize; n * c * oh * ow];
    for b in 0..n {
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = x.get(b, ch, 2 * i, 2 * j);
                    let mut best_idx = x.index(b, ch, 2 * i, 2 * j);
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let v = x.get(b, ch, 2 * i + di, 2 * j + dj);
                        if v > best {
                            best = v;
                            best_idx = x.index(b, ch, 2 * i + di, 2 * j + dj);
                        }
                    }
                    let oi = out.index(b, ch, i, j);
                    out.data_mut()[oi] = best;
                    argmax[oi] = best_idx;
                }
            }
        }
    }
    (out, argmax)
}

/// Routes upstream gradient back to the stored argmax positions.
pub fn maxpool2_backward<F: Scalar>(
    input_shape: (usize, usize, usize, usize),
    argmax: &[usize],
    upstream: &Tensor4<F>,
) -> Tensor4<F> {
    let mut dx = Tensor4::zeros(input_shape);
    for (oi, &src) in argmax.iter().enumerate() {
        dx.data_mut()[src] = dx.data_mut()[src] + upstream.data()[oi];
    }
    dx
}

/// Dense pre-activation `Wx + b`. `weights` is row-major `(units, in_len)`.
pub fn dense_forward<F: Scalar>(
    x: &[F],
    weights: &[F],
    bias: &[F],
    units: usize,
) -> Result<Vec<F>, Error> {
    let in_len = x.len();
    if weights.len() != units * in_len || bias.len() != units {
        return Err(Error::ShapeMismatch(format!(
            "dense layer expects {units}x{in_len} weights, got {} (bias {})",
            weights.len(),
            bias.len()
        )));
    }
    let mut out = Vec::with_capacity(units);
    for u in 0..units {
        let row = &weights[u * in_len..(u + 1) * in_len];
        let mut acc = bias[u];
        for (wi, xi) in row.iter().zip(x) {
            acc = acc + *wi * *xi;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Gradients of `Wx + b` w.r.t. weights, bias and input.
pub fn dense_backward<F: Scalar>(
    x: &[F],
    weights: &[F],
    units: usize,
    upstream: &[F],
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let in_len = x.len();
    assert_eq!(upstream.len(), units);
    let mut dw = vec![F::zero(); units * in_len];
    let mut db = vec![F::zero(); units];
    let mut dx = vec![F::zero(); in_len];
    for u in 0..units {
        let up = upstream[u];
        db[u] = up;
        let row = &weights[u * in_len..(u + 1) * in_len];
        for i in 0..in_len {
            dw[u * in_len + i] = up * x[i];
            dx[i] = dx[i] + up * row[i];
        }
    }
    (dw, db, dx)
}

/// Numerically stable logistic function.
pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// Probability clamp applied before the BCE log.
pub const BCE_CLIP: f64 = 1e-7;

/// Binary cross-entropy for a single prediction; `p` is clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn bce_loss<F: Scalar>(p: F, y: F) -> F {
    let lo = F::from_f64(BCE_CLIP);
    let hi = F::one() - lo;
    let p = p.max(lo).min(hi);
    -(y * p.ln() + (F::one() - y) * (F::one() - p).ln())
}

/// Gradient of BCE w.r.t. the pre-sigmoid logit (fused form).
pub fn bce_logit_grad<F: Scalar>(p: F, y: F) -> F {
    p - y
}

/// Hard 0.5 threshold; ties round up.
pub fn predict_label<F: Scalar>(p: F) -> u8 {
    if p >= F::from_f64(0.5) {
        1
    } else {
        0
    }
}

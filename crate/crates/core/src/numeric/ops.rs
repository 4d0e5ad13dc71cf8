//! Forward kernels shared by the tape and by plain inference code, so both
//! paths produce bit-identical values.

use super::Tensor;
use crate::error::{Error, Result};

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y = x W + b` for `x: [n, in]` (or `[in]`), `W: [in, out]`, `b: [out]`.
pub fn affine_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if w.rank() != 2 || b.rank() != 1 || x.rank() == 0 || x.rank() > 2 {
        return Err(Error::Shape(format!(
            "affine expects x[n,in], W[in,out], b[out]; got {:?}, {:?}, {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (fan_in, fan_out) = (w.shape()[0], w.shape()[1]);
    if x.cols() != fan_in || b.len() != fan_out {
        return Err(Error::Shape(format!(
            "affine: x {:?} · W {:?} + b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let n = x.rows();
    let mut out = vec![0.0f32; n * fan_out];
    let wd = w.data();
    for r in 0..n {
        let xr = x.row(r);
        let yr = &mut out[r * fan_out..(r + 1) * fan_out];
        yr.copy_from_slice(b.data());
        for (k, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &wd[k * fan_out..(k + 1) * fan_out];
            for (y, &wv) in yr.iter_mut().zip(wrow) {
                *y += xv * wv;
            }
        }
    }
    let shape = if x.rank() == 1 {
        vec![fan_out]
    } else {
        vec![n, fan_out]
    };
    Tensor::new(shape, out)
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

pub fn sigmoid_scalar(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut()
        .iter_mut()
        .for_each(|v| *v = sigmoid_scalar(*v));
    y
}

/// Max-shifted log-softmax over a flat slice. The normalizer is accumulated
/// in `f64` so the exponentials of the result sum to one within 1e-6 even for
/// long inputs.
pub fn log_softmax_slice(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let sum: f64 = logits.iter().map(|&v| f64::from(v - max).exp()).sum();
    let log_z = max as f64 + sum.ln();
    logits.iter().map(|&v| (v as f64 - log_z) as f32).collect()
}

/// Log-probabilities of a categorical distribution given its logits.
pub fn softmax_logprobs(logits: &Tensor) -> Tensor {
    Tensor::vector(log_softmax_slice(logits.data()))
}

/// Scores `⟨rows[k], v⟩` for the listed rows of a matrix.
pub fn row_scores(m: &Tensor, rows: &[usize], v: &[f32]) -> Vec<f32> {
    rows.iter().map(|&r| dot(m.row(r), v)).collect()
}

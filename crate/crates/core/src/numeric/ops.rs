//! Differentiable primitives over dense vectors.
//!
//! Each forward function has a matching `*_backward` that maps the upstream
//! gradient `dy` to gradients of the inputs. The tape in [`super::tape`] is a
//! thin recorder over these functions.

use rand::Rng;

use super::matrix::MatRef;
use crate::error::{ensure_len, Error, Result};

/// `W x + b`.
pub fn linear(w: MatRef<'_>, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    ensure_len("linear bias", w.rows(), b.len())?;
    let mut y = matvec(w, x)?;
    for (yi, bi) in y.iter_mut().zip(b) {
        *yi += bi;
    }
    Ok(y)
}

/// `W x`.
pub fn matvec(w: MatRef<'_>, x: &[f64]) -> Result<Vec<f64>> {
    ensure_len("linear input", w.cols(), x.len())?;
    Ok((0..w.rows())
        .map(|r| super::matrix::dot(w.row(r), x))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    /// Row-major, same shape as `W`.
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    pub dx: Vec<f64>,
}

/// dL/dW = dy xᵀ, dL/db = dy, dL/dx = Wᵀ dy.
pub fn linear_backward(w: MatRef<'_>, x: &[f64], dy: &[f64]) -> Result<LinearGrads> {
    ensure_len("linear input", w.cols(), x.len())?;
    ensure_len("linear upstream", w.rows(), dy.len())?;
    let mut dw = vec![0.0; w.rows() * w.cols()];
    let mut dx = vec![0.0; w.cols()];
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = w.row(r);
        let dw_row = &mut dw[r * w.cols()..(r + 1) * w.cols()];
        for c in 0..w.cols() {
            dw_row[c] = g * x[c];
            dx[c] += g * row[c];
        }
    }
    Ok(LinearGrads {
        dw,
        db: dy.to_vec(),
        dx,
    })
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Subgradient at zero is zero.
pub fn relu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Takes the forward output `y = σ(x)`.
pub fn sigmoid_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(&s, &g)| g * s * (1.0 - s)).collect()
}

pub fn tanh(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Takes the forward output `y = tanh(x)`.
pub fn tanh_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(&t, &g)| g * (1.0 - t * t)).collect()
}

pub fn hadamard(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    ensure_len("hadamard", a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

pub fn add(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    ensure_len("add", a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| x + y).collect())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Returns `(loss, probs)` with `loss = -log softmax(logits)[gold]`.
///
/// The loss is computed from the log-sum-exp directly so that confident
/// logits do not underflow to `log(0)`.
pub fn softmax_cross_entropy(logits: &[f64], gold: usize) -> Result<(f64, Vec<f64>)> {
    if gold >= logits.len() {
        return Err(Error::Index {
            index: gold,
            len: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_z = max + sum.ln();
    let probs = softmax(logits);
    Ok((log_z - logits[gold], probs))
}

/// dL/dlogits = probs − onehot(gold), scaled by the upstream scalar.
pub fn softmax_cross_entropy_backward(probs: &[f64], gold: usize, dl: f64) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| dl * (p - if k == gold { 1.0 } else { 0.0 }))
        .collect()
}

pub fn concat(parts: &[&[f64]]) -> Result<Vec<f64>> {
    if parts.is_empty() {
        return Err(Error::Argument("concat of an empty list".into()));
    }
    Ok(parts.concat())
}

/// Inverse of [`concat`]: slices `dy` back into segments of the given lengths.
pub fn split(dy: &[f64], lengths: &[usize]) -> Result<Vec<Vec<f64>>> {
    ensure_len("split", lengths.iter().sum(), dy.len())?;
    let mut out = Vec::with_capacity(lengths.len());
    let mut start = 0;
    for &len in lengths {
        out.push(dy[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// Elementwise arithmetic mean, accumulated in list order as a running mean
/// so that the mean of identical vectors reproduces the vector exactly.
pub fn mean_reduce(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Argument("mean of an empty list".into()))?;
    let mut acc = first.to_vec();
    for (j, v) in vectors.iter().enumerate().skip(1) {
        ensure_len("mean_reduce", acc.len(), v.len())?;
        let count = (j + 1) as f64;
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += (x - *a) / count;
        }
    }
    Ok(acc)
}

/// Each input receives `dy / n`.
pub fn mean_reduce_backward(n: usize, dy: &[f64]) -> Vec<f64> {
    let n = n as f64;
    dy.iter().map(|g| g / n).collect()
}

/// Inverted dropout. Returns the output and the multiplicative mask
/// (`0` or `1/(1-p)` per element; all ones when not training).
pub fn dropout<R: Rng + ?Sized>(
    x: &[f64],
    p: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Argument(format!("dropout rate {p} outside [0, 1)")));
    }
    if !training || p == 0.0 {
        return Ok((x.to_vec(), vec![1.0; x.len()]));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((y, mask))
}

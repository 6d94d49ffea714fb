//! Layer operations with hand-written backward passes.
//!
//! Sequence activations are laid out `[batch, time, channels]`. Backward
//! functions accumulate parameter gradients into caller-owned tensors (so a
//! batch can be processed in pieces) and return the gradient with respect to
//! the layer input.

use rand::Rng as _;

use super::tensor::{Scalar, Tensor};
use super::NnError;
use crate::rng::Rng;

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside the loss.
pub const BCE_EPS: f64 = 1e-7;

fn expect_rank<T: Scalar>(op: &'static str, t: &Tensor<T>, rank: usize) -> Result<(), NnError> {
    if t.shape().len() != rank {
        return Err(NnError::Shape {
            op,
            detail: format!("expected rank {rank}, got shape {:?}", t.shape()),
        });
    }
    Ok(())
}

/// Gathers embedding rows: `ids` is `batch * len` row-major.
pub fn embed_forward<T: Scalar>(ids: &[u32], batch: usize, len: usize, table: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    expect_rank("embedding", table, 2)?;
    if ids.len() != batch * len {
        return Err(NnError::Shape {
            op: "embedding",
            detail: format!("{} ids for batch {batch} x len {len}", ids.len()),
        });
    }
    let (vocab, dim) = (table.shape()[0], table.shape()[1]);
    let mut out = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        let row = id as usize;
        if row >= vocab {
            return Err(NnError::IdOutOfRange { id, vocab_size: vocab });
        }
        out.extend_from_slice(&table.data()[row * dim..(row + 1) * dim]);
    }
    Tensor::from_vec(&[batch, len, dim], out)
}

/// Scatters `grad_out` rows back into `grad_table`.
pub fn embed_backward<T: Scalar>(ids: &[u32], grad_out: &Tensor<T>, grad_table: &mut Tensor<T>) {
    let dim = grad_table.shape()[1];
    let g = grad_out.data();
    let table = grad_table.data_mut();
    for (pos, &id) in ids.iter().enumerate() {
        let dst = &mut table[id as usize * dim..(id as usize + 1) * dim];
        for (d, &s) in dst.iter_mut().zip(&g[pos * dim..(pos + 1) * dim]) {
            *d = *d + s;
        }
    }
}

/// Valid (unpadded) 1-D convolution, stride 1.
/// `x`: `[batch, len, c_in]`, `kernel`: `[k, c_in, c_out]`, `bias`: `[c_out]`.
pub fn conv1d_forward<T: Scalar>(x: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    expect_rank("conv1d", x, 3)?;
    expect_rank("conv1d", kernel, 3)?;
    let (batch, len, c_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (k, k_in, c_out) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    if k_in != c_in || bias.shape() != [c_out] {
        return Err(NnError::Shape {
            op: "conv1d",
            detail: format!(
                "input {:?}, kernel {:?}, bias {:?}",
                x.shape(),
                kernel.shape(),
                bias.shape()
            ),
        });
    }
    if len < k {
        return Err(NnError::TooShortForKernel { len, kernel: k });
    }
    let out_len = len - k + 1;
    let xd = x.data();
    let kd = kernel.data();
    let mut out = vec![T::zero(); batch * out_len * c_out];
    for b in 0..batch {
        for t in 0..out_len {
            let row = &mut out[(b * out_len + t) * c_out..(b * out_len + t + 1) * c_out];
            row.copy_from_slice(bias.data());
            for dt in 0..k {
                let x_row = &xd[(b * len + t + dt) * c_in..(b * len + t + dt + 1) * c_in];
                for (i, &xv) in x_row.iter().enumerate() {
                    if xv == T::zero() {
                        continue;
                    }
                    let k_row = &kd[(dt * c_in + i) * c_out..(dt * c_in + i + 1) * c_out];
                    for (o, &w) in row.iter_mut().zip(k_row) {
                        *o = *o + xv * w;
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[batch, out_len, c_out], out)
}

/// Accumulates kernel and bias gradients; returns the input gradient.
pub fn conv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_kernel: &mut Tensor<T>,
    grad_bias: &mut Tensor<T>,
) -> Tensor<T> {
    let (batch, len, c_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (k, c_out) = (kernel.shape()[0], kernel.shape()[2]);
    let out_len = grad_out.shape()[1];
    let xd = x.data();
    let kd = kernel.data();
    let gd = grad_out.data();
    let mut dx = vec![T::zero(); xd.len()];
    let gk = grad_kernel.data_mut();
    for b in 0..batch {
        for t in 0..out_len {
            let g_row = &gd[(b * out_len + t) * c_out..(b * out_len + t + 1) * c_out];
            for (db, &g) in grad_bias.data_mut().iter_mut().zip(g_row) {
                *db = *db + g;
            }
            for dt in 0..k {
                let base = (b * len + t + dt) * c_in;
                for i in 0..c_in {
                    let off = (dt * c_in + i) * c_out;
                    let k_row = &kd[off..off + c_out];
                    let mut acc = T::zero();
                    for (&w, &g) in k_row.iter().zip(g_row) {
                        acc = acc + w * g;
                    }
                    dx[base + i] = dx[base + i] + acc;
                    let xv = xd[base + i];
                    if xv != T::zero() {
                        for (d, &g) in gk[off..off + c_out].iter_mut().zip(g_row) {
                            *d = *d + xv * g;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(x.shape(), dx).expect("input gradient keeps the input shape")
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes gradient where the forward input was positive.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

/// Non-overlapping max pooling over time (window = stride = `pool`); a
/// trailing partial window is dropped. Returns the output and, for each
/// output element, the flat input index that won (first maximum on ties).
pub fn maxpool1d<T: Scalar>(x: &Tensor<T>, pool: usize) -> Result<(Tensor<T>, Vec<usize>), NnError> {
    expect_rank("maxpool1d", x, 3)?;
    if pool == 0 {
        return Err(NnError::Config("pool size must be positive".into()));
    }
    let (batch, len, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if len < pool {
        return Err(NnError::TooShortForPool { len, pool });
    }
    let out_len = len / pool;
    let xd = x.data();
    let mut out = Vec::with_capacity(batch * out_len * c);
    let mut argmax = Vec::with_capacity(batch * out_len * c);
    for b in 0..batch {
        for t in 0..out_len {
            for ch in 0..c {
                let mut best = (b * len + t * pool) * c + ch;
                for w in 1..pool {
                    let idx = (b * len + t * pool + w) * c + ch;
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                out.push(xd[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::from_vec(&[batch, out_len, c], out)?, argmax))
}

pub fn maxpool1d_backward<T: Scalar>(grad_out: &Tensor<T>, argmax: &[usize], input_shape: &[usize]) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        d[idx] = d[idx] + g;
    }
    dx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Inverted dropout. In training each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; the returned mask
/// holds the per-element multiplier. Evaluation is the identity and draws
/// nothing from `rng`.
pub fn dropout<T: Scalar>(x: &Tensor<T>, rate: f64, phase: Phase, rng: &mut Rng) -> (Tensor<T>, Option<Vec<T>>) {
    if phase == Phase::Eval || rate == 0.0 {
        return (x.clone(), None);
    }
    let keep = T::of_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let out = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    (Tensor::from_vec(x.shape(), out).expect("same shape"), Some(mask))
}

pub fn dropout_backward<T: Scalar>(grad_out: &Tensor<T>, mask: Option<&[T]>) -> Tensor<T> {
    match mask {
        None => grad_out.clone(),
        Some(m) => {
            let data = grad_out.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
            Tensor::from_vec(grad_out.shape(), data).expect("same shape")
        }
    }
}

/// `x · weight + bias` with `x`: `[batch, n_in]`, `weight`: `[n_in, n_out]`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    expect_rank("dense", x, 2)?;
    expect_rank("dense", weight, 2)?;
    let (batch, n_in) = (x.shape()[0], x.shape()[1]);
    let n_out = weight.shape()[1];
    if weight.shape()[0] != n_in || bias.shape() != [n_out] {
        return Err(NnError::Shape {
            op: "dense",
            detail: format!("input {:?}, weight {:?}, bias {:?}", x.shape(), weight.shape(), bias.shape()),
        });
    }
    let wd = weight.data();
    let mut out = vec![T::zero(); batch * n_out];
    for b in 0..batch {
        let row = &mut out[b * n_out..(b + 1) * n_out];
        row.copy_from_slice(bias.data());
        for (i, &xv) in x.data()[b * n_in..(b + 1) * n_in].iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            for (o, &w) in row.iter_mut().zip(&wd[i * n_out..(i + 1) * n_out]) {
                *o = *o + xv * w;
            }
        }
    }
    Tensor::from_vec(&[batch, n_out], out)
}

pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_weight: &mut Tensor<T>,
    grad_bias: &mut Tensor<T>,
) -> Tensor<T> {
    let (batch, n_in) = (x.shape()[0], x.shape()[1]);
    let n_out = weight.shape()[1];
    let wd = weight.data();
    let gw = grad_weight.data_mut();
    let mut dx = vec![T::zero(); batch * n_in];
    for b in 0..batch {
        let g_row = &grad_out.data()[b * n_out..(b + 1) * n_out];
        for (db, &g) in grad_bias.data_mut().iter_mut().zip(g_row) {
            *db = *db + g;
        }
        for i in 0..n_in {
            let w_row = &wd[i * n_out..(i + 1) * n_out];
            let mut acc = T::zero();
            for (&w, &g) in w_row.iter().zip(g_row) {
                acc = acc + w * g;
            }
            dx[b * n_in + i] = acc;
            let xv = x.data()[b * n_in + i];
            if xv != T::zero() {
                for (d, &g) in gw[i * n_out..(i + 1) * n_out].iter_mut().zip(g_row) {
                    *d = *d + xv * g;
                }
            }
        }
    }
    Tensor::from_vec(x.shape(), dx).expect("same shape")
}

/// Logistic function, evaluated without overflow for large `|z|`.
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Mean binary cross-entropy of probabilities `p` against 0/1 targets.
pub fn bce_loss<T: Scalar>(p: &[T], y: &[T]) -> T {
    weighted_bce_loss(p, y, None)
}

/// Binary cross-entropy with optional per-sample weights, averaged over the batch.
pub fn weighted_bce_loss<T: Scalar>(p: &[T], y: &[T], weights: Option<&[T]>) -> T {
    let eps = T::of_f64(BCE_EPS);
    let n = T::of_f64(p.len().max(1) as f64);
    let mut total = T::zero();
    for (i, (&pi, &yi)) in p.iter().zip(y).enumerate() {
        let pc = pi.max(eps).min(T::one() - eps);
        let l = -(yi * pc.ln() + (T::one() - yi) * (T::one() - pc).ln());
        let w = weights.map_or(T::one(), |w| w[i]);
        total = total + w * l;
    }
    total / n
}

/// Gradient of the (weighted) mean BCE with respect to the pre-sigmoid logits.
pub fn bce_logit_grad<T: Scalar>(p: &[T], y: &[T], weights: Option<&[T]>) -> Vec<T> {
    let n = T::of_f64(p.len().max(1) as f64);
    p.iter()
        .zip(y)
        .enumerate()
        .map(|(i, (&pi, &yi))| weights.map_or(T::one(), |w| w[i]) * (pi - yi) / n)
        .collect()
}

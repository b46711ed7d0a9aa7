use super::Real;
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Below this many output elements a matmul stays single-threaded; the rayon
/// split is by output row pair, so threading never changes the reduction
/// order of any element and results are bit-identical at every thread count.
const PAR_THRESHOLD: usize = 16 * 1024;

/// Column-block width of the register-tiled micro-kernel.
const MM_BLOCK: usize = 64;

/// Micro-kernel: one output row times a `jw`-wide column block, accumulated
/// in a stack tile the compiler keeps in vector registers.
#[inline]
fn mm_row_block<T: Real>(a_row: &[T], b: &[T], n: usize, j0: usize, jw: usize, out: &mut [T]) {
    let mut acc = [T::ZERO; MM_BLOCK];
    if jw == MM_BLOCK {
        for (kk, aik) in a_row.iter().enumerate() {
            let bb = &b[kk * n + j0..kk * n + j0 + MM_BLOCK];
            for t in 0..MM_BLOCK {
                acc[t] += *aik * bb[t];
            }
        }
    } else {
        for (kk, aik) in a_row.iter().enumerate() {
            let bb = &b[kk * n + j0..kk * n + j0 + jw];
            for t in 0..jw {
                acc[t] += *aik * bb[t];
            }
        }
    }
    for t in 0..jw {
        out[j0 + t] += acc[t];
    }
}

/// Micro-kernel for two output rows sharing each `b` block load.
#[inline]
fn mm_two_row_block<T: Real>(
    a0: &[T],
    a1: &[T],
    b: &[T],
    n: usize,
    j0: usize,
    jw: usize,
    out0: &mut [T],
    out1: &mut [T],
) {
    let mut acc0 = [T::ZERO; MM_BLOCK];
    let mut acc1 = [T::ZERO; MM_BLOCK];
    if jw == MM_BLOCK {
        for kk in 0..a0.len() {
            let x0 = a0[kk];
            let x1 = a1[kk];
            let bb = &b[kk * n + j0..kk * n + j0 + MM_BLOCK];
            for t in 0..MM_BLOCK {
                acc0[t] += x0 * bb[t];
                acc1[t] += x1 * bb[t];
            }
        }
    } else {
        for kk in 0..a0.len() {
            let x0 = a0[kk];
            let x1 = a1[kk];
            let bb = &b[kk * n + j0..kk * n + j0 + jw];
            for t in 0..jw {
                acc0[t] += x0 * bb[t];
                acc1[t] += x1 * bb[t];
            }
        }
    }
    for t in 0..jw {
        out0[j0 + t] += acc0[t];
        out1[j0 + t] += acc1[t];
    }
}

fn mm_into<T: Real>(out: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let pair_body = |(rows_out, a_rows): (&mut [T], &[T])| {
        let (out0, out1) = rows_out.split_at_mut(n);
        let (a0, a1) = a_rows.split_at(k);
        let mut j0 = 0;
        while j0 < n {
            let jw = (n - j0).min(MM_BLOCK);
            mm_two_row_block(a0, a1, b, n, j0, jw, out0, out1, );
            j0 += jw;
        }
    };
    let single_body = |(row_out, a_row): (&mut [T], &[T])| {
        let mut j0 = 0;
        while j0 < n {
            let jw = (n - j0).min(MM_BLOCK);
            mm_row_block(a_row, b, n, j0, jw, row_out);
            j0 += jw;
        }
    };
    let pairs = m / 2;
    let (out_pairs, out_tail) = out.split_at_mut(pairs * 2 * n);
    let (a_pairs, a_tail) = a.split_at(pairs * 2 * k);
    if m * n >= PAR_THRESHOLD {
        out_pairs
            .par_chunks_exact_mut(2 * n)
            .zip(a_pairs.par_chunks_exact(2 * k))
            .for_each(pair_body);
    } else {
        out_pairs
            .chunks_exact_mut(2 * n)
            .zip(a_pairs.chunks_exact(2 * k))
            .for_each(pair_body);
    }
    if m % 2 == 1 {
        single_body((out_tail, a_tail));
    }
}

fn transpose<T: Real>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

/// `out = a @ b` with `a: [m,k]`, `b: [k,n]`, all row-major.
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; m * n];
    mm_into(&mut out, a, b, m, k, n);
    out
}

/// `out = a @ b^T` with `a: [m,k]`, `b: [n,k]`. The transpose is
/// materialized once so the main loop runs the register-tiled kernel.
pub fn matmul_a_bt<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(b.len(), n * k);
    let bt = transpose(b, n, k);
    matmul(a, &bt, m, k, n)
}

/// `out += a^T @ b` with `a: [m,k]`, `b: [m,n]`, `out: [k,n]`. Used for
/// weight gradients, hence the accumulate-in-place form.
pub fn matmul_at_b_accum<T: Real>(out: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    let at = transpose(a, m, k);
    mm_into(out, &at, b, k, m, n);
}

/// `acc += s * x`, the axpy kernel every matmul reduces to.
#[inline]
pub fn add_assign_scaled<T: Real>(acc: &mut [T], x: &[T], s: T) {
    debug_assert_eq!(acc.len(), x.len());
    for (a, v) in acc.iter_mut().zip(x) {
        *a += s * *v;
    }
}

/// Dot product with eight fixed-order partial sums so the compiler can
/// vectorize without reassociating; the summation order is part of the
/// deterministic contract.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::ZERO; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] += xa[i] * xb[i];
        }
    }
    let mut tail = T::ZERO;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail
}

/// Numerically stable in-place softmax (max subtraction).
pub fn softmax_in_place<T: Real>(x: &mut [T]) {
    if x.is_empty() {
        return;
    }
    let mut m = x[0];
    for v in x.iter() {
        m = m.max(*v);
    }
    let mut sum = T::ZERO;
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Per-row statistics cached by [`layer_norm`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    /// Normalized input (before gain/bias), one entry per element.
    pub xhat: Vec<T>,
    /// 1 / sqrt(var + eps), one entry per row.
    pub rstd: Vec<T>,
}

/// `out = gain .* (x - mean) / sqrt(var + eps) + bias`, row-wise over a
/// `[rows, d]` buffer. Variance is the population variance (divide by `d`).
pub fn layer_norm<T: Real>(
    x: &[T],
    gain: &[T],
    bias: &[T],
    eps: T,
    d: usize,
) -> (Vec<T>, LayerNormCache<T>) {
    debug_assert_eq!(x.len() % d, 0);
    let rows = x.len() / d;
    let inv_d = T::ONE / T::from_f64(d as f64);
    let mut out = vec![T::ZERO; x.len()];
    let mut xhat = vec![T::ZERO; x.len()];
    let mut rstd = vec![T::ZERO; rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mut mean = T::ZERO;
        for v in xr {
            mean += *v;
        }
        mean *= inv_d;
        let mut var = T::ZERO;
        for v in xr {
            let c = *v - mean;
            var += c * c;
        }
        var *= inv_d;
        let rs = T::ONE / (var + eps).sqrt();
        rstd[r] = rs;
        let xh = &mut xhat[r * d..(r + 1) * d];
        let o = &mut out[r * d..(r + 1) * d];
        for i in 0..d {
            xh[i] = (xr[i] - mean) * rs;
            o[i] = gain[i] * xh[i] + bias[i];
        }
    }
    (out, LayerNormCache { xhat, rstd })
}

/// Backward of [`layer_norm`]. Returns `d_input` and accumulates `d_gain`
/// and `d_bias`.
pub fn layer_norm_backward<T: Real>(
    d_out: &[T],
    gain: &[T],
    cache: &LayerNormCache<T>,
    d_gain: &mut [T],
    d_bias: &mut [T],
    d: usize,
) -> Vec<T> {
    let rows = d_out.len() / d;
    let inv_d = T::ONE / T::from_f64(d as f64);
    let mut dx = vec![T::ZERO; d_out.len()];
    for r in 0..rows {
        let dy = &d_out[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let rs = cache.rstd[r];
        let mut sum_dxhat = T::ZERO;
        let mut sum_dxhat_xhat = T::ZERO;
        for i in 0..d {
            let dxh = dy[i] * gain[i];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh[i];
            d_gain[i] += dy[i] * xh[i];
            d_bias[i] += dy[i];
        }
        let mean_dxhat = sum_dxhat * inv_d;
        let mean_dxhat_xhat = sum_dxhat_xhat * inv_d;
        let out = &mut dx[r * d..(r + 1) * d];
        for i in 0..d {
            let dxh = dy[i] * gain[i];
            out[i] = rs * (dxh - mean_dxhat - xh[i] * mean_dxhat_xhat);
        }
    }
    dx
}

/// Loss `-ln softmax(logits)[target]` and its gradient
/// `softmax(logits) - one_hot(target)`.
pub fn cross_entropy<T: Real>(logits: &[T], target: usize) -> Result<(T, Vec<T>)> {
    if target >= logits.len() {
        return Err(Error::validation(format!(
            "cross_entropy target {} out of range for {} logits",
            target,
            logits.len()
        )));
    }
    let mut probs = logits.to_vec();
    softmax_in_place(&mut probs);
    let p = probs[target].max(T::from_f64(f64::MIN_POSITIVE));
    let loss = -p.ln();
    probs[target] -= T::ONE;
    Ok((loss, probs))
}

/// tanh via a single exp: `1 - 2/(e^{2x} + 1)`, with the argument clamped to
/// +-20 where the result already saturates exactly. Much faster than libm
/// tanh in hot loops and used consistently by forward and backward passes.
#[inline]
pub fn fast_tanh<T: Real>(x: T) -> T {
    let lim = T::from_f64(20.0);
    let e = (T::from_f64(2.0) * x.max(-lim).min(lim)).exp();
    (e - T::ONE) / (e + T::ONE)
}

/// GELU, tanh approximation (the BERT-family form).
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    gelu_with_t(x).0
}

/// GELU plus the inner tanh value, cached by forward passes so the backward
/// pass does not recompute it.
#[inline]
pub fn gelu_with_t<T: Real>(x: T) -> (T, T) {
    let c = T::from_f64(0.7978845608028654); // sqrt(2/pi)
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let t = fast_tanh(c * (x + k * x * x * x));
    (half * x * (T::ONE + t), t)
}

/// d gelu(x) / dx given the cached inner tanh value.
#[inline]
pub fn gelu_grad_from_t<T: Real>(x: T, t: T) -> T {
    let c = T::from_f64(0.7978845608028654);
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let sech2 = T::ONE - t * t;
    half * (T::ONE + t) + half * x * sech2 * c * (T::ONE + three * k * x * x)
}

/// d gelu(x) / dx.
#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    gelu_grad_from_t(x, gelu_with_t(x).1)
}

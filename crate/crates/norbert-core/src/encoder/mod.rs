//! Bidirectional transformer encoder with a tied masked-token prediction
//! head: token + learned position embeddings, `l` layers of multi-head
//! self-attention and GELU feed-forward sublayers with post-norm residuals.
//!
//! Forward and backward passes are written by hand over flat row-major
//! buffers; the backward pass is verified against central differences (see
//! the gradient-check tests and the acceptance suite).

mod checkpoint;

pub use checkpoint::{load_checkpoint, load_checkpoint_from, save_checkpoint, save_checkpoint_to};

use crate::error::{Error, Result};
use crate::numerics::{
    add_assign_scaled, cross_entropy, dot, gelu_grad_from_t, gelu_with_t, layer_norm,
    layer_norm_backward, matmul, matmul_a_bt, matmul_at_b_accum, softmax_in_place, LayerNormCache,
    Real, Rng, Tensor,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Embedding dimension.
    pub dim: usize,
    /// Attention heads.
    pub heads: usize,
    /// Encoder layers.
    pub layers: usize,
    /// Feed-forward hidden dimension.
    pub ffn_dim: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    pub fn new(vocab_size: usize) -> Self {
        EncoderConfig {
            dim: 128,
            heads: 8,
            layers: 4,
            ffn_dim: 512,
            max_len: 64,
            vocab_size,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.layers == 0 || self.ffn_dim == 0 {
            return Err(Error::validation("encoder dimensions must be positive"));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::validation(format!(
                "dim {} must be divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if self.max_len == 0 {
            return Err(Error::validation("max_len must be >= 1"));
        }
        if self.vocab_size == 0 {
            return Err(Error::validation("vocab_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

#[derive(Debug, Clone)]
pub struct LayerWeights<T> {
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub ln1_gain: Tensor<T>,
    pub ln1_bias: Tensor<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
    pub ln2_gain: Tensor<T>,
    pub ln2_bias: Tensor<T>,
}

/// All encoder parameters. The output projection of the prediction head is
/// tied to `token_embeddings`; only its bias is a separate tensor.
#[derive(Debug, Clone)]
pub struct EncoderWeights<T> {
    pub token_embeddings: Tensor<T>,
    pub position_embeddings: Tensor<T>,
    pub layers: Vec<LayerWeights<T>>,
    pub mlm_bias: Tensor<T>,
}

const INIT_STD: f64 = 0.02;

impl<T: Real> EncoderWeights<T> {
    /// Weight matrices from normal(0, 0.02^2), biases zero, layer-norm gains
    /// one.
    pub fn init(cfg: &EncoderConfig, rng: &mut Rng) -> Self {
        let d = cfg.dim;
        let f = cfg.ffn_dim;
        let mut ones = Tensor::zeros(&[d]);
        ones.fill(T::ONE);
        let layers = (0..cfg.layers)
            .map(|_| LayerWeights {
                wq: Tensor::randn(&[d, d], INIT_STD, rng),
                bq: Tensor::zeros(&[d]),
                wk: Tensor::randn(&[d, d], INIT_STD, rng),
                bk: Tensor::zeros(&[d]),
                wv: Tensor::randn(&[d, d], INIT_STD, rng),
                bv: Tensor::zeros(&[d]),
                wo: Tensor::randn(&[d, d], INIT_STD, rng),
                bo: Tensor::zeros(&[d]),
                ln1_gain: ones.clone(),
                ln1_bias: Tensor::zeros(&[d]),
                w1: Tensor::randn(&[d, f], INIT_STD, rng),
                b1: Tensor::zeros(&[f]),
                w2: Tensor::randn(&[f, d], INIT_STD, rng),
                b2: Tensor::zeros(&[d]),
                ln2_gain: ones.clone(),
                ln2_bias: Tensor::zeros(&[d]),
            })
            .collect();
        EncoderWeights {
            token_embeddings: Tensor::randn(&[cfg.vocab_size, d], INIT_STD, rng),
            position_embeddings: Tensor::randn(&[cfg.max_len, d], INIT_STD, rng),
            layers,
            mlm_bias: Tensor::zeros(&[cfg.vocab_size]),
        }
    }

    pub fn zeros_like(cfg: &EncoderConfig) -> Self {
        let d = cfg.dim;
        let f = cfg.ffn_dim;
        let layers = (0..cfg.layers)
            .map(|_| LayerWeights {
                wq: Tensor::zeros(&[d, d]),
                bq: Tensor::zeros(&[d]),
                wk: Tensor::zeros(&[d, d]),
                bk: Tensor::zeros(&[d]),
                wv: Tensor::zeros(&[d, d]),
                bv: Tensor::zeros(&[d]),
                wo: Tensor::zeros(&[d, d]),
                bo: Tensor::zeros(&[d]),
                ln1_gain: Tensor::zeros(&[d]),
                ln1_bias: Tensor::zeros(&[d]),
                w1: Tensor::zeros(&[d, f]),
                b1: Tensor::zeros(&[f]),
                w2: Tensor::zeros(&[f, d]),
                b2: Tensor::zeros(&[d]),
                ln2_gain: Tensor::zeros(&[d]),
                ln2_bias: Tensor::zeros(&[d]),
            })
            .collect();
        EncoderWeights {
            token_embeddings: Tensor::zeros(&[cfg.vocab_size, d]),
            position_embeddings: Tensor::zeros(&[cfg.max_len, d]),
            layers,
            mlm_bias: Tensor::zeros(&[cfg.vocab_size]),
        }
    }

    /// Canonical parameter order shared by the optimizer, the gradient
    /// checker, and the checkpoint format.
    pub fn param_names(n_layers: usize) -> Vec<String> {
        let mut names = vec![
            "token_embeddings".to_string(),
            "position_embeddings".to_string(),
        ];
        for l in 0..n_layers {
            for field in [
                "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_gain", "ln1_bias", "w1",
                "b1", "w2", "b2", "ln2_gain", "ln2_bias",
            ] {
                names.push(format!("layer{l}.{field}"));
            }
        }
        names.push("mlm_bias".to_string());
        names
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.token_embeddings, &self.position_embeddings];
        for l in &self.layers {
            out.extend([
                &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln1_gain, &l.ln1_bias,
                &l.w1, &l.b1, &l.w2, &l.b2, &l.ln2_gain, &l.ln2_bias,
            ]);
        }
        out.push(&self.mlm_bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> =
            vec![&mut self.token_embeddings, &mut self.position_embeddings];
        for l in &mut self.layers {
            out.extend([
                &mut l.wq,
                &mut l.bq,
                &mut l.wk,
                &mut l.bk,
                &mut l.wv,
                &mut l.bv,
                &mut l.wo,
                &mut l.bo,
                &mut l.ln1_gain,
                &mut l.ln1_bias,
                &mut l.w1,
                &mut l.b1,
                &mut l.w2,
                &mut l.b2,
                &mut l.ln2_gain,
                &mut l.ln2_bias,
            ]);
        }
        out.push(&mut self.mlm_bias);
        out
    }

    pub fn flatten(&self) -> Vec<T> {
        self.params().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn unflatten_from(&mut self, flat: &[T]) {
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len());
    }

    pub fn cast<U: Real>(&self) -> EncoderWeights<U> {
        EncoderWeights {
            token_embeddings: self.token_embeddings.cast(),
            position_embeddings: self.position_embeddings.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerWeights {
                    wq: l.wq.cast(),
                    bq: l.bq.cast(),
                    wk: l.wk.cast(),
                    bk: l.bk.cast(),
                    wv: l.wv.cast(),
                    bv: l.bv.cast(),
                    wo: l.wo.cast(),
                    bo: l.bo.cast(),
                    ln1_gain: l.ln1_gain.cast(),
                    ln1_bias: l.ln1_bias.cast(),
                    w1: l.w1.cast(),
                    b1: l.b1.cast(),
                    w2: l.w2.cast(),
                    b2: l.b2.cast(),
                    ln2_gain: l.ln2_gain.cast(),
                    ln2_bias: l.ln2_bias.cast(),
                })
                .collect(),
            mlm_bias: self.mlm_bias.cast(),
        }
    }
}

/// Encoder model: configuration plus weights.
#[derive(Debug, Clone)]
pub struct Encoder<T = f32> {
    pub config: EncoderConfig,
    pub weights: EncoderWeights<T>,
}

impl<T: Real> Encoder<T> {
    pub fn init(config: EncoderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let weights = EncoderWeights::init(&config, rng);
        Ok(Encoder { config, weights })
    }

    pub fn cast<U: Real>(&self) -> Encoder<U> {
        Encoder {
            config: self.config.clone(),
            weights: self.weights.cast(),
        }
    }
}

struct LayerCache<T> {
    x_in: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// [b, head, n, n] attention probabilities after masking + softmax.
    probs: Vec<T>,
    /// Concatenated per-head context, before the output projection.
    ctx: Vec<T>,
    attn_drop: Vec<T>,
    ln1: LayerNormCache<T>,
    ln1_out: Vec<T>,
    h_pre: Vec<T>,
    h_act: Vec<T>,
    gelu_t: Vec<T>,
    ffn_drop: Vec<T>,
    ln2: LayerNormCache<T>,
}

/// Output of [`Encoder::forward`]: hidden states plus every intermediate the
/// backward pass needs.
pub struct ForwardPass<T> {
    pub batch: usize,
    pub seq_len: usize,
    ids: Vec<u32>,
    emb_drop: Vec<T>,
    layer_caches: Vec<LayerCache<T>>,
    hidden: Vec<T>,
}

impl<T: Real> ForwardPass<T> {
    /// Final hidden states, `[batch * seq_len, dim]` row-major.
    pub fn hidden(&self) -> &[T] {
        &self.hidden
    }

    #[cfg(test)]
    pub(crate) fn attention_probs(&self, layer: usize) -> &[T] {
        &self.layer_caches[layer].probs
    }
}

const LN_EPS: f64 = 1e-5;

impl<T: Real> Encoder<T> {
    /// Run the encoder over a `[batch, seq_len]` id grid. `valid[p]` is false
    /// at padded positions; attention logits for padded keys are forced to
    /// negative infinity before the softmax so padded content can never leak
    /// into real positions. Dropout is active only when `dropout_rng` is
    /// supplied.
    pub fn forward(
        &self,
        ids: &[u32],
        valid: &[bool],
        batch: usize,
        seq_len: usize,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<ForwardPass<T>> {
        let cfg = &self.config;
        let d = cfg.dim;
        if ids.len() != batch * seq_len || valid.len() != ids.len() {
            return Err(Error::validation("ids/valid shape mismatch"));
        }
        if seq_len > cfg.max_len {
            return Err(Error::validation(format!(
                "sequence length {} exceeds max_len {}",
                seq_len, cfg.max_len
            )));
        }
        for &id in ids {
            if id as usize >= cfg.vocab_size {
                return Err(Error::validation(format!(
                    "token id {} out of range for vocabulary of {}",
                    id, cfg.vocab_size
                )));
            }
        }
        for b in 0..batch {
            if !valid[b * seq_len..(b + 1) * seq_len].iter().any(|&v| v) {
                return Err(Error::validation(format!(
                    "batch row {b} has no valid positions"
                )));
            }
        }

        let rows = batch * seq_len;
        let mut x = vec![T::ZERO; rows * d];
        for p in 0..rows {
            let tok = self.weights.token_embeddings.row(ids[p] as usize);
            let pos = self.weights.position_embeddings.row(p % seq_len);
            let out = &mut x[p * d..(p + 1) * d];
            for i in 0..d {
                out[i] = tok[i] + pos[i];
            }
        }
        let emb_drop = apply_dropout(&mut x, cfg.dropout, &mut dropout_rng);

        let mut layer_caches = Vec::with_capacity(cfg.layers);
        for layer in &self.weights.layers {
            let (out, cache) =
                self.layer_forward(layer, &x, valid, batch, seq_len, &mut dropout_rng);
            layer_caches.push(cache);
            x = out;
        }

        Ok(ForwardPass {
            batch,
            seq_len,
            ids: ids.to_vec(),
            emb_drop,
            layer_caches,
            hidden: x,
        })
    }

    fn layer_forward(
        &self,
        lw: &LayerWeights<T>,
        x: &[T],
        valid: &[bool],
        batch: usize,
        seq_len: usize,
        dropout_rng: &mut Option<&mut Rng>,
    ) -> (Vec<T>, LayerCache<T>) {
        let cfg = &self.config;
        let d = cfg.dim;
        let heads = cfg.heads;
        let dh = cfg.head_dim();
        let rows = batch * seq_len;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let neg_inf = T::from_f64(f64::NEG_INFINITY);

        let mut q = matmul(x, lw.wq.data(), rows, d, d);
        let mut k = matmul(x, lw.wk.data(), rows, d, d);
        let mut v = matmul(x, lw.wv.data(), rows, d, d);
        for r in 0..rows {
            for i in 0..d {
                q[r * d + i] += lw.bq.data()[i];
                k[r * d + i] += lw.bk.data()[i];
                v[r * d + i] += lw.bv.data()[i];
            }
        }

        let mut probs = vec![T::ZERO; batch * heads * seq_len * seq_len];
        let mut ctx = vec![T::ZERO; rows * d];
        // parallel over batch rows: every write lands in this row's own
        // probs/ctx slice, so the result is identical at any thread count
        probs
            .par_chunks_exact_mut(heads * seq_len * seq_len)
            .zip(ctx.par_chunks_exact_mut(seq_len * d))
            .enumerate()
            .for_each(|(b, (probs_b, ctx_b))| {
                let base = b * seq_len;
                for h in 0..heads {
                    let off = h * dh;
                    for i in 0..seq_len {
                        let qi = &q[(base + i) * d + off..(base + i) * d + off + dh];
                        let row = &mut probs_b[(h * seq_len + i) * seq_len..][..seq_len];
                        for j in 0..seq_len {
                            if valid[base + j] {
                                let kj = &k[(base + j) * d + off..(base + j) * d + off + dh];
                                row[j] = dot(qi, kj) * scale;
                            } else {
                                row[j] = neg_inf;
                            }
                        }
                        softmax_in_place(row);
                        let out = &mut ctx_b[i * d + off..i * d + off + dh];
                        for j in 0..seq_len {
                            let p = row[j];
                            if p != T::ZERO {
                                let vj = &v[(base + j) * d + off..(base + j) * d + off + dh];
                                add_assign_scaled(out, vj, p);
                            }
                        }
                    }
                }
            });

        let mut attn = matmul(&ctx, lw.wo.data(), rows, d, d);
        for r in 0..rows {
            for i in 0..d {
                attn[r * d + i] += lw.bo.data()[i];
            }
        }
        let attn_drop = apply_dropout(&mut attn, cfg.dropout, dropout_rng);
        for (a, xv) in attn.iter_mut().zip(x) {
            *a += *xv; // residual
        }
        let (ln1_out, ln1) = layer_norm(
            &attn,
            lw.ln1_gain.data(),
            lw.ln1_bias.data(),
            T::from_f64(LN_EPS),
            d,
        );

        let mut h_pre = matmul(&ln1_out, lw.w1.data(), rows, d, cfg.ffn_dim);
        for r in 0..rows {
            for i in 0..cfg.ffn_dim {
                h_pre[r * cfg.ffn_dim + i] += lw.b1.data()[i];
            }
        }
        let mut gelu_t = vec![T::ZERO; h_pre.len()];
        let h_act: Vec<T> = h_pre
            .iter()
            .zip(gelu_t.iter_mut())
            .map(|(&z, t)| {
                let (g, tv) = gelu_with_t(z);
                *t = tv;
                g
            })
            .collect();
        let mut ffn = matmul(&h_act, lw.w2.data(), rows, cfg.ffn_dim, d);
        for r in 0..rows {
            for i in 0..d {
                ffn[r * d + i] += lw.b2.data()[i];
            }
        }
        let ffn_drop = apply_dropout(&mut ffn, cfg.dropout, dropout_rng);
        for (f, l1) in ffn.iter_mut().zip(&ln1_out) {
            *f += *l1; // residual
        }
        let (out, ln2) = layer_norm(
            &ffn,
            lw.ln2_gain.data(),
            lw.ln2_bias.data(),
            T::from_f64(LN_EPS),
            d,
        );

        (
            out,
            LayerCache {
                x_in: x.to_vec(),
                q,
                k,
                v,
                probs,
                ctx,
                attn_drop,
                ln1,
                ln1_out,
                h_pre,
                h_act,
                gelu_t,
                ffn_drop,
                ln2,
            },
        )
    }

    /// Full prediction-head logits `[batch * seq_len, vocab]`:
    /// `hidden @ token_embeddings^T + mlm_bias`.
    pub fn mlm_logits(&self, hidden: &[T]) -> Vec<T> {
        let d = self.config.dim;
        let v = self.config.vocab_size;
        let rows = hidden.len() / d;
        let mut logits = matmul_a_bt(hidden, self.weights.token_embeddings.data(), rows, d, v);
        for r in 0..rows {
            for i in 0..v {
                logits[r * v + i] += self.weights.mlm_bias.data()[i];
            }
        }
        logits
    }

    /// Mean cross-entropy over the anchor positions plus gradients for every
    /// weight tensor. `anchors` pairs a flat position index with the original
    /// token id at that position.
    pub fn mlm_loss_and_grads(
        &self,
        ids: &[u32],
        valid: &[bool],
        batch: usize,
        seq_len: usize,
        anchors: &[(usize, u32)],
        dropout_rng: Option<&mut Rng>,
    ) -> Result<(f64, EncoderWeights<T>)> {
        if anchors.is_empty() {
            return Err(Error::validation("batch contains no anchor positions"));
        }
        let pass = self.forward(ids, valid, batch, seq_len, dropout_rng)?;
        let cfg = &self.config;
        let d = cfg.dim;
        let v = cfg.vocab_size;
        let a = anchors.len();

        // Logits only at anchor rows.
        let mut h_anchor = vec![T::ZERO; a * d];
        for (ai, &(pos, _)) in anchors.iter().enumerate() {
            h_anchor[ai * d..(ai + 1) * d].copy_from_slice(&pass.hidden[pos * d..(pos + 1) * d]);
        }
        let mut logits =
            matmul_a_bt(&h_anchor, self.weights.token_embeddings.data(), a, d, v);
        for r in 0..a {
            for i in 0..v {
                logits[r * v + i] += self.weights.mlm_bias.data()[i];
            }
        }

        let mut grads = EncoderWeights::zeros_like(cfg);
        let inv_a = T::from_f64(1.0 / a as f64);
        let mut loss = 0.0f64;
        let mut d_logits = vec![T::ZERO; a * v];
        for (ai, &(_, target)) in anchors.iter().enumerate() {
            let row = &logits[ai * v..(ai + 1) * v];
            let (l, mut g) = cross_entropy(row, target as usize)?;
            loss += l.to_f64();
            for gv in g.iter_mut() {
                *gv *= inv_a;
            }
            d_logits[ai * v..(ai + 1) * v].copy_from_slice(&g);
        }
        loss /= a as f64;

        // Head backward (tied projection): grads flow both into mlm_bias and
        // into the token embedding matrix.
        for r in 0..a {
            for i in 0..v {
                grads.mlm_bias.data_mut()[i] += d_logits[r * v + i];
            }
        }
        matmul_at_b_accum(
            grads.token_embeddings.data_mut(),
            &d_logits,
            &h_anchor,
            a,
            v,
            d,
        );
        let d_h_anchor = matmul(&d_logits, self.weights.token_embeddings.data(), a, v, d);
        let mut d_hidden = vec![T::ZERO; pass.hidden.len()];
        for (ai, &(pos, _)) in anchors.iter().enumerate() {
            for i in 0..d {
                d_hidden[pos * d + i] += d_h_anchor[ai * d + i];
            }
        }

        self.backward(&pass, d_hidden, &mut grads);
        Ok((loss, grads))
    }

    /// Backpropagate `d_hidden` (gradient w.r.t. the final hidden states)
    /// through the stack, accumulating into `grads`.
    fn backward(&self, pass: &ForwardPass<T>, mut d_out: Vec<T>, grads: &mut EncoderWeights<T>) {
        let cfg = &self.config;
        let d = cfg.dim;
        let rows = pass.batch * pass.seq_len;

        for (li, cache) in pass.layer_caches.iter().enumerate().rev() {
            let lw = &self.weights.layers[li];
            let gw = &mut grads.layers[li];
            d_out = self.layer_backward(lw, gw, cache, d_out, pass, rows);
        }

        // Embedding backward.
        mul_dropout(&mut d_out, &pass.emb_drop);
        for p in 0..rows {
            let dx = &d_out[p * d..(p + 1) * d];
            let tok_row = grads
                .token_embeddings
                .row_mut(pass.ids[p] as usize);
            for i in 0..d {
                tok_row[i] += dx[i];
            }
            let pos_row = grads.position_embeddings.row_mut(p % pass.seq_len);
            for i in 0..d {
                pos_row[i] += dx[i];
            }
        }
    }

    fn layer_backward(
        &self,
        lw: &LayerWeights<T>,
        gw: &mut LayerWeights<T>,
        cache: &LayerCache<T>,
        d_out: Vec<T>,
        pass: &ForwardPass<T>,
        rows: usize,
    ) -> Vec<T> {
        let cfg = &self.config;
        let d = cfg.dim;
        let f = cfg.ffn_dim;
        let heads = cfg.heads;
        let dh = cfg.head_dim();
        let seq_len = pass.seq_len;
        let batch = pass.batch;
        debug_assert_eq!(rows, batch * seq_len);
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());

        // ln2
        let d_res2 = layer_norm_backward(
            &d_out,
            lw.ln2_gain.data(),
            &cache.ln2,
            gw.ln2_gain.data_mut(),
            gw.ln2_bias.data_mut(),
            d,
        );
        // residual: res2 = ln1_out + dropout(ffn)
        let mut d_ffn = d_res2.clone();
        mul_dropout(&mut d_ffn, &cache.ffn_drop);
        let mut d_ln1_out = d_res2;

        // ffn second projection
        matmul_at_b_accum(gw.w2.data_mut(), &cache.h_act, &d_ffn, rows, f, d);
        for r in 0..rows {
            for i in 0..d {
                gw.b2.data_mut()[i] += d_ffn[r * d + i];
            }
        }
        let mut d_h = matmul_a_bt(&d_ffn, lw.w2.data(), rows, d, f);
        for ((dh_v, hp), t) in d_h.iter_mut().zip(&cache.h_pre).zip(&cache.gelu_t) {
            *dh_v *= gelu_grad_from_t(*hp, *t);
        }
        // ffn first projection
        matmul_at_b_accum(gw.w1.data_mut(), &cache.ln1_out, &d_h, rows, d, f);
        for r in 0..rows {
            for i in 0..f {
                gw.b1.data_mut()[i] += d_h[r * f + i];
            }
        }
        let d_ln1_from_ffn = matmul_a_bt(&d_h, lw.w1.data(), rows, f, d);
        for (acc, v) in d_ln1_out.iter_mut().zip(&d_ln1_from_ffn) {
            *acc += *v;
        }

        // ln1
        let d_res1 = layer_norm_backward(
            &d_ln1_out,
            lw.ln1_gain.data(),
            &cache.ln1,
            gw.ln1_gain.data_mut(),
            gw.ln1_bias.data_mut(),
            d,
        );
        // residual: res1 = x_in + dropout(attn)
        let mut d_attn = d_res1.clone();
        mul_dropout(&mut d_attn, &cache.attn_drop);
        let mut d_x = d_res1;

        // output projection
        matmul_at_b_accum(gw.wo.data_mut(), &cache.ctx, &d_attn, rows, d, d);
        for r in 0..rows {
            for i in 0..d {
                gw.bo.data_mut()[i] += d_attn[r * d + i];
            }
        }
        let d_ctx = matmul_a_bt(&d_attn, lw.wo.data(), rows, d, d);

        // attention core, parallel over batch rows (disjoint gradient slices)
        let mut d_q = vec![T::ZERO; rows * d];
        let mut d_k = vec![T::ZERO; rows * d];
        let mut d_v = vec![T::ZERO; rows * d];
        d_q.par_chunks_exact_mut(seq_len * d)
            .zip(d_k.par_chunks_exact_mut(seq_len * d))
            .zip(d_v.par_chunks_exact_mut(seq_len * d))
            .enumerate()
            .for_each(|(b, ((dq_b, dk_b), dv_b))| {
                let base = b * seq_len;
                let mut d_probs_row = vec![T::ZERO; seq_len];
                let mut d_scores_row = vec![T::ZERO; seq_len];
                for h in 0..heads {
                    let off = h * dh;
                    for i in 0..seq_len {
                        let probs =
                            &cache.probs[((b * heads + h) * seq_len + i) * seq_len..][..seq_len];
                        let d_ctx_i = &d_ctx[(base + i) * d + off..(base + i) * d + off + dh];
                        // d_probs and dV
                        for j in 0..seq_len {
                            let p = probs[j];
                            if p != T::ZERO {
                                let vj =
                                    &cache.v[(base + j) * d + off..(base + j) * d + off + dh];
                                d_probs_row[j] = dot(d_ctx_i, vj);
                                let dvj = &mut dv_b[j * d + off..j * d + off + dh];
                                add_assign_scaled(dvj, d_ctx_i, p);
                            } else {
                                d_probs_row[j] = T::ZERO;
                            }
                        }
                        // softmax backward
                        let mut inner = T::ZERO;
                        for j in 0..seq_len {
                            inner += d_probs_row[j] * probs[j];
                        }
                        for j in 0..seq_len {
                            d_scores_row[j] = probs[j] * (d_probs_row[j] - inner);
                        }
                        // scores = scale * q_i . k_j
                        let qi = &cache.q[(base + i) * d + off..(base + i) * d + off + dh];
                        for j in 0..seq_len {
                            let ds = d_scores_row[j] * scale;
                            if ds != T::ZERO {
                                let kj =
                                    &cache.k[(base + j) * d + off..(base + j) * d + off + dh];
                                let dqi = &mut dq_b[i * d + off..i * d + off + dh];
                                add_assign_scaled(dqi, kj, ds);
                                let dkj = &mut dk_b[j * d + off..j * d + off + dh];
                                add_assign_scaled(dkj, qi, ds);
                            }
                        }
                    }
                }
            });

        // q/k/v projections
        matmul_at_b_accum(gw.wq.data_mut(), &cache.x_in, &d_q, rows, d, d);
        matmul_at_b_accum(gw.wk.data_mut(), &cache.x_in, &d_k, rows, d, d);
        matmul_at_b_accum(gw.wv.data_mut(), &cache.x_in, &d_v, rows, d, d);
        for r in 0..rows {
            for i in 0..d {
                gw.bq.data_mut()[i] += d_q[r * d + i];
                gw.bk.data_mut()[i] += d_k[r * d + i];
                gw.bv.data_mut()[i] += d_v[r * d + i];
            }
        }
        for (m, dg) in [(&lw.wq, &d_q), (&lw.wk, &d_k), (&lw.wv, &d_v)] {
            let dx = matmul_a_bt(dg, m.data(), rows, d, d);
            for (acc, v) in d_x.iter_mut().zip(&dx) {
                *acc += *v;
            }
        }
        d_x
    }
}

/// Inverted dropout in place; returns the mask (empty when inactive) for the
/// backward pass.
fn apply_dropout<T: Real>(x: &mut [T], p: f64, rng: &mut Option<&mut Rng>) -> Vec<T> {
    match rng {
        Some(rng) if p > 0.0 => {
            let keep = T::from_f64(1.0 / (1.0 - p));
            let mask: Vec<T> = (0..x.len())
                .map(|_| if rng.bernoulli(p) { T::ZERO } else { keep })
                .collect();
            for (v, m) in x.iter_mut().zip(&mask) {
                *v *= *m;
            }
            mask
        }
        _ => Vec::new(),
    }
}

fn mul_dropout<T: Real>(x: &mut [T], mask: &[T]) {
    if !mask.is_empty() {
        for (v, m) in x.iter_mut().zip(mask) {
            *v *= *m;
        }
    }
}

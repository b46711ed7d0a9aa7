//! Masked-token pretraining: anchor selection with 80/10/10 corruption,
//! variable-length batch sampling, the training loop, and contextual
//! embedding extraction.

use crate::baselines::EmbeddingTable;
use crate::corpus::TokenSequence;
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, linear_lr, AdamHyper, AdamState, Rng};
use crate::tokenizer::{Vocabulary, MASK_ID, RESERVED};
use serde::{Deserialize, Serialize};

/// Anchor selection and corruption rates. Of the tokens chosen as training
/// anchors, `mask_frac` are replaced by `[MASK]`, `keep_frac` stay unchanged,
/// and `random_frac` are swapped for a random non-reserved vocabulary token.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MaskingConfig {
    pub anchor_rate: f64,
    pub mask_frac: f64,
    pub keep_frac: f64,
    pub random_frac: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            anchor_rate: 0.15,
            mask_frac: 0.80,
            keep_frac: 0.10,
            random_frac: 0.10,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.anchor_rate) || self.anchor_rate == 0.0 {
            return Err(Error::validation("anchor_rate must lie in (0, 1)"));
        }
        let sum = self.mask_frac + self.keep_frac + self.random_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "corruption fractions must sum to 1, got {sum}"
            )));
        }
        if self.mask_frac < 0.0 || self.keep_frac < 0.0 || self.random_frac < 0.0 {
            return Err(Error::validation("corruption fractions must be >= 0"));
        }
        Ok(())
    }

    /// Anchors for a row of `len` tokens: `max(1, round(rate * len))`.
    pub fn anchors_for_len(&self, len: usize) -> usize {
        ((self.anchor_rate * len as f64).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub batch_size: usize,
    /// Candidate sequence lengths, resampled uniformly every batch.
    pub lengths: Vec<usize>,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub total_steps: u64,
    pub seed: u64,
    pub masking: MaskingConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            batch_size: 32,
            lengths: vec![8, 16, 32, 64],
            base_lr: 0.001,
            weight_decay: 0.01,
            total_steps: 3000,
            seed: 0,
            masking: MaskingConfig::default(),
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self, max_len: usize) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::validation("total_steps must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be >= 1"));
        }
        if self.lengths.is_empty() {
            return Err(Error::validation("lengths must not be empty"));
        }
        if self.lengths.iter().any(|&l| l == 0 || l > max_len) {
            return Err(Error::validation(format!(
                "every training length must lie in [1, max_len={max_len}]"
            )));
        }
        self.masking.validate()
    }
}

/// One masked row: corrupted inputs plus the original tokens at anchors.
#[derive(Debug, Clone)]
pub struct MaskedRow {
    pub input_ids: Vec<u32>,
    /// Original token at every position (targets are read at anchors only).
    pub target_ids: Vec<u32>,
    pub anchor_flags: Vec<bool>,
}

/// A full `[batch, seq_len]` masked batch. Rows are windows of stored
/// sequences, so no position is padded and `pad_mask` is all-true; anchors
/// can therefore never land on padding.
#[derive(Debug, Clone)]
pub struct MaskedBatch {
    pub batch: usize,
    pub seq_len: usize,
    pub input_ids: Vec<u32>,
    pub target_ids: Vec<u32>,
    pub anchor_flags: Vec<bool>,
    pub pad_mask: Vec<bool>,
}

impl MaskedBatch {
    /// Anchor positions as `(flat index, original id)` pairs for the loss.
    pub fn anchors(&self) -> Vec<(usize, u32)> {
        self.anchor_flags
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(p, _)| (p, self.target_ids[p]))
            .collect()
    }
}

/// Corrupt one sequence. The sequence must not contain reserved ids; the
/// random-replacement branch draws uniformly from non-reserved vocabulary
/// ids so `[PAD]`/`[MASK]` are never injected as "random" tokens.
pub fn apply_masking(
    sequence: &[u32],
    vocab_size: usize,
    rng: &mut Rng,
    cfg: &MaskingConfig,
) -> Result<MaskedRow> {
    if sequence.is_empty() {
        return Err(Error::validation("cannot mask an empty sequence"));
    }
    if vocab_size <= RESERVED.len() {
        return Err(Error::validation(
            "vocabulary holds no non-reserved tokens to sample from",
        ));
    }
    debug_assert!(sequence.iter().all(|&t| t as usize >= RESERVED.len()));
    let n_anchors = cfg.anchors_for_len(sequence.len());
    let positions = rng.sample_indices(sequence.len(), n_anchors.min(sequence.len()));

    let mut input_ids = sequence.to_vec();
    let mut anchor_flags = vec![false; sequence.len()];
    let n_real = vocab_size - RESERVED.len();
    for &p in &positions {
        anchor_flags[p] = true;
        let u = rng.uniform();
        if u < cfg.mask_frac {
            input_ids[p] = MASK_ID;
        } else if u < cfg.mask_frac + cfg.keep_frac {
            // left unchanged
        } else {
            input_ids[p] = RESERVED.len() as u32 + rng.below(n_real) as u32;
        }
    }
    Ok(MaskedRow {
        input_ids,
        target_ids: sequence.to_vec(),
        anchor_flags,
    })
}

/// Draw a batch: one length sampled uniformly from `cfg.lengths`, then
/// `batch_size` subsequences taken from random stored sequences at random
/// offsets, each masked independently.
pub fn sample_batch(
    corpus: &[Vec<u32>],
    vocab_size: usize,
    rng: &mut Rng,
    cfg: &PretrainConfig,
) -> Result<MaskedBatch> {
    if corpus.is_empty() {
        return Err(Error::validation("pretraining corpus is empty"));
    }
    let n = cfg.lengths[rng.below(cfg.lengths.len())];
    let eligible: Vec<usize> = (0..corpus.len())
        .filter(|&i| corpus[i].len() >= n)
        .collect();
    if eligible.is_empty() {
        return Err(Error::validation(format!(
            "no stored sequence is at least {n} tokens long"
        )));
    }
    let b = cfg.batch_size;
    let mut batch = MaskedBatch {
        batch: b,
        seq_len: n,
        input_ids: Vec::with_capacity(b * n),
        target_ids: Vec::with_capacity(b * n),
        anchor_flags: Vec::with_capacity(b * n),
        pad_mask: vec![true; b * n],
    };
    for _ in 0..b {
        let seq = &corpus[eligible[rng.below(eligible.len())]];
        let offset = rng.below(seq.len() - n + 1);
        let row = apply_masking(&seq[offset..offset + n], vocab_size, rng, &cfg.masking)?;
        batch.input_ids.extend_from_slice(&row.input_ids);
        batch.target_ids.extend_from_slice(&row.target_ids);
        batch.anchor_flags.extend_from_slice(&row.anchor_flags);
    }
    Ok(batch)
}

/// One loss-trace record (written as `step,lr,loss` CSV by the CLI).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

/// Encode token sequences against a vocabulary (unknowns map to `[UNK]`).
pub fn encode_sequences(seqs: &[TokenSequence], vocab: &Vocabulary) -> Vec<Vec<u32>> {
    seqs.iter().map(|s| sequence_tokens_to_ids(s, vocab)).collect()
}

/// Encode one token sequence (unknowns map to `[UNK]`).
pub fn sequence_tokens_to_ids(seq: &TokenSequence, vocab: &Vocabulary) -> Vec<u32> {
    seq.tokens.iter().map(|t| vocab.encode(t)).collect()
}

/// Run the pretraining loop: every step samples a batch, takes one Adam step
/// with decoupled weight decay under the linear learning-rate schedule, and
/// the loss is traced every 100 steps (plus the final step). Deterministic
/// for a fixed seed.
pub fn pretrain(
    corpus: &[Vec<u32>],
    enc_cfg: &EncoderConfig,
    cfg: &PretrainConfig,
) -> Result<(Encoder<f32>, Vec<TraceRow>)> {
    enc_cfg.validate()?;
    cfg.validate(enc_cfg.max_len)?;
    if corpus.is_empty() {
        return Err(Error::validation("pretraining corpus is empty"));
    }

    let root = Rng::new(cfg.seed);
    let mut init_rng = root.fork(u64::MAX);
    let mut model = Encoder::<f32>::init(enc_cfg.clone(), &mut init_rng)?;

    let names_owned = crate::encoder::EncoderWeights::<f32>::param_names(enc_cfg.layers);
    let names: Vec<&str> = names_owned.iter().map(|s| s.as_str()).collect();
    let sizes: Vec<usize> = model.weights.params().iter().map(|t| t.numel()).collect();
    let mut adam = AdamState::<f32>::new(&sizes);
    let hyper = AdamHyper {
        weight_decay: cfg.weight_decay,
        ..AdamHyper::default()
    };

    let mut trace = Vec::new();
    for step in 0..cfg.total_steps {
        let lr = linear_lr(step, cfg.total_steps, cfg.base_lr)?;
        let mut batch_rng = root.fork(2 * step);
        let batch = sample_batch(corpus, enc_cfg.vocab_size, &mut batch_rng, cfg)?;
        let mut dropout_rng = root.fork(2 * step + 1);
        let drop = if enc_cfg.dropout > 0.0 {
            Some(&mut dropout_rng)
        } else {
            None
        };
        let (loss, grads) = model.mlm_loss_and_grads(
            &batch.input_ids,
            &batch.pad_mask,
            batch.batch,
            batch.seq_len,
            &batch.anchors(),
            drop,
        )?;
        {
            let mut params: Vec<&mut [f32]> = model
                .weights
                .params_mut()
                .into_iter()
                .map(|t| t.data_mut())
                .collect();
            let grad_views: Vec<&[f32]> = grads.params().into_iter().map(|t| t.data()).collect();
            adam_step(&mut params, &grad_views, &names, &mut adam, lr, &hyper)?;
        }
        if step % 100 == 0 || step + 1 == cfg.total_steps {
            trace.push(TraceRow { step, lr, loss });
        }
    }
    Ok((model, trace))
}

/// Mean masked loss and top-1 anchor accuracy over `batches` freshly masked
/// evaluation batches (dropout off).
pub fn masked_eval(
    model: &Encoder<f32>,
    corpus: &[Vec<u32>],
    cfg: &PretrainConfig,
    seed: u64,
    batches: usize,
) -> Result<(f64, f64)> {
    let root = Rng::new(seed);
    let v = model.config.vocab_size;
    let d = model.config.dim;
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    let mut total_anchors = 0usize;
    for b in 0..batches {
        let mut rng = root.fork(b as u64);
        let batch = sample_batch(corpus, v, &mut rng, cfg)?;
        let anchors = batch.anchors();
        let pass = model.forward(
            &batch.input_ids,
            &batch.pad_mask,
            batch.batch,
            batch.seq_len,
            None,
        )?;
        let hidden = pass.hidden();
        for &(pos, target) in &anchors {
            let logits = model.mlm_logits(&hidden[pos * d..(pos + 1) * d]);
            let (mut best, mut best_v) = (0usize, f32::NEG_INFINITY);
            for (i, &l) in logits.iter().enumerate() {
                if l > best_v {
                    best = i;
                    best_v = l;
                }
            }
            if best == target as usize {
                correct += 1;
            }
            let (loss, _) = crate::numerics::cross_entropy(&logits, target as usize)?;
            total_loss += loss as f64;
        }
        total_anchors += anchors.len();
    }
    Ok((
        total_loss / total_anchors as f64,
        correct as f64 / total_anchors as f64,
    ))
}

/// Contextual embeddings for an uncorrupted token sequence: the encoder's
/// final hidden states, `[len, dim]` row-major. Unknown tokens map to
/// `[UNK]`.
pub fn embed_sequence(
    model: &Encoder<f32>,
    tokens: &[String],
    vocab: &Vocabulary,
) -> Result<Vec<f32>> {
    let ids: Vec<u32> = tokens.iter().map(|t| vocab.encode(t)).collect();
    embed_ids(model, &ids)
}

/// [`embed_sequence`] for already-encoded ids.
pub fn embed_ids(model: &Encoder<f32>, ids: &[u32]) -> Result<Vec<f32>> {
    if ids.is_empty() {
        return Err(Error::validation("cannot embed an empty sequence"));
    }
    let valid = vec![true; ids.len()];
    let pass = model.forward(ids, &valid, 1, ids.len(), None)?;
    Ok(pass.hidden().to_vec())
}

/// The context-independent component of the model: its input embedding
/// table, keyed by the vocabulary.
pub fn static_table(model: &Encoder<f32>, vocab: &Vocabulary) -> Result<EmbeddingTable> {
    if vocab.len() != model.config.vocab_size {
        return Err(Error::validation(format!(
            "vocabulary size {} does not match model vocab_size {}",
            vocab.len(),
            model.config.vocab_size
        )));
    }
    EmbeddingTable::new(
        vocab.tokens().to_vec(),
        model.config.dim,
        model.weights.token_embeddings.data().to_vec(),
    )
}

//! GRU sequence classifier for device type and manufacturer, trained under
//! random / co-occurrence / contextual embedding regimes, with weighted-F1
//! evaluation and seen-class cross-dataset generalization testing.

mod gru;
mod model_io;

pub use gru::{GruCache, GruLayer, GruStack};
pub use model_io::{load_classifier, save_classifier, ClassifierFile};

use crate::baselines::EmbeddingTable;
use crate::corpus::{DeviceLabel, TokenSequence};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::numerics::{adam_step, cross_entropy, AdamHyper, AdamState, Rng};
use crate::tokenizer::Vocabulary;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    DeviceType,
    Manufacturer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Random,
    Glove,
    Norbert,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub n: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for GruConfig {
    fn default() -> Self {
        GruConfig {
            input_dim: 128,
            hidden: 64,
            layers: 2,
            batch_size: 1024,
            lr: 0.001,
            n: 32,
            epochs: 30,
            seed: 0,
        }
    }
}

impl GruConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.hidden == 0
            || self.layers == 0
            || self.batch_size == 0
            || self.n == 0
            || self.epochs == 0
        {
            return Err(Error::validation("all classifier dimensions must be >= 1"));
        }
        if self.lr <= 0.0 && self.lr != 0.0 {
            return Err(Error::validation("learning rate must be >= 0"));
        }
        Ok(())
    }
}

/// Encoded, labeled fixed-length sequences with class maps for both tasks.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub sequences: Vec<Vec<u32>>,
    pub type_labels: Vec<u32>,
    pub mfr_labels: Vec<u32>,
    pub type_classes: Vec<String>,
    pub mfr_classes: Vec<String>,
    pub n: usize,
}

impl LabeledDataset {
    /// Encode token sequences and attach labels. Every sequence's device must
    /// be present in the label map.
    pub fn from_sequences(
        seqs: &[TokenSequence],
        labels: &BTreeMap<String, DeviceLabel>,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::validation("no sequences to label"));
        }
        let n = seqs[0].tokens.len();
        let mut type_names = BTreeSet::new();
        let mut mfr_names = BTreeSet::new();
        for s in seqs {
            let label = labels.get(&s.device_id).ok_or_else(|| {
                Error::validation(format!("no label for device {}", s.device_id))
            })?;
            type_names.insert(label.device_type.clone());
            mfr_names.insert(label.manufacturer.clone());
            if s.tokens.len() != n {
                return Err(Error::validation("sequences have inconsistent lengths"));
            }
        }
        let type_classes: Vec<String> = type_names.into_iter().collect();
        let mfr_classes: Vec<String> = mfr_names.into_iter().collect();
        let type_idx: HashMap<&str, u32> = type_classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i as u32))
            .collect();
        let mfr_idx: HashMap<&str, u32> = mfr_classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i as u32))
            .collect();

        let mut sequences = Vec::with_capacity(seqs.len());
        let mut type_labels = Vec::with_capacity(seqs.len());
        let mut mfr_labels = Vec::with_capacity(seqs.len());
        for s in seqs {
            let label = &labels[&s.device_id];
            sequences.push(s.tokens.iter().map(|t| vocab.encode(t)).collect());
            type_labels.push(type_idx[label.device_type.as_str()]);
            mfr_labels.push(mfr_idx[label.manufacturer.as_str()]);
        }
        Ok(LabeledDataset {
            sequences,
            type_labels,
            mfr_labels,
            type_classes,
            mfr_classes,
            n,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn labels(&self, task: Task) -> &[u32] {
        match task {
            Task::DeviceType => &self.type_labels,
            Task::Manufacturer => &self.mfr_labels,
        }
    }

    pub fn classes(&self, task: Task) -> &[String] {
        match task {
            Task::DeviceType => &self.type_classes,
            Task::Manufacturer => &self.mfr_classes,
        }
    }
}

/// Stratified split. Classes of `task` with support below `min_support` are
/// removed first; each surviving class is shuffled (seeded) and split at the
/// ratio, rounding to the nearest instance.
pub fn split_dataset(
    ds: &LabeledDataset,
    task: Task,
    ratio: f64,
    seed: u64,
    min_support: usize,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if ds.is_empty() {
        return Err(Error::validation("dataset is empty"));
    }
    if !(0.0..1.0).contains(&ratio) || ratio == 0.0 {
        return Err(Error::validation("split ratio must lie in (0, 1)"));
    }
    let labels = ds.labels(task);
    let old_classes = ds.classes(task);
    let mut support = vec![0usize; old_classes.len()];
    for &l in labels {
        support[l as usize] += 1;
    }
    let kept: Vec<usize> = (0..old_classes.len())
        .filter(|&c| support[c] >= min_support)
        .collect();
    if kept.is_empty() {
        return Err(Error::validation(format!(
            "no class reaches min_support {min_support}"
        )));
    }
    let new_classes: Vec<String> = kept.iter().map(|&c| old_classes[c].clone()).collect();
    let remap: HashMap<usize, u32> = kept
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new as u32))
        .collect();

    let root = Rng::new(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for &old_c in &kept {
        let mut members: Vec<usize> = (0..ds.len())
            .filter(|&i| labels[i] as usize == old_c)
            .collect();
        root.fork(old_c as u64).shuffle(&mut members);
        let n_c = members.len();
        let train_n = ((ratio * n_c as f64).round() as usize).clamp(1, n_c.max(2) - 1);
        train_idx.extend_from_slice(&members[..train_n]);
        test_idx.extend_from_slice(&members[train_n..]);
    }

    let build = |idx: &[usize]| -> LabeledDataset {
        LabeledDataset {
            sequences: idx.iter().map(|&i| ds.sequences[i].clone()).collect(),
            type_labels: match task {
                Task::DeviceType => idx.iter().map(|&i| remap[&(labels[i] as usize)]).collect(),
                Task::Manufacturer => idx.iter().map(|&i| ds.type_labels[i]).collect(),
            },
            mfr_labels: match task {
                Task::Manufacturer => idx.iter().map(|&i| remap[&(labels[i] as usize)]).collect(),
                Task::DeviceType => idx.iter().map(|&i| ds.mfr_labels[i]).collect(),
            },
            type_classes: match task {
                Task::DeviceType => new_classes.clone(),
                Task::Manufacturer => ds.type_classes.clone(),
            },
            mfr_classes: match task {
                Task::Manufacturer => new_classes.clone(),
                Task::DeviceType => ds.mfr_classes.clone(),
            },
            n: ds.n,
        }
    };
    Ok((build(&train_idx), build(&test_idx)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class one-vs-rest scores plus the support-weighted F1 average.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: Vec<ClassScore>,
    pub weighted_f1: f64,
}

/// One-vs-rest precision/recall/F1 per class, 0/0 defined as 0, weighted by
/// true-label support.
pub fn weighted_f1(predictions: &[u32], labels: &[u32], classes: &[String]) -> Result<F1Report> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::validation(
            "predictions and labels must be non-empty and equal-length",
        ));
    }
    let c = classes.len();
    let mut tp = vec![0u64; c];
    let mut fp = vec![0u64; c];
    let mut fnc = vec![0u64; c];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p as usize >= c || l as usize >= c {
            return Err(Error::validation("label outside the class range"));
        }
        if p == l {
            tp[p as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fnc[l as usize] += 1;
        }
    }
    let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut per_class = Vec::with_capacity(c);
    let mut weighted = 0.0;
    let mut total_support = 0u64;
    for i in 0..c {
        let precision = div(tp[i], tp[i] + fp[i]);
        let recall = div(tp[i], tp[i] + fnc[i]);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let support = tp[i] + fnc[i];
        weighted += support as f64 * f1;
        total_support += support;
        per_class.push(ClassScore {
            class: classes[i].clone(),
            precision,
            recall,
            f1,
            support,
        });
    }
    Ok(F1Report {
        per_class,
        weighted_f1: weighted / total_support as f64,
    })
}

/// How the classifier turns token ids into input vectors.
pub enum EmbeddingSource {
    /// Trainable table: rows receive gradients through the lookup.
    Random(EmbeddingTable),
    /// Co-occurrence table, frozen unless `fine_tune` is set.
    Glove { table: EmbeddingTable, fine_tune: bool },
    /// Frozen contextual feature extractor.
    Norbert(Encoder<f32>),
}

/// A trained classifier bundling everything prediction needs.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub config: GruConfig,
    pub task: Task,
    pub regime: Regime,
    /// Class map seen during training; cross-dataset evaluation keeps only
    /// instances whose class appears here.
    pub classes: Vec<String>,
    pub gru: GruStack<f32>,
    pub table: Option<EmbeddingTable>,
    pub encoder: Option<Encoder<f32>>,
}

/// Contextual features for a set of sequences, chunked through the encoder.
fn contextual_features(enc: &Encoder<f32>, seqs: &[Vec<u32>], n: usize) -> Result<Vec<f32>> {
    let d = enc.config.dim;
    let mut out = vec![0.0f32; seqs.len() * n * d];
    let chunk = 64usize;
    for (ci, group) in seqs.chunks(chunk).enumerate() {
        let b = group.len();
        let mut ids = Vec::with_capacity(b * n);
        for s in group {
            if s.len() != n {
                return Err(Error::validation("sequence length mismatch"));
            }
            ids.extend_from_slice(s);
        }
        let valid = vec![true; b * n];
        let pass = enc.forward(&ids, &valid, b, n, None)?;
        out[ci * chunk * n * d..ci * chunk * n * d + b * n * d].copy_from_slice(pass.hidden());
    }
    Ok(out)
}

fn gather_features(table: &EmbeddingTable, seqs: &[&Vec<u32>], n: usize) -> Result<Vec<f32>> {
    let d = table.dim();
    let mut out = vec![0.0f32; seqs.len() * n * d];
    for (si, s) in seqs.iter().enumerate() {
        for (t, &id) in s.iter().enumerate() {
            if id as usize >= table.rows() {
                return Err(Error::validation(format!(
                    "token id {id} outside embedding table"
                )));
            }
            out[(si * n + t) * d..(si * n + t + 1) * d].copy_from_slice(table.row(id as usize));
        }
    }
    Ok(out)
}

/// Train the GRU with Adam (no weight decay) under the given embedding
/// regime. Returns the classifier and the mean training loss per epoch.
pub fn train_classifier(
    train: &LabeledDataset,
    source: EmbeddingSource,
    cfg: &GruConfig,
    task: Task,
) -> Result<(Classifier, Vec<f64>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    if train.n != cfg.n {
        return Err(Error::validation(format!(
            "dataset sequences are {} tokens but the classifier expects {}",
            train.n, cfg.n
        )));
    }
    let classes = train.classes(task).to_vec();
    if classes.is_empty() {
        return Err(Error::validation("task labels missing"));
    }
    let labels = train.labels(task);
    let n = cfg.n;

    let (regime, mut table, encoder, trainable_table) = match source {
        EmbeddingSource::Random(t) => (Regime::Random, Some(t), None, true),
        EmbeddingSource::Glove { table, fine_tune } => (Regime::Glove, Some(table), None, fine_tune),
        EmbeddingSource::Norbert(enc) => (Regime::Norbert, None, Some(enc), false),
    };
    let feat_dim = match (&table, &encoder) {
        (Some(t), _) => t.dim(),
        (_, Some(e)) => e.config.dim,
        _ => unreachable!(),
    };
    if feat_dim != cfg.input_dim {
        return Err(Error::validation(format!(
            "embedding dim {feat_dim} does not match classifier input_dim {}",
            cfg.input_dim
        )));
    }

    // Contextual features never change during training; compute them once.
    let frozen_feats = match &encoder {
        Some(enc) => Some(contextual_features(enc, &train.sequences, n)?),
        None => None,
    };

    let root = Rng::new(cfg.seed);
    let mut gru = GruStack::<f32>::init(
        cfg.input_dim,
        cfg.hidden,
        cfg.layers,
        classes.len(),
        &mut root.fork(u64::MAX),
    );

    let mut sizes: Vec<usize> = gru.params().iter().map(|t| t.numel()).collect();
    let mut names_owned = GruStack::<f32>::param_names(cfg.layers);
    if trainable_table {
        let t = table.as_ref().unwrap();
        sizes.push(t.rows() * t.dim());
        names_owned.push("embedding_table".to_string());
    }
    let names: Vec<&str> = names_owned.iter().map(|s| s.as_str()).collect();
    let mut adam = AdamState::<f32>::new(&sizes);
    let hyper = AdamHyper::default();

    let d = cfg.input_dim;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        root.fork(epoch as u64).shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            let x: Vec<f32> = match &frozen_feats {
                Some(f) => {
                    let mut buf = vec![0.0f32; b * n * d];
                    for (bi, &si) in chunk.iter().enumerate() {
                        buf[bi * n * d..(bi + 1) * n * d]
                            .copy_from_slice(&f[si * n * d..(si + 1) * n * d]);
                    }
                    buf
                }
                None => {
                    let refs: Vec<&Vec<u32>> =
                        chunk.iter().map(|&si| &train.sequences[si]).collect();
                    gather_features(table.as_ref().unwrap(), &refs, n)?
                }
            };
            let (logits, cache) = gru.forward(&x, b, n);
            let c = classes.len();
            let mut d_logits = vec![0.0f32; b * c];
            let mut loss = 0.0f64;
            for (bi, &si) in chunk.iter().enumerate() {
                let (l, g) = cross_entropy(&logits[bi * c..(bi + 1) * c], labels[si] as usize)?;
                loss += l as f64;
                for k in 0..c {
                    d_logits[bi * c + k] = g[k] / b as f32;
                }
            }
            loss /= b as f64;
            epoch_loss += loss;
            batches += 1;

            let (grads, d_x) = gru.backward(&cache, &d_logits);
            let grad_tensors: Vec<&[f32]> = grads.params().into_iter().map(|t| t.data()).collect();

            if trainable_table {
                let tbl = table.as_mut().unwrap();
                let mut table_grad = vec![0.0f32; tbl.rows() * tbl.dim()];
                for (bi, &si) in chunk.iter().enumerate() {
                    for (t, &id) in train.sequences[si].iter().enumerate() {
                        let g = &d_x[(bi * n + t) * d..(bi * n + t + 1) * d];
                        let row = &mut table_grad[id as usize * d..(id as usize + 1) * d];
                        for k in 0..d {
                            row[k] += g[k];
                        }
                    }
                }
                let mut params: Vec<&mut [f32]> =
                    gru.params_mut().into_iter().map(|t| t.data_mut()).collect();
                params.push(tbl.data_mut());
                let mut grad_views = grad_tensors;
                grad_views.push(&table_grad);
                adam_step(&mut params, &grad_views, &names, &mut adam, cfg.lr, &hyper)?;
            } else {
                let mut params: Vec<&mut [f32]> =
                    gru.params_mut().into_iter().map(|t| t.data_mut()).collect();
                adam_step(&mut params, &grad_tensors, &names, &mut adam, cfg.lr, &hyper)?;
            }
        }
        epoch_losses.push(epoch_loss / batches as f64);
    }

    Ok((
        Classifier {
            config: cfg.clone(),
            task,
            regime,
            classes,
            gru,
            table,
            encoder,
        },
        epoch_losses,
    ))
}

impl Classifier {
    /// Predicted class ids for encoded sequences (batched).
    pub fn predict(&self, sequences: &[Vec<u32>]) -> Result<Vec<u32>> {
        if sequences.is_empty() {
            return Err(Error::validation("nothing to predict"));
        }
        let n = self.config.n;
        let d = self.config.input_dim;
        let c = self.classes.len();
        let mut preds = Vec::with_capacity(sequences.len());
        for chunk in sequences.chunks(self.config.batch_size) {
            let x = match (&self.encoder, &self.table) {
                (Some(enc), _) => contextual_features(enc, chunk, n)?,
                (None, Some(tbl)) => {
                    let refs: Vec<&Vec<u32>> = chunk.iter().collect();
                    gather_features(tbl, &refs, n)?
                }
                _ => return Err(Error::validation("classifier has no embedding source")),
            };
            debug_assert_eq!(x.len(), chunk.len() * n * d);
            let (logits, _) = self.gru.forward(&x, chunk.len(), n);
            for bi in 0..chunk.len() {
                let row = &logits[bi * c..(bi + 1) * c];
                let mut best = 0u32;
                let mut best_v = f32::NEG_INFINITY;
                for (k, &v) in row.iter().enumerate() {
                    if v > best_v {
                        best_v = v;
                        best = k as u32;
                    }
                }
                preds.push(best);
            }
        }
        Ok(preds)
    }
}

/// Evaluate on an independently-labeled dataset: instances whose class name
/// was not seen during training are dropped (count reported), the rest are
/// scored against the training class map.
pub fn evaluate_cross(clf: &Classifier, ds: &LabeledDataset) -> Result<(F1Report, usize)> {
    let class_of: HashMap<&str, u32> = clf
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i as u32))
        .collect();
    let ds_classes = ds.classes(clf.task);
    let ds_labels = ds.labels(clf.task);
    let mut kept_seqs = Vec::new();
    let mut kept_labels = Vec::new();
    let mut dropped = 0usize;
    for i in 0..ds.len() {
        match class_of.get(ds_classes[ds_labels[i] as usize].as_str()) {
            Some(&mapped) => {
                kept_seqs.push(ds.sequences[i].clone());
                kept_labels.push(mapped);
            }
            None => dropped += 1,
        }
    }
    if kept_seqs.is_empty() {
        return Err(Error::validation(
            "no instances belong to classes seen during training",
        ));
    }
    let preds = clf.predict(&kept_seqs)?;
    let report = weighted_f1(&preds, &kept_labels, &clf.classes)?;
    Ok((report, dropped))
}

/// Wire format for F1 results
/// (`{task, regime, per_class, weighted_f1, dropped_unseen}`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct F1Json {
    pub task: Task,
    pub regime: Regime,
    pub per_class: Vec<ClassScore>,
    pub weighted_f1: f64,
    pub dropped_unseen: usize,
}

impl F1Json {
    pub fn new(task: Task, regime: Regime, report: F1Report, dropped_unseen: usize) -> Self {
        F1Json {
            task,
            regime,
            per_class: report.per_class,
            weighted_f1: report.weighted_f1,
            dropped_unseen,
        }
    }
}

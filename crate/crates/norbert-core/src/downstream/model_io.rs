//! Classifier model file: a self-contained container so cross-dataset
//! evaluation needs nothing beyond the file and the raw events/labels.
//!
//! Layout: magic `NGRU`, version u32, length-prefixed JSON header (classifier
//! config, task, regime, classes, vocabulary tokens, tokenizer settings),
//! the GRU tensors in canonical order, then the embedding table and/or an
//! embedded encoder checkpoint depending on the regime.

use super::{Classifier, GruConfig, GruStack, Regime, Task};
use crate::baselines::EmbeddingTable;
use crate::encoder::{load_checkpoint_from, save_checkpoint_to};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenizerConfig, Vocabulary};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"NGRU";
const VERSION: u32 = 1;

/// Everything needed to re-run the classifier on raw inputs.
#[derive(Debug, Clone)]
pub struct ClassifierFile {
    pub classifier: Classifier,
    pub vocab: Vocabulary,
    pub tokenizer: TokenizerConfig,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: GruConfig,
    task: Task,
    regime: Regime,
    classes: Vec<String>,
    vocab_tokens: Vec<String>,
    tokenizer: TokenizerConfig,
    has_table: bool,
    has_encoder: bool,
}

pub fn save_classifier(file: &ClassifierFile, path: &Path) -> Result<()> {
    let clf = &file.classifier;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header = Header {
        config: clf.config.clone(),
        task: clf.task,
        regime: clf.regime,
        classes: clf.classes.clone(),
        vocab_tokens: file.vocab.tokens().to_vec(),
        tokenizer: file.tokenizer.clone(),
        has_table: clf.table.is_some(),
        has_encoder: clf.encoder.is_some(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::format(format!("header: {e}")))?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;

    for tensor in clf.gru.params() {
        w.write_all(&(tensor.numel() as u64).to_le_bytes())?;
        for v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    if let Some(table) = &clf.table {
        w.write_all(&(table.rows() as u64).to_le_bytes())?;
        w.write_all(&(table.dim() as u64).to_le_bytes())?;
        for id in 0..table.rows() {
            for v in table.row(id) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    if let Some(enc) = &clf.encoder {
        let mut buf = Vec::new();
        save_checkpoint_to(enc, &file.vocab.content_hash(), &mut buf)?;
        w.write_all(&(buf.len() as u64).to_le_bytes())?;
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_classifier(path: &Path) -> Result<ClassifierFile> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::CheckpointMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::CheckpointVersion(version));
    }
    let header_len = read_u32(&mut r)? as usize;
    if header_len > 1 << 24 {
        return Err(Error::CheckpointCorrupt("oversized header".into()));
    }
    let mut header_json = vec![0u8; header_len];
    read_exact(&mut r, &mut header_json)?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| Error::CheckpointCorrupt(format!("header: {e}")))?;
    header.config.validate()?;
    let vocab = Vocabulary::from_tokens(header.vocab_tokens)?;

    let mut gru = GruStack::<f32>::init(
        header.config.input_dim,
        header.config.hidden,
        header.config.layers,
        header.classes.len(),
        &mut crate::numerics::Rng::new(0),
    );
    for tensor in gru.params_mut() {
        let stored = read_u64(&mut r)? as usize;
        if stored != tensor.numel() {
            return Err(Error::CheckpointShape {
                name: "gru tensor".into(),
                expected: tensor.shape().to_vec(),
                found: vec![stored],
            });
        }
        let mut buf = [0u8; 4];
        for v in tensor.data_mut() {
            read_exact(&mut r, &mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
    }
    let table = if header.has_table {
        let rows = read_u64(&mut r)? as usize;
        let dim = read_u64(&mut r)? as usize;
        if rows != vocab.len() {
            return Err(Error::CheckpointCorrupt(
                "table rows disagree with vocabulary".into(),
            ));
        }
        let mut data = vec![0.0f32; rows * dim];
        let mut buf = [0u8; 4];
        for v in data.iter_mut() {
            read_exact(&mut r, &mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        Some(EmbeddingTable::new(vocab.tokens().to_vec(), dim, data)?)
    } else {
        None
    };
    let encoder = if header.has_encoder {
        let len = read_u64(&mut r)? as usize;
        let mut buf = vec![0u8; len];
        read_exact(&mut r, &mut buf)?;
        Some(load_checkpoint_from(
            &mut &buf[..],
            Some(&vocab.content_hash()),
        )?)
    } else {
        None
    };

    Ok(ClassifierFile {
        classifier: Classifier {
            config: header.config,
            task: header.task,
            regime: header.regime,
            classes: header.classes,
            gru,
            table,
            encoder,
        },
        vocab,
        tokenizer: header.tokenizer,
    })
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::CheckpointCorrupt("unexpected end of file".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::random_table;
    use crate::downstream::{train_classifier, EmbeddingSource, LabeledDataset};

    fn tiny() -> (ClassifierFile, LabeledDataset) {
        let toks: Vec<String> = (0..9).map(|i| format!("t{i}.example")).collect();
        let (vocab, _) = Vocabulary::build(toks.iter().map(|s| s.as_str()), 1);
        let n = 6;
        let mut sequences = Vec::new();
        let mut type_labels = Vec::new();
        for i in 0..40 {
            let class = (i % 2) as u32;
            sequences.push(vec![3 + class; n]);
            type_labels.push(class);
        }
        let ds = LabeledDataset {
            sequences,
            type_labels,
            mfr_labels: vec![0; 40],
            type_classes: vec!["cam".into(), "hub".into()],
            mfr_classes: vec!["acme".into()],
            n,
        };
        let cfg = GruConfig {
            input_dim: 8,
            hidden: 6,
            layers: 2,
            batch_size: 16,
            lr: 0.02,
            n,
            epochs: 10,
            seed: 4,
        };
        let table = random_table(&vocab, 8, 2).unwrap();
        let (clf, _) =
            train_classifier(&ds, EmbeddingSource::Random(table), &cfg, Task::DeviceType)
                .unwrap();
        (
            ClassifierFile {
                classifier: clf,
                vocab,
                tokenizer: TokenizerConfig::default(),
            },
            ds,
        )
    }

    #[test]
    fn classifier_round_trip_preserves_predictions() {
        let dir = std::env::temp_dir().join("ngru-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("clf.ngru");
        let (file, ds) = tiny();
        save_classifier(&file, &path).unwrap();
        let loaded = load_classifier(&path).unwrap();

        assert_eq!(loaded.classifier.classes, file.classifier.classes);
        assert_eq!(loaded.vocab.tokens(), file.vocab.tokens());
        let a = file.classifier.predict(&ds.sequences).unwrap();
        let b = loaded.classifier.predict(&ds.sequences).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn garbage_file_is_rejected() {
        let dir = std::env::temp_dir().join("ngru-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("junk.ngru");
        std::fs::write(&path, b"not a model").unwrap();
        assert!(load_classifier(&path).is_err());
    }
}

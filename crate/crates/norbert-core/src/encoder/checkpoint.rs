//! Binary checkpoint container.
//!
//! Layout: magic `NBRT`, format version (u32 LE), length-prefixed JSON
//! config block, 32-byte vocabulary content hash, then the tensor count and
//! each named tensor as `(name_len u32, name, rank u32, dims u64..., f32 LE
//! payload)` in the canonical parameter order.

use super::{Encoder, EncoderConfig, EncoderWeights};
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"NBRT";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &Encoder<f32>, vocab_hash: &[u8; 32], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save_checkpoint_to(model, vocab_hash, &mut w)?;
    w.flush()?;
    Ok(())
}

/// [`save_checkpoint`] into any writer (used to embed encoders in other
/// containers).
pub fn save_checkpoint_to<W: Write>(
    model: &Encoder<f32>,
    vocab_hash: &[u8; 32],
    w: &mut W,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let config_json = serde_json::to_vec(&model.config)
        .map_err(|e| Error::format(format!("config serialization: {e}")))?;
    w.write_all(&(config_json.len() as u32).to_le_bytes())?;
    w.write_all(&config_json)?;
    w.write_all(vocab_hash)?;

    let names = EncoderWeights::<f32>::param_names(model.config.layers);
    let params = model.weights.params();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in names.iter().zip(params) {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &dim in tensor.shape() {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        for v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Load a checkpoint, verifying magic, version, and (when supplied) the
/// vocabulary hash against the vocabulary the caller intends to use it with.
pub fn load_checkpoint(path: &Path, expected_vocab_hash: Option<&[u8; 32]>) -> Result<Encoder<f32>> {
    load_checkpoint_from(&mut BufReader::new(File::open(path)?), expected_vocab_hash)
}

/// [`load_checkpoint`] from any reader.
pub fn load_checkpoint_from<R: Read>(
    r: &mut R,
    expected_vocab_hash: Option<&[u8; 32]>,
) -> Result<Encoder<f32>> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::CheckpointMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::CheckpointVersion(version));
    }
    let config_len = read_u32(r)? as usize;
    if config_len > 1 << 20 {
        return Err(Error::CheckpointCorrupt("oversized config block".into()));
    }
    let mut config_json = vec![0u8; config_len];
    read_exact(r, &mut config_json)?;
    let config: EncoderConfig = serde_json::from_slice(&config_json)
        .map_err(|e| Error::CheckpointCorrupt(format!("config block: {e}")))?;
    config.validate()?;

    let mut vocab_hash = [0u8; 32];
    read_exact(r, &mut vocab_hash)?;
    if let Some(expected) = expected_vocab_hash {
        if expected != &vocab_hash {
            return Err(Error::CheckpointVocabHash);
        }
    }

    let count = read_u32(r)? as usize;
    let names = EncoderWeights::<f32>::param_names(config.layers);
    if count != names.len() {
        return Err(Error::CheckpointCorrupt(format!(
            "expected {} tensors, header says {}",
            names.len(),
            count
        )));
    }
    let mut weights = EncoderWeights::<f32>::zeros_like(&config);
    {
        let expected_tensors = weights.params_mut();
        for (name, tensor) in names.iter().zip(expected_tensors) {
            let name_len = read_u32(r)? as usize;
            if name_len > 1 << 10 {
                return Err(Error::CheckpointCorrupt("oversized tensor name".into()));
            }
            let mut name_bytes = vec![0u8; name_len];
            read_exact(r, &mut name_bytes)?;
            let found_name = String::from_utf8(name_bytes)
                .map_err(|_| Error::CheckpointCorrupt("tensor name not UTF-8".into()))?;
            if &found_name != name {
                return Err(Error::CheckpointCorrupt(format!(
                    "tensor order mismatch: expected {name}, found {found_name}"
                )));
            }
            let rank = read_u32(r)? as usize;
            if rank > 8 {
                return Err(Error::CheckpointCorrupt("implausible tensor rank".into()));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                read_exact(r, &mut b)?;
                dims.push(u64::from_le_bytes(b) as usize);
            }
            if dims != tensor.shape() {
                return Err(Error::CheckpointShape {
                    name: name.clone(),
                    expected: tensor.shape().to_vec(),
                    found: dims,
                });
            }
            let mut buf = [0u8; 4];
            for v in tensor.data_mut() {
                read_exact(r, &mut buf)?;
                *v = f32::from_le_bytes(buf);
            }
        }
    }
    for t in weights.params() {
        t.assert_all_finite("checkpoint tensor")?;
    }
    Ok(Encoder { config, weights })
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

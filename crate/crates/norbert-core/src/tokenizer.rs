//! FQDN truncation tokenizer and vocabulary handling.
//!
//! An FQDN embeds a hierarchy read right to left, with dots delimiting the
//! levels. Truncating to `k` levels collapses load-balanced and versioned
//! hostnames ("server-54.us-east-1.update.xyz.com" and
//! "server-27.us-west-2.update.xyz.com" both become "update.xyz.com"),
//! which both shrinks the vocabulary and merges tokens that name the same
//! service. `LeftmostLiteral` keeps the first `k` labels instead and exists
//! only for comparison runs.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const MASK_ID: u32 = 2;
pub const RESERVED: [&str; 3] = ["[PAD]", "[UNK]", "[MASK]"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncateMode {
    /// Keep the last `k` labels (TLD side) — the default.
    Rightmost,
    /// Keep the first `k` labels.
    LeftmostLiteral,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub k: usize,
    pub mode: TruncateMode,
    pub min_count: u64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            k: 3,
            mode: TruncateMode::Rightmost,
            min_count: 1,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::validation("truncation level k must be >= 1"));
        }
        if self.min_count == 0 {
            return Err(Error::validation("min_count must be >= 1"));
        }
        Ok(())
    }

    pub fn truncate(&self, fqdn: &str) -> Result<String> {
        truncate_fqdn(fqdn, self.k, self.mode)
    }
}

/// Truncate an FQDN to `k` hierarchy levels. Input is lowercased and a
/// trailing dot is stripped before splitting; names with at most `k` labels
/// pass through unchanged.
pub fn truncate_fqdn(fqdn: &str, k: usize, mode: TruncateMode) -> Result<String> {
    let name = fqdn.to_ascii_lowercase();
    let name = name.strip_suffix('.').unwrap_or(&name);
    if name.is_empty() {
        return Err(Error::validation("cannot truncate an empty FQDN"));
    }
    let labels: Vec<&str> = name.split('.').collect();
    if labels.len() <= k {
        return Ok(name.to_string());
    }
    let kept = match mode {
        TruncateMode::Rightmost => &labels[labels.len() - k..],
        TruncateMode::LeftmostLiteral => &labels[..k],
    };
    Ok(kept.join("."))
}

/// Namespaced (field, value) token pair for generic protocol-token streams:
/// `F:<field>` then `V:<field>=<value>`. The prefixes keep these disjoint
/// from FQDN tokens.
pub fn tokenize_field_value(field: &str, value: &str) -> [String; 2] {
    [format!("F:{field}"), format!("V:{field}={value}")]
}

/// Bidirectional token <-> id map. Ids are contiguous from 0 and the first
/// three slots are always `[PAD]`, `[UNK]`, `[MASK]`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Rebuild from an explicit token list (e.g. one embedded in a model
    /// file); the reserved slots must be in place.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len()
            || tokens[..RESERVED.len()] != RESERVED.map(str::to_string)
        {
            return Err(Error::format(
                "token list does not start with the reserved tokens",
            ));
        }
        Ok(Self::from_token_list(tokens))
    }

    fn from_token_list(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Build from a token stream: tokens reaching `min_count` are ordered by
    /// descending frequency then ascending lexicographic, after the reserved
    /// slots. Returns the vocabulary and whether the stream was empty.
    pub fn build<I, S>(stream: I, min_count: u64) -> (Self, bool)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut seen_any = false;
        for tok in stream {
            seen_any = true;
            *counts.entry(tok.as_ref().to_string()).or_insert(0) += 1;
        }
        let mut ranked: Vec<(String, u64)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(ranked.into_iter().map(|(t, _)| t));
        (Self::from_token_list(tokens), !seen_any)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Unknown tokens map to `[UNK]`.
    pub fn encode(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn decode(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or_else(|| {
                Error::validation(format!(
                    "id {} out of range for vocabulary of {}",
                    id,
                    self.tokens.len()
                ))
            })
    }

    /// SHA-256 of the canonical serialization (tokens joined by newlines).
    pub fn content_hash(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().into()
    }

    /// vocab.tsv: one token per line, line number = id.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: Read>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            if lineno < RESERVED.len() && line != RESERVED[lineno] {
                return Err(Error::format(format!(
                    "vocab line {} must be {}, found {:?}",
                    lineno + 1,
                    RESERVED[lineno],
                    line
                )));
            }
            tokens.push(line);
        }
        if tokens.len() < RESERVED.len() {
            return Err(Error::format("vocabulary is missing reserved tokens"));
        }
        Ok(Self::from_token_list(tokens))
    }
}

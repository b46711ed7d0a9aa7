//! Embedding exploration: cosine nearest neighbors, mean-pooled sequence
//! embeddings, and 2-D projection with TSV export.

mod pca;
mod tsne;

pub use pca::pca_2d;
pub use tsne::{joint_affinities, kl_and_grad, tsne_2d, TsneTrace};

use crate::baselines::EmbeddingTable;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::pretrain::embed_ids;
use crate::tokenizer::{Vocabulary, RESERVED};
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMethod {
    Pca,
    Tsne,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub method: ProjectionMethod,
    pub perplexity: f64,
    pub iterations: usize,
    pub tsne_lr: f64,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            method: ProjectionMethod::Tsne,
            perplexity: 30.0,
            iterations: 1000,
            tsne_lr: 200.0,
            seed: 0,
        }
    }
}

/// Cosine similarity; zero vectors are rejected.
pub fn cosine<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::validation("cosine: dimension mismatch"));
    }
    let mut dot = T::ZERO;
    let mut nu = T::ZERO;
    let mut nv = T::ZERO;
    for (a, b) in u.iter().zip(v) {
        dot += *a * *b;
        nu += *a * *a;
        nv += *b * *b;
    }
    if nu == T::ZERO || nv == T::ZERO {
        return Err(Error::validation("cosine of a zero vector is undefined"));
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// Ranked neighbor list for one query token.
#[derive(Debug, Clone)]
pub struct NeighborResult {
    pub query: String,
    /// `(token, cosine)` sorted by descending similarity; ties broken by
    /// ascending token.
    pub neighbors: Vec<(String, f64)>,
}

/// Exact top-`m` cosine neighbors over all non-reserved rows, the query
/// itself excluded.
pub fn nearest_neighbors(
    query: &str,
    table: &EmbeddingTable,
    m: usize,
) -> Result<NeighborResult> {
    let qid = table
        .token_id(query)
        .ok_or_else(|| Error::validation(format!("token {query:?} not in vocabulary")))?;
    let qrow = table.row(qid);
    let mut scored: Vec<(String, f64)> = Vec::new();
    for id in RESERVED.len()..table.rows() {
        if id == qid {
            continue;
        }
        let c = cosine(qrow, table.row(id))? as f64;
        scored.push((table.tokens()[id].clone(), c));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(m);
    Ok(NeighborResult {
        query: query.to_string(),
        neighbors: scored,
    })
}

/// Neighbor TSV: `query<TAB>rank<TAB>neighbor<TAB>cosine`.
pub fn write_neighbors_tsv<W: Write>(result: &NeighborResult, mut w: W) -> Result<()> {
    for (rank, (tok, cos)) in result.neighbors.iter().enumerate() {
        writeln!(w, "{}\t{}\t{}\t{}", result.query, rank + 1, tok, cos)?;
    }
    Ok(())
}

/// Sequence embedding: the arithmetic mean of the contextual output vectors.
pub fn sequence_embedding(
    model: &Encoder<f32>,
    tokens: &[String],
    vocab: &Vocabulary,
) -> Result<Vec<f32>> {
    let ids: Vec<u32> = tokens.iter().map(|t| vocab.encode(t)).collect();
    sequence_embedding_ids(model, &ids)
}

pub fn sequence_embedding_ids(model: &Encoder<f32>, ids: &[u32]) -> Result<Vec<f32>> {
    if ids.is_empty() {
        return Err(Error::validation("cannot embed an empty sequence"));
    }
    let hidden = embed_ids(model, ids)?;
    let d = model.config.dim;
    let n = ids.len();
    let mut mean = vec![0.0f32; d];
    for t in 0..n {
        for i in 0..d {
            mean[i] += hidden[t * d + i];
        }
    }
    let inv = 1.0 / n as f32;
    mean.iter_mut().for_each(|v| *v *= inv);
    Ok(mean)
}

/// Project `[m, d]` points to 2-D. PCA is deterministic (sign-fixed); t-SNE
/// additionally returns an optimization trace through `trace_out`.
pub fn project_2d<T: Real>(
    points: &[T],
    dim: usize,
    cfg: &ProjectionConfig,
    trace_out: Option<&mut TsneTrace>,
) -> Result<Vec<[T; 2]>> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::validation("points buffer does not match dim"));
    }
    match cfg.method {
        ProjectionMethod::Pca => pca_2d(points, dim),
        ProjectionMethod::Tsne => tsne_2d(points, dim, cfg, trace_out),
    }
}

/// Map items to group labels by longest matching prefix; items matching no
/// prefix get group 0.
pub fn assign_groups(items: &[String], prefix_groups: &[(String, u32)]) -> Vec<u32> {
    items
        .iter()
        .map(|item| {
            prefix_groups
                .iter()
                .filter(|(p, _)| item.starts_with(p.as_str()))
                .max_by_key(|(p, _)| p.len())
                .map(|(_, g)| *g)
                .unwrap_or(0)
        })
        .collect()
}

/// projection.tsv: `item<TAB>x<TAB>y<TAB>group`.
pub fn export_points<T: Real, W: Write>(
    items: &[String],
    coords: &[[T; 2]],
    groups: &[u32],
    mut w: W,
) -> Result<()> {
    if items.len() != coords.len() || items.len() != groups.len() {
        return Err(Error::validation(
            "items, coords, and groups must have equal lengths",
        ));
    }
    for ((item, xy), g) in items.iter().zip(coords).zip(groups) {
        writeln!(w, "{}\t{}\t{}\t{}", item, xy[0], xy[1], g)?;
    }
    Ok(())
}

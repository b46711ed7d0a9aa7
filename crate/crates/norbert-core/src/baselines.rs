//! Context-independent embedding baselines: random initialization and a
//! co-occurrence factorization trainer (weighted least squares on log
//! counts, main + context vectors summed into the final table).

use crate::error::{Error, Result};
use crate::numerics::{Real, Rng};
use crate::tokenizer::{Vocabulary, UNK_ID};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

/// Context-independent token -> vector map: one row per vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(tokens: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != tokens.len() * dim {
            return Err(Error::validation(format!(
                "embedding data length {} does not match {} tokens x dim {}",
                data.len(),
                tokens.len(),
                dim
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("non-finite embedding entry"));
        }
        Ok(EmbeddingTable { tokens, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.tokens.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn row(&self, id: usize) -> &[f32] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [f32] {
        &mut self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn token_id(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    /// Text export: `token<SP>v1<SP>...<SP>vD`, one row per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, tok) in self.tokens.iter().enumerate() {
            write!(w, "{tok}")?;
            for v in self.row(i) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_text<R: Read>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let tok = parts
                .next()
                .ok_or_else(|| Error::format(format!("embedding line {}", lineno + 1)))?;
            let values: Vec<f32> = parts
                .map(|p| {
                    p.parse::<f32>()
                        .map_err(|_| Error::format(format!("embedding line {}: bad float", lineno + 1)))
                })
                .collect::<Result<_>>()?;
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::format(format!(
                        "embedding line {}: expected {} values, found {}",
                        lineno + 1,
                        d,
                        values.len()
                    )))
                }
                _ => {}
            }
            tokens.push(tok.to_string());
            data.extend(values);
        }
        let dim = dim.ok_or_else(|| Error::format("empty embedding file"))?;
        EmbeddingTable::new(tokens, dim, data)
    }
}

/// Random table: entries i.i.d. normal(0, 0.02^2), reserved rows included.
pub fn random_table(vocab: &Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::validation("embedding dim must be >= 1"));
    }
    let mut rng = Rng::new(seed);
    let data = (0..vocab.len() * dim)
        .map(|_| (rng.normal() * 0.02) as f32)
        .collect();
    EmbeddingTable::new(vocab.tokens().to_vec(), dim, data)
}

/// Sparse symmetric co-occurrence counts over vocabulary ids.
#[derive(Debug, Clone)]
pub struct CoocMatrix {
    counts: HashMap<(u32, u32), f64>,
    pub window: usize,
}

impl CoocMatrix {
    pub fn nonzeros(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, i: u32, j: u32) -> f64 {
        self.counts.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.counts.iter().map(|(&(i, j), &x)| (i, j, x))
    }
}

/// Count unweighted symmetric window co-occurrences: for every position `p`
/// and offset `d in [1, window]` inside one sequence, `X[s[p], s[p+d]]` and
/// `X[s[p+d], s[p]]` each gain 1. `[PAD]`/`[UNK]` positions are skipped and
/// the diagonal is never populated.
pub fn count_cooccurrence(sequences: &[Vec<u32>], window: usize) -> Result<CoocMatrix> {
    if window == 0 {
        return Err(Error::validation("window must be >= 1"));
    }
    let mut counts: HashMap<(u32, u32), f64> = HashMap::new();
    for seq in sequences {
        for p in 0..seq.len() {
            let a = seq[p];
            if a <= UNK_ID {
                continue;
            }
            for d in 1..=window.min(seq.len().saturating_sub(p + 1)) {
                let b = seq[p + d];
                if b <= UNK_ID || a == b {
                    continue;
                }
                *counts.entry((a, b)).or_insert(0.0) += 1.0;
                *counts.entry((b, a)).or_insert(0.0) += 1.0;
            }
        }
    }
    Ok(CoocMatrix { counts, window })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GloveConfig {
    pub dim: usize,
    pub window: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig {
            dim: 128,
            window: 5,
            x_max: 100.0,
            alpha: 0.75,
            lr: 0.05,
            epochs: 25,
            seed: 0,
        }
    }
}

impl GloveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation("dim must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) || self.alpha == 0.0 {
            return Err(Error::validation("alpha must lie in (0, 1]"));
        }
        if self.x_max <= 0.0 {
            return Err(Error::validation("x_max must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be >= 1"));
        }
        Ok(())
    }
}

/// Loss and gradients of one weighted-least-squares term
/// `f(x) (w_i . c_j + b_i + b_j - ln x)^2` with `f(x) = min(1, (x/x_max)^alpha)`.
///
/// Returns `(loss, d_wi, d_cj, d_bi, d_bj)`; shared between the SGD loop and
/// the finite-difference oracle.
pub fn glove_term<T: Real>(
    wi: &[T],
    cj: &[T],
    bi: T,
    bj: T,
    x: f64,
    x_max: f64,
    alpha: f64,
) -> (T, Vec<T>, Vec<T>, T, T) {
    debug_assert!(x > 0.0);
    let weight = T::from_f64((x / x_max).powf(alpha).min(1.0));
    let mut dot = T::ZERO;
    for (a, b) in wi.iter().zip(cj) {
        dot += *a * *b;
    }
    let err = dot + bi + bj - T::from_f64(x.ln());
    let loss = weight * err * err;
    let coeff = T::from_f64(2.0) * weight * err;
    let d_wi: Vec<T> = cj.iter().map(|&c| coeff * c).collect();
    let d_cj: Vec<T> = wi.iter().map(|&w| coeff * w).collect();
    (loss, d_wi, d_cj, coeff, coeff)
}

/// Train main + context vectors and biases by SGD over the nonzero entries
/// (shuffled per epoch, seeded); the final table is the sum of main and
/// context vectors. Returns the table and the objective value per epoch,
/// measured by a full pass after the epoch's updates.
pub fn glove_train(
    cooc: &CoocMatrix,
    cfg: &GloveConfig,
    vocab: &Vocabulary,
) -> Result<(EmbeddingTable, Vec<f64>)> {
    cfg.validate()?;
    if cooc.nonzeros() == 0 {
        return Err(Error::validation("co-occurrence matrix is empty"));
    }
    let v = vocab.len();
    let d = cfg.dim;
    let mut rng = Rng::new(cfg.seed);
    let scale = 0.5 / (d + 1) as f64;
    let mut main = vec![0.0f32; v * d];
    let mut ctx = vec![0.0f32; v * d];
    for x in main.iter_mut().chain(ctx.iter_mut()) {
        *x = ((rng.uniform() - 0.5) * 2.0 * scale) as f32;
    }
    let mut b_main = vec![0.0f32; v];
    let mut b_ctx = vec![0.0f32; v];

    let mut entries: Vec<(u32, u32, f64)> = cooc.entries().collect();
    // deterministic base order before the seeded shuffle
    entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let lr = cfg.lr as f32;
    let mut objective = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut entries);
        for &(i, j, x) in &entries {
            let (i, j) = (i as usize, j as usize);
            let (_, d_wi, d_cj, d_bi, d_bj) = glove_term(
                &main[i * d..(i + 1) * d],
                &ctx[j * d..(j + 1) * d],
                b_main[i],
                b_ctx[j],
                x,
                cfg.x_max,
                cfg.alpha,
            );
            let wi = &mut main[i * d..(i + 1) * d];
            for (w, g) in wi.iter_mut().zip(&d_wi) {
                *w -= lr * g;
            }
            let cj = &mut ctx[j * d..(j + 1) * d];
            for (c, g) in cj.iter_mut().zip(&d_cj) {
                *c -= lr * g;
            }
            b_main[i] -= lr * d_bi;
            b_ctx[j] -= lr * d_bj;
        }
        let mut total = 0.0f64;
        for &(i, j, x) in &entries {
            let (i, j) = (i as usize, j as usize);
            let (loss, ..) = glove_term(
                &main[i * d..(i + 1) * d],
                &ctx[j * d..(j + 1) * d],
                b_main[i],
                b_ctx[j],
                x,
                cfg.x_max,
                cfg.alpha,
            );
            total += loss as f64;
        }
        if !total.is_finite() {
            return Err(Error::numeric(
                "co-occurrence objective diverged; lower the learning rate",
            ));
        }
        objective.push(total);
    }

    let mut data = vec![0.0f32; v * d];
    for idx in 0..v * d {
        data[idx] = main[idx] + ctx[idx];
    }
    Ok((EmbeddingTable::new(vocab.tokens().to_vec(), d, data)?, objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    fn vocab_of(tokens: &[&str]) -> Vocabulary {
        let (v, _) = Vocabulary::build(tokens.iter().copied(), 1);
        v
    }

    #[test]
    fn random_table_is_seeded_and_shaped() {
        let v = vocab_of(&["a.example", "b.example"]);
        let t1 = random_table(&v, 16, 9).unwrap();
        let t2 = random_table(&v, 16, 9).unwrap();
        let t3 = random_table(&v, 16, 10).unwrap();
        assert_eq!(t1, t2);
        assert_ne!(t1, t3);
        assert_eq!(t1.rows(), 5);
        assert_eq!(t1.dim(), 16);
    }

    #[test]
    fn cooc_adjacent_pairs_hand_count() {
        // [a, b, a] with window 1: X(a,b) = X(b,a) = 2.
        let seqs = vec![vec![3u32, 4, 3]];
        let m = count_cooccurrence(&seqs, 1).unwrap();
        assert_eq!(m.get(3, 4), 2.0);
        assert_eq!(m.get(4, 3), 2.0);
        assert_eq!(m.get(3, 3), 0.0);
        assert_eq!(m.nonzeros(), 2);
    }

    #[test]
    fn cooc_single_token_sequence_is_empty() {
        let m = count_cooccurrence(&[vec![5u32]], 3).unwrap();
        assert_eq!(m.nonzeros(), 0);
    }

    #[test]
    fn cooc_invariant_under_sequence_reversal() {
        let seqs = vec![vec![3u32, 4, 5, 3, 6], vec![7u32, 3, 4]];
        let rev: Vec<Vec<u32>> = seqs
            .iter()
            .map(|s| s.iter().rev().copied().collect())
            .collect();
        let a = count_cooccurrence(&seqs, 2).unwrap();
        let b = count_cooccurrence(&rev, 2).unwrap();
        let mut ea: Vec<_> = a.entries().collect();
        let mut eb: Vec<_> = b.entries().collect();
        ea.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        eb.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        assert_eq!(ea, eb);
    }

    #[test]
    fn cooc_skips_pad_and_unk() {
        let seqs = vec![vec![3u32, 0, 1, 4]];
        let m = count_cooccurrence(&seqs, 3).unwrap();
        assert_eq!(m.get(3, 4), 1.0);
        assert_eq!(m.get(3, 0), 0.0);
        assert_eq!(m.get(3, 1), 0.0);
    }

    #[test]
    fn cooc_symmetry_always_holds() {
        let seqs: Vec<Vec<u32>> = (0..20)
            .map(|i| (0..15).map(|j| 3 + ((i * 7 + j * 3) % 11) as u32).collect())
            .collect();
        let m = count_cooccurrence(&seqs, 4).unwrap();
        for (i, j, x) in m.entries() {
            assert_eq!(m.get(j, i), x, "asymmetry at ({i},{j})");
        }
    }

    #[test]
    fn weighting_saturates_at_x_max() {
        let w = [0.1f64, 0.2];
        let c = [0.3f64, -0.1];
        // x >= x_max: weight exactly 1, so loss = (err)^2
        let (loss, ..) = glove_term(&w, &c, 0.0, 0.0, 100.0, 100.0, 0.75);
        let err = 0.1 * 0.3 - 0.2 * 0.1 - 100.0f64.ln();
        assert!((loss - err * err).abs() < 1e-12);
        let (loss_over, ..) = glove_term(&w, &c, 0.0, 0.0, 250.0, 100.0, 0.75);
        let err_over = 0.1 * 0.3 - 0.2 * 0.1 - 250.0f64.ln();
        assert!((loss_over - err_over * err_over).abs() < 1e-12);
    }

    #[test]
    fn glove_term_gradient_matches_finite_differences() {
        let d = 6;
        let mut rng = Rng::new(41);
        let wi: Vec<f64> = (0..d).map(|_| rng.normal() * 0.3).collect();
        let cj: Vec<f64> = (0..d).map(|_| rng.normal() * 0.3).collect();
        let (bi, bj) = (rng.normal() * 0.1, rng.normal() * 0.1);
        let x = 7.0;
        let (_, d_wi, d_cj, d_bi, d_bj) = glove_term(&wi, &cj, bi, bj, x, 100.0, 0.75);

        // pack all parameters of the term into one vector
        let mut flat = wi.clone();
        flat.extend(&cj);
        flat.push(bi);
        flat.push(bj);
        let mut analytic = d_wi.clone();
        analytic.extend(&d_cj);
        analytic.push(d_bi);
        analytic.push(d_bj);
        let err = grad_check(
            |p| {
                let (l, ..) = glove_term(&p[..d], &p[d..2 * d], p[2 * d], p[2 * d + 1], x, 100.0, 0.75);
                l
            },
            &flat,
            &analytic,
            1e-6,
        );
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn toy_objective_is_non_increasing() {
        let vocab = vocab_of(&["a.example", "b.example"]);
        let seqs = vec![vec![vocab.encode("a.example"), vocab.encode("b.example"), vocab.encode("a.example")]];
        let cooc = count_cooccurrence(&seqs, 1).unwrap();
        let cfg = GloveConfig {
            dim: 4,
            lr: 0.01,
            epochs: 30,
            seed: 5,
            ..Default::default()
        };
        let (_, objective) = glove_train(&cooc, &cfg, &vocab).unwrap();
        for w in objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn glove_is_deterministic_per_seed() {
        let vocab = vocab_of(&["a.example", "b.example", "c.example"]);
        let seqs = vec![vec![3u32, 4, 5, 3, 4], vec![5u32, 3, 4]];
        let cooc = count_cooccurrence(&seqs, 2).unwrap();
        let cfg = GloveConfig {
            dim: 8,
            lr: 0.02,
            epochs: 5,
            seed: 77,
            ..Default::default()
        };
        let (t1, o1) = glove_train(&cooc, &cfg, &vocab).unwrap();
        let (t2, o2) = glove_train(&cooc, &cfg, &vocab).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(o1, o2);
    }

    #[test]
    fn shared_contexts_pull_tokens_together() {
        // a and b co-occur with the same context tokens; z lives elsewhere.
        // After training, cos(a, b) must beat cos(a, z).
        let tokens = ["a.example", "b.example", "c1.example", "c2.example", "z.example", "y.example"];
        let vocab = vocab_of(&tokens);
        let a = vocab.encode("a.example");
        let b = vocab.encode("b.example");
        let c1 = vocab.encode("c1.example");
        let c2 = vocab.encode("c2.example");
        let z = vocab.encode("z.example");
        let y = vocab.encode("y.example");
        let mut seqs = Vec::new();
        for _ in 0..60 {
            seqs.push(vec![a, c1, a, c2]);
            seqs.push(vec![b, c1, b, c2]);
            seqs.push(vec![z, y, z, y]);
        }
        let cooc = count_cooccurrence(&seqs, 1).unwrap();
        let cfg = GloveConfig {
            dim: 8,
            lr: 0.03,
            epochs: 60,
            seed: 13,
            ..Default::default()
        };
        let (table, _) = glove_train(&cooc, &cfg, &vocab).unwrap();
        let cos = |u: &[f32], v: &[f32]| {
            let dot: f32 = u.iter().zip(v).map(|(x, y)| x * y).sum();
            let nu: f32 = u.iter().map(|x| x * x).sum::<f32>().sqrt();
            let nv: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            dot / (nu * nv)
        };
        let cab = cos(table.row(a as usize), table.row(b as usize));
        let caz = cos(table.row(a as usize), table.row(z as usize));
        assert!(cab > caz, "cos(a,b)={cab} should beat cos(a,z)={caz}");
    }

    #[test]
    fn table_text_round_trip() {
        let v = vocab_of(&["a.example", "b.example"]);
        let t = random_table(&v, 5, 3).unwrap();
        let mut buf = Vec::new();
        t.write_text(&mut buf).unwrap();
        let t2 = EmbeddingTable::read_text(&buf[..]).unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn empty_cooc_is_rejected() {
        let vocab = vocab_of(&["a.example"]);
        let cooc = count_cooccurrence(&[vec![3u32]], 1).unwrap();
        assert!(glove_train(&cooc, &GloveConfig::default(), &vocab).is_err());
    }
}

//! Exact t-SNE (no tree approximation): Gaussian conditional affinities with
//! per-point bandwidth found by bisection on the perplexity target, a
//! Student-t low-dimensional kernel, and KL minimization by momentum
//! gradient descent with early exaggeration.

use super::ProjectionConfig;
use crate::error::{Error, Result};
use crate::numerics::{Real, Rng};

const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const MOMENTUM_SWITCH: usize = 250;
const MOMENTUM_EARLY: f64 = 0.5;
const MOMENTUM_LATE: f64 = 0.8;

/// Optimization trace: KL divergence against the true (unexaggerated) P,
/// sampled every 100 iterations plus the exaggeration boundary and the final
/// iteration, and the worst per-point entropy mismatch from the bisection.
#[derive(Debug, Clone, Default)]
pub struct TsneTrace {
    pub kl: Vec<(usize, f64)>,
    pub entropy_err_bits: f64,
}

impl TsneTrace {
    pub fn kl_at(&self, iter: usize) -> Option<f64> {
        self.kl.iter().find(|(i, _)| *i == iter).map(|(_, k)| *k)
    }
}

fn pairwise_sq_dists(points: &[f64], dim: usize, m: usize) -> Vec<f64> {
    let mut d = vec![0.0f64; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let mut s = 0.0;
            for k in 0..dim {
                let diff = points[i * dim + k] - points[j * dim + k];
                s += diff * diff;
            }
            d[i * m + j] = s;
            d[j * m + i] = s;
        }
    }
    d
}

/// Conditional distribution for point `i` at bandwidth `beta`, plus its
/// Shannon entropy in bits.
fn conditional_row(dists: &[f64], i: usize, m: usize, beta: f64, row: &mut [f64]) -> f64 {
    let mut min_d = f64::INFINITY;
    for j in 0..m {
        if j != i && dists[i * m + j] < min_d {
            min_d = dists[i * m + j];
        }
    }
    let mut sum = 0.0;
    for j in 0..m {
        row[j] = if j == i {
            0.0
        } else {
            (beta * (min_d - dists[i * m + j])).exp()
        };
        sum += row[j];
    }
    let mut entropy_nats = 0.0;
    for j in 0..m {
        row[j] /= sum;
        if row[j] > 0.0 {
            entropy_nats -= row[j] * row[j].ln();
        }
    }
    entropy_nats / std::f64::consts::LN_2
}

/// Symmetrized joint affinities `P = (P(j|i) + P(i|j)) / 2m` with each
/// point's bandwidth bisected until the conditional entropy matches
/// `log2(perplexity)`. Returns the matrix and the worst entropy error (bits).
pub fn joint_affinities(points: &[f64], dim: usize, perplexity: f64) -> Result<(Vec<f64>, f64)> {
    let m = points.len() / dim;
    if perplexity <= 1.0 {
        return Err(Error::validation("perplexity must exceed 1"));
    }
    if (m as f64) / 3.0 <= perplexity {
        return Err(Error::validation(format!(
            "perplexity {perplexity} is infeasible for {m} points (needs perplexity < points/3)"
        )));
    }
    let dists = pairwise_sq_dists(points, dim, m);
    let target_bits = perplexity.log2();
    let mut cond = vec![0.0f64; m * m];
    let mut worst_err = 0.0f64;
    let mut row = vec![0.0f64; m];
    for i in 0..m {
        let mut beta = 1.0;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        let mut err = f64::INFINITY;
        for _ in 0..200 {
            let entropy = conditional_row(&dists, i, m, beta, &mut row);
            err = entropy - target_bits;
            if err.abs() < 1e-6 {
                break;
            }
            if err > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_infinite() {
                    beta * 2.0
                } else {
                    0.5 * (beta + beta_max)
                };
            } else {
                beta_max = beta;
                beta = if beta_min.is_infinite() {
                    beta * 0.5
                } else {
                    0.5 * (beta + beta_min)
                };
            }
        }
        worst_err = worst_err.max(err.abs());
        cond[i * m..(i + 1) * m].copy_from_slice(&row);
    }
    let mut p = vec![0.0f64; m * m];
    let norm = 1.0 / (2.0 * m as f64);
    for i in 0..m {
        for j in 0..m {
            p[i * m + j] = (cond[i * m + j] + cond[j * m + i]) * norm;
        }
    }
    Ok((p, worst_err))
}

/// Student-t kernel weights `w_ij = 1/(1+||y_i-y_j||^2)` and normalized Q.
fn q_matrix<T: Real>(y: &[T], m: usize) -> (Vec<T>, Vec<T>) {
    let mut w = vec![T::ZERO; m * m];
    let mut sum = T::ZERO;
    for i in 0..m {
        for j in (i + 1)..m {
            let dx = y[i * 2] - y[j * 2];
            let dy = y[i * 2 + 1] - y[j * 2 + 1];
            let wij = T::ONE / (T::ONE + dx * dx + dy * dy);
            w[i * m + j] = wij;
            w[j * m + i] = wij;
            sum += wij + wij;
        }
    }
    let q: Vec<T> = w.iter().map(|&x| x / sum).collect();
    (w, q)
}

/// KL(P || Q) and its gradient with respect to the 2-D embedding:
/// `dKL/dy_i = 4 sum_j (p_ij - q_ij) w_ij (y_i - y_j)`.
pub fn kl_and_grad<T: Real>(p: &[T], y: &[T], m: usize) -> (T, Vec<T>) {
    let (w, q) = q_matrix(y, m);
    let tiny = T::from_f64(1e-12);
    let mut kl = T::ZERO;
    let mut grad = vec![T::ZERO; m * 2];
    let four = T::from_f64(4.0);
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let pij = p[i * m + j];
            let qij = q[i * m + j].max(tiny);
            if pij > T::ZERO {
                kl += pij * (pij / qij).ln();
            }
            let coeff = four * (pij - q[i * m + j]) * w[i * m + j];
            grad[i * 2] += coeff * (y[i * 2] - y[j * 2]);
            grad[i * 2 + 1] += coeff * (y[i * 2 + 1] - y[j * 2 + 1]);
        }
    }
    (kl, grad)
}

/// Run exact t-SNE to 2-D.
pub fn tsne_2d<T: Real>(
    points: &[T],
    dim: usize,
    cfg: &ProjectionConfig,
    trace_out: Option<&mut TsneTrace>,
) -> Result<Vec<[T; 2]>> {
    let m = points.len() / dim;
    if m < 4 {
        return Err(Error::validation("t-SNE needs at least 4 points"));
    }
    if cfg.iterations == 0 {
        return Err(Error::validation("iterations must be >= 1"));
    }
    let points_f64: Vec<f64> = points.iter().map(|v| v.to_f64()).collect();
    let (p_true, entropy_err) = joint_affinities(&points_f64, dim, cfg.perplexity)?;
    let p_true_t: Vec<T> = p_true.iter().map(|&v| T::from_f64(v)).collect();
    let p_exag: Vec<T> = p_true.iter().map(|&v| T::from_f64(v * EXAGGERATION)).collect();

    let mut rng = Rng::new(cfg.seed);
    let mut y: Vec<T> = (0..m * 2)
        .map(|_| T::from_f64(rng.normal() * 1e-4))
        .collect();
    let mut velocity = vec![T::ZERO; m * 2];

    let mut trace = TsneTrace {
        entropy_err_bits: entropy_err,
        ..Default::default()
    };
    for iter in 0..cfg.iterations {
        let p = if iter < EXAGGERATION_ITERS.min(cfg.iterations / 2) {
            &p_exag
        } else {
            &p_true_t
        };
        let (_, grad) = kl_and_grad(p, &y, m);
        let momentum = T::from_f64(if iter < MOMENTUM_SWITCH {
            MOMENTUM_EARLY
        } else {
            MOMENTUM_LATE
        });
        let lr = T::from_f64(cfg.tsne_lr);
        for k in 0..m * 2 {
            velocity[k] = momentum * velocity[k] - lr * grad[k];
            y[k] += velocity[k];
        }
        if iter % 100 == 0 || iter == EXAGGERATION_ITERS || iter + 1 == cfg.iterations {
            let (kl, _) = kl_and_grad(&p_true_t, &y, m);
            trace.kl.push((iter, kl.to_f64()));
        }
    }
    if let Some(out) = trace_out {
        *out = trace;
    }
    Ok(y.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::ProjectionMethod;
    use crate::numerics::grad_check;

    fn blob_points(m: usize, dim: usize, seed: u64) -> Vec<f64> {
        // two well-separated clusters
        let mut rng = Rng::new(seed);
        let mut pts = Vec::with_capacity(m * dim);
        for i in 0..m {
            let center = if i % 2 == 0 { 0.0 } else { 8.0 };
            for _ in 0..dim {
                pts.push(center + rng.normal());
            }
        }
        pts
    }

    #[test]
    fn affinity_entropy_matches_perplexity_and_sums_to_one() {
        let pts = blob_points(60, 5, 3);
        let (p, err) = joint_affinities(&pts, 5, 12.0).unwrap();
        assert!(err < 1e-4, "entropy error {err} bits");
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "P sums to {sum}");
        // symmetry
        let m = 60;
        for i in 0..m {
            for j in 0..m {
                assert!((p[i * m + j] - p[j * m + i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn infeasible_perplexity_is_rejected() {
        let pts = blob_points(10, 3, 1);
        assert!(joint_affinities(&pts, 3, 5.0).is_err());
        assert!(joint_affinities(&pts, 3, 2.5).is_ok());
    }

    #[test]
    fn kl_gradient_matches_finite_differences_on_ten_points() {
        let pts = blob_points(10, 4, 7);
        let (p, _) = joint_affinities(&pts, 4, 2.5).unwrap();
        let mut rng = Rng::new(9);
        let y: Vec<f64> = (0..20).map(|_| rng.normal() * 0.5).collect();
        let (_, grad) = kl_and_grad(&p, &y, 10);
        let err = grad_check(
            |yv| kl_and_grad(&p, yv, 10).0,
            &y,
            &grad,
            1e-6,
        );
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn kl_drops_after_exaggeration_phase() {
        let pts = blob_points(80, 6, 5);
        let cfg = ProjectionConfig {
            method: ProjectionMethod::Tsne,
            perplexity: 10.0,
            iterations: 600,
            tsne_lr: 100.0,
            seed: 2,
        };
        let mut trace = TsneTrace::default();
        let coords = tsne_2d(&pts, 6, &cfg, Some(&mut trace)).unwrap();
        assert_eq!(coords.len(), 80);
        let at_250 = trace.kl_at(250).unwrap();
        let final_kl = trace.kl.last().unwrap().1;
        assert!(
            final_kl < at_250,
            "KL should keep dropping: {final_kl} vs {at_250} at iteration 250"
        );
        assert!(coords.iter().flatten().all(|v: &f64| v.is_finite()));
    }

    #[test]
    fn separated_clusters_stay_separated_in_2d() {
        let pts = blob_points(40, 5, 11);
        let cfg = ProjectionConfig {
            method: ProjectionMethod::Tsne,
            perplexity: 8.0,
            iterations: 400,
            tsne_lr: 100.0,
            seed: 4,
        };
        let coords = tsne_2d(&pts, 5, &cfg, None).unwrap();
        // mean distance within cluster vs across clusters
        let mut within = 0.0;
        let mut across = 0.0;
        let (mut nw, mut na) = (0usize, 0usize);
        for i in 0..40 {
            for j in (i + 1)..40 {
                let d = ((coords[i][0] - coords[j][0]).powi(2)
                    + (coords[i][1] - coords[j][1]).powi(2))
                .sqrt();
                if i % 2 == j % 2 {
                    within += d;
                    nw += 1;
                } else {
                    across += d;
                    na += 1;
                }
            }
        }
        assert!(across / na as f64 > 2.0 * within / nw as f64);
    }

    #[test]
    fn too_few_points_rejected() {
        let cfg = ProjectionConfig::default();
        assert!(tsne_2d(&[0.0f64; 6], 2, &cfg, None).is_err());
    }
}

//! Two-component PCA via a Jacobi eigensolver on the covariance matrix.

use crate::error::{Error, Result};
use crate::numerics::Real;

/// Center the points and project onto the top two covariance eigenvectors.
/// Deterministic: each eigenvector's sign is fixed so its first nonzero
/// loading is positive.
pub fn pca_2d<T: Real>(points: &[T], dim: usize) -> Result<Vec<[T; 2]>> {
    let m = points.len() / dim;
    if m < 2 {
        return Err(Error::validation("PCA needs at least 2 points"));
    }
    // work in f64 regardless of input precision
    let mut centered = vec![0.0f64; m * dim];
    let mut mean = vec![0.0f64; dim];
    for r in 0..m {
        for c in 0..dim {
            mean[c] += points[r * dim + c].to_f64();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    for r in 0..m {
        for c in 0..dim {
            centered[r * dim + c] = points[r * dim + c].to_f64() - mean[c];
        }
    }

    let mut cov = vec![0.0f64; dim * dim];
    for r in 0..m {
        let row = &centered[r * dim..(r + 1) * dim];
        for i in 0..dim {
            for j in i..dim {
                cov[i * dim + j] += row[i] * row[j];
            }
        }
    }
    let norm = 1.0 / (m - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            cov[i * dim + j] *= norm;
            cov[j * dim + i] = cov[i * dim + j];
        }
    }

    let (eigvals, eigvecs) = jacobi_eigen(&mut cov, dim);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigvals[b].total_cmp(&eigvals[a]));
    let mut axes = [vec![0.0f64; dim], vec![0.0f64; dim]];
    for k in 0..2.min(dim) {
        let col = order[k];
        for i in 0..dim {
            axes[k][i] = eigvecs[i * dim + col];
        }
        if let Some(first) = axes[k].iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                axes[k].iter_mut().for_each(|v| *v = -*v);
            }
        }
    }

    let mut out = Vec::with_capacity(m);
    for r in 0..m {
        let row = &centered[r * dim..(r + 1) * dim];
        let x: f64 = row.iter().zip(&axes[0]).map(|(a, b)| a * b).sum();
        let y: f64 = row.iter().zip(&axes[1]).map(|(a, b)| a * b).sum();
        out.push([T::from_f64(x), T::from_f64(y)]);
    }
    Ok(out)
}

/// Cyclic Jacobi rotations for a symmetric matrix; returns eigenvalues and
/// the column-eigenvector matrix.
fn jacobi_eigen(a: &mut [f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-30 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigvals: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    (eigvals, v)
}

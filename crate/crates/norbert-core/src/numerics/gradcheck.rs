/// Central-difference gradient verification.
///
/// Compares `analytic[i]` against `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps`
/// per coordinate and returns the maximum relative error
/// `|a - n| / max(|a|, |n|, 1e-8)`. Meant to run in `f64`.
pub fn grad_check<F>(mut f: F, x: &[f64], analytic: &[f64], eps: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len());
    let mut xs = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..xs.len() {
        let orig = xs[i];
        xs[i] = orig + eps;
        let fp = f(&xs);
        xs[i] = orig - eps;
        let fm = f(&xs);
        xs[i] = orig;
        let numeric = (fp - fm) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cross_entropy, Rng};

    #[test]
    fn quadratic_is_exact() {
        // f(x) = 0.5 ||x||^2, grad = x; central differences are exact for
        // quadratics up to rounding.
        let mut rng = Rng::new(17);
        let x: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let grad = x.clone();
        let err = grad_check(
            |v| 0.5 * v.iter().map(|a| a * a).sum::<f64>(),
            &x,
            &grad,
            1e-5,
        );
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn cross_entropy_gradient_checks() {
        let mut rng = Rng::new(23);
        let logits: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
        let target = 4;
        let (_, analytic) = cross_entropy(&logits, target).unwrap();
        let err = grad_check(
            |v| cross_entropy(v, target).unwrap().0,
            &logits,
            &analytic,
            1e-6,
        );
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let x = vec![0.3, -1.2, 0.8];
        let mut grad = x.clone();
        grad[1] *= 1.5; // deliberately wrong
        let err = grad_check(
            |v| 0.5 * v.iter().map(|a| a * a).sum::<f64>(),
            &x,
            &grad,
            1e-5,
        );
        assert!(err > 1e-2, "checker failed to flag the bad gradient: {err}");
    }
}

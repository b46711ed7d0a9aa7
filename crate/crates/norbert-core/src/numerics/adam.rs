use super::Real;
use crate::error::{Error, Result};

/// Adam hyperparameters. `weight_decay` is decoupled: applied directly to the
/// parameters before the adaptive update, not mixed into the gradient.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment buffers, one pair per parameter tensor, plus the step
/// counter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(sizes: &[usize]) -> Self {
        AdamState {
            m: sizes.iter().map(|&s| vec![T::ZERO; s]).collect(),
            v: sizes.iter().map(|&s| vec![T::ZERO; s]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam step over a parameter list.
///
/// `params`, `grads` and `names` are parallel; `names` only feeds error
/// messages when a gradient is non-finite.
pub fn adam_step<T: Real>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    names: &[&str],
    state: &mut AdamState<T>,
    lr: f64,
    hp: &AdamHyper,
) -> Result<()> {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let b1 = T::from_f64(hp.beta1);
    let b2 = T::from_f64(hp.beta2);
    let one_minus_b1 = T::ONE - b1;
    let one_minus_b2 = T::ONE - b2;
    let corr1 = T::from_f64(1.0 - hp.beta1.powi(state.t as i32));
    let corr2 = T::from_f64(1.0 - hp.beta2.powi(state.t as i32));
    let eps = T::from_f64(hp.eps);
    let lr_t = T::from_f64(lr);
    let decay = T::from_f64(1.0 - lr * hp.weight_decay);

    for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if !g.iter().all(|x| x.is_finite()) {
            let name = names.get(idx).copied().unwrap_or("?");
            return Err(Error::numeric(format!(
                "non-finite gradient for parameter {name}"
            )));
        }
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + one_minus_b1 * gi;
            v[i] = b2 * v[i] + one_minus_b2 * gi * gi;
            let mhat = m[i] / corr1;
            let vhat = v[i] / corr2;
            p[i] = p[i] * decay - lr_t * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Linearly annealed learning rate: `base_lr * (1 - step/total_steps)`.
pub fn linear_lr(step: u64, total_steps: u64, base_lr: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::validation("total_steps must be positive"));
    }
    debug_assert!(step <= total_steps);
    Ok(base_lr * (1.0 - step as f64 / total_steps as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_scalar(p0: f64, g: f64, lr: f64, wd: f64) -> f64 {
        let mut p = [p0];
        let mut ps: Vec<&mut [f64]> = vec![&mut p];
        let gs = [g];
        let mut state = AdamState::new(&[1]);
        let hp = AdamHyper {
            weight_decay: wd,
            ..Default::default()
        };
        adam_step(&mut ps, &[&gs], &["p"], &mut state, lr, &hp).unwrap();
        p[0]
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // Bias correction makes mhat = g and vhat = g^2 on step one, so the
        // update is -lr * g/(|g| + eps) ~ -lr * sign(g).
        let lr = 0.001;
        let p = step_scalar(0.5, 3.7, lr, 0.0);
        assert!((p - (0.5 - lr)).abs() < 1e-8, "p {p}");
        let p = step_scalar(0.5, -0.02, lr, 0.0);
        assert!((p - (0.5 + lr)).abs() < 1e-6, "p {p}");
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let p = step_scalar(1.25, 0.0, 0.01, 0.0);
        assert_eq!(p, 1.25);
    }

    #[test]
    fn decoupled_decay_scales_params() {
        // g = 0, wd = 0.01, lr = 0.001: p <- p * (1 - 1e-5).
        let p = step_scalar(2.0, 0.0, 0.001, 0.01);
        assert!((p - 2.0 * (1.0 - 1e-5)).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_is_identity() {
        let p = step_scalar(0.7, 5.0, 0.0, 0.01);
        assert_eq!(p, 0.7);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = [0.0f32];
        let mut ps: Vec<&mut [f32]> = vec![&mut p];
        let gs = [f32::NAN];
        let mut state = AdamState::new(&[1]);
        let err = adam_step(
            &mut ps,
            &[&gs[..]],
            &["ffn.w1"],
            &mut state,
            0.001,
            &AdamHyper::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("ffn.w1"), "{err}");
    }

    #[test]
    fn linear_lr_endpoints_and_midpoint() {
        assert_eq!(linear_lr(0, 100, 0.001).unwrap(), 0.001);
        assert_eq!(linear_lr(100, 100, 0.001).unwrap(), 0.0);
        assert!((linear_lr(50, 100, 0.001).unwrap() - 0.0005).abs() < 1e-12);
        assert!(linear_lr(0, 0, 0.001).is_err());
    }
}

//! Adam with bias correction.

use thiserror::Error;

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdamError {
    #[error("gradient component {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("gradient has {got} components, optimizer expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Updates `params` in place. On error neither the state nor `params`
    /// is modified.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), AdamError> {
        if grad.len() != self.m.len() || params.len() != self.m.len() {
            return Err(AdamError::LengthMismatch {
                expected: self.m.len(),
                got: grad.len().min(params.len()),
            });
        }
        if let Some((index, &value)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(AdamError::NonFinite { index, value });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..grad.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Value-style Adam step: returns the next state and parameters.
pub fn adam_step(state: &AdamState, params: &[f64], grad: &[f64]) -> Result<(AdamState, Vec<f64>), AdamError> {
    let mut next = state.clone();
    let mut p = params.to_vec();
    next.update(&mut p, grad)?;
    Ok((next, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let s = AdamState::new(3, 0.01);
        let (next, p) = adam_step(&s, &[1.0, 1.0, 1.0], &[250.0, -3.0, 1e-3]).unwrap();
        // m_hat = g, v_hat = g^2 at t = 1, so the step is lr * g / (|g| + eps).
        assert!((p[0] - (1.0 - 0.01 * 250.0 / (250.0 + 1e-8))).abs() < 1e-15);
        assert!((p[1] - 1.01).abs() < 1e-9);
        assert!((p[2] - (1.0 - 0.01 * 1e-3 / (1e-3 + 1e-8))).abs() < 1e-15);
        assert_eq!(next.steps(), 1);
    }

    #[test]
    fn zero_gradient_from_fresh_state() {
        let s = AdamState::new(2, 0.1);
        let (next, p) = adam_step(&s, &[0.5, -2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, -2.0]);
        assert_eq!(next.first_moment(), &[0.0, 0.0]);
        // Moments decay geometrically under zero gradients.
        let (s1, _) = adam_step(&AdamState::new(1, 0.1), &[0.0], &[2.0]).unwrap();
        let (s2, _) = adam_step(&s1, &[0.0], &[0.0]).unwrap();
        assert!((s2.first_moment()[0] - 0.9 * s1.first_moment()[0]).abs() < 1e-15);
        assert!((s2.second_moment()[0] - 0.999 * s1.second_moment()[0]).abs() < 1e-15);
    }

    #[test]
    fn deterministic_and_rejects_nan() {
        let s = AdamState::new(2, 0.05);
        let a = adam_step(&s, &[0.1, 0.2], &[0.3, -0.4]).unwrap();
        let b = adam_step(&s, &[0.1, 0.2], &[0.3, -0.4]).unwrap();
        assert_eq!(a, b);

        let mut state = a.0.clone();
        let mut params = a.1.clone();
        let err = state.update(&mut params, &[f64::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, AdamError::NonFinite { index: 0, .. }));
        assert_eq!(state, a.0);
        assert_eq!(params, a.1);
    }

    #[test]
    fn second_moment_is_non_negative() {
        let mut s = AdamState::new(1, 0.01);
        let mut p = [0.0];
        for i in 0..50 {
            s.update(&mut p, &[(i as f64).sin() * 10.0]).unwrap();
            assert!(s.second_moment()[0] >= 0.0);
        }
    }
}

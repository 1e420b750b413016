//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::nn::NnError;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates, one tensor per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Number of completed steps.
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Increments `state.t` before use, so the
/// first call runs with `t = 1`.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len()
    {
        return Err(NnError::Shape(format!(
            "adam: {} parameter blocks, {} gradient blocks, {} moment blocks",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        NnError::check_same(&format!("adam block {i} grad"), p.shape(), g.shape())?;
        NnError::check_same(&format!("adam block {i} moment"), p.shape(), state.m[i].shape())?;
        NnError::check_same(&format!("adam block {i} moment"), p.shape(), state.v[i].shape())?;
    }

    state.t += 1;
    let t = state.t as i32;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = *config;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((w, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![Tensor::vector(vec![1.0, -2.0, 3.0])];
        let before = params.clone();
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &[Tensor::zeros(&[3])], &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::default();
        for g in [0.5, -3.0, 1e-2, 40.0] {
            let mut params = vec![Tensor::vector(vec![0.0])];
            let mut state = AdamState::new(&params);
            adam_step(&mut params, &[Tensor::vector(vec![g])], &mut state, &cfg).unwrap();
            // closed form at t = 1: lr · g / (|g| + ε)
            let expected = -cfg.lr * g / (g.abs() + cfg.epsilon);
            assert!((params[0].data()[0] - expected).abs() < 1e-18);
            assert!((params[0].data()[0].abs() - cfg.lr).abs() < 1e-8);
        }
    }

    #[test]
    fn two_steps_match_hand_trace() {
        let cfg = AdamConfig::default();
        let g = 0.25_f64;
        // hand trace
        let mut w = 1.0_f64;
        let (mut m, mut v) = (0.0_f64, 0.0_f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9_f64.powi(t));
            let v_hat = v / (1.0 - 0.999_f64.powi(t));
            w -= 1e-3 * m_hat / (v_hat.sqrt() + 1e-8);
        }
        let mut params = vec![Tensor::vector(vec![1.0])];
        let mut state = AdamState::new(&params);
        for _ in 0..2 {
            adam_step(&mut params, &[Tensor::vector(vec![g])], &mut state, &cfg).unwrap();
        }
        assert!((params[0].data()[0] - w).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let mut params = vec![Tensor::vector(vec![0.0, 0.0])];
        let mut state = AdamState::new(&params);
        assert!(adam_step(&mut params, &[Tensor::zeros(&[3])], &mut state, &AdamConfig::default()).is_err());
        assert!(adam_step(&mut params, &[], &mut state, &AdamConfig::default()).is_err());
    }
}

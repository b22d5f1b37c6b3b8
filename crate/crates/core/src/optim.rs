//! Adam with coupled L2 weight decay (the decay term is added to the
//! gradient before the moment updates, not applied to the weights directly).

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment buffers for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn for_param(param: &DenseMatrix) -> Self {
        Self::new(param.rows() * param.cols())
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }
}

/// One Adam update of `param` in place.
pub fn adam_step(param: &mut [f64], grad: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if param.len() != grad.len() || param.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "param {}, grad {}, state {}",
                param.len(),
                grad.len(),
                state.m.len()
            ),
        ));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("adam_step gradient"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g0), m), v) in param
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        let g = g0 + cfg.weight_decay * *p;
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// [`adam_step`] on a matrix parameter.
pub fn adam_step_matrix(
    param: &mut DenseMatrix,
    grad: &DenseMatrix,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    param.check_same_shape("adam_step", grad)?;
    adam_step(param.as_mut_slice(), grad.as_slice(), state, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lr_keeps_param_and_counts_step() {
        let mut p = vec![0.3, -1.2];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[1.0, 2.0], &mut s, &AdamConfig::new(0.0, 5e-4)).unwrap();
        assert_eq!(p, vec![0.3, -1.2]);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn first_step_by_hand() {
        // m = 0.1, v = 0.001; bias correction gives m̂ = v̂ = 1.
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, &AdamConfig::new(0.1, 0.0)).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] + 0.09999999900).abs() < 1e-11);
    }

    #[test]
    fn zero_grad_is_fixed_point() {
        let mut p = vec![0.7, -0.2, 3.0];
        let mut s = AdamState::new(3);
        for _ in 0..50 {
            adam_step(&mut p, &[0.0; 3], &mut s, &AdamConfig::new(0.1, 0.0)).unwrap();
        }
        assert_eq!(p, vec![0.7, -0.2, 3.0]);
    }

    #[test]
    fn coupled_decay_enters_moments() {
        // grad 0 with decay: the effective gradient is wd·p, so the first step is -lr·sign(p).
        let mut p = vec![2.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[0.0], &mut s, &AdamConfig::new(0.1, 0.5)).unwrap();
        assert!((p[0] - (2.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-12);
        assert!((s.first_moment()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonfinite_grad() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        assert!(adam_step(&mut p, &[f64::NAN], &mut s, &AdamConfig::default()).is_err());
        assert_eq!(s.step(), 0);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut p = vec![0.0; 2];
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut p, &[0.0], &mut s, &AdamConfig::default()).is_err());
    }
}

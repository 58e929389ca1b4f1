use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
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

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        // lr = 0 is allowed: it freezes parameters, which tests rely on.
        if !(self.lr >= 0.0) || !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("Adam lr/weight_decay must be >= 0 and eps > 0".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Weight decay is added to the gradient (L2).
pub fn adam_step(
    params: &mut ParamSet,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for (i, t) in params.tensors_mut().iter_mut().enumerate() {
        let g = &grads[i];
        if g.len() != t.len() {
            return Err(Error::Shape(format!("adam: gradient {i} has wrong length")));
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, p) in t.data_mut().iter_mut().enumerate() {
            let gj = g[j] + cfg.weight_decay * *p;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            *p -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorkit::Tensor;

    fn params() -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::row(vec![0.5, -1.0, 2.0]));
        ps
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = params();
        let before = ps.clone();
        let mut st = AdamState::new(&ps);
        for _ in 0..3 {
            adam_step(&mut ps, &[vec![0.0; 3]], &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(ps, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut ps = params();
        let mut st = AdamState::new(&ps);
        let cfg = AdamConfig::default();
        let g = vec![0.3, -4.0, 1e-3];
        adam_step(&mut ps, &[g.clone()], &mut st, &cfg).unwrap();
        // first step: m_hat = g, v_hat = g^2, update = -lr * g / (|g| + eps)
        for (j, (&p0, &p1)) in params().tensors()[0].data().iter().zip(ps.tensors()[0].data()).enumerate() {
            let expect = p0 - cfg.lr * g[j] / (g[j].abs() + cfg.eps);
            assert!((p1 - expect).abs() < 1e-15);
            assert!(((p1 - p0).abs() - cfg.lr).abs() < 1e-7);
        }
    }

    #[test]
    fn deterministic() {
        let mut a = params();
        let mut b = params();
        let mut sa = AdamState::new(&a);
        let mut sb = AdamState::new(&b);
        let g = vec![0.1, 0.2, -0.3];
        for _ in 0..2 {
            adam_step(&mut a, &[g.clone()], &mut sa, &AdamConfig::default()).unwrap();
            adam_step(&mut b, &[g.clone()], &mut sb, &AdamConfig::default()).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig { beta1: 1.0, ..AdamConfig::default() }.validate().is_err());
        assert!(AdamConfig { lr: -1.0, ..AdamConfig::default() }.validate().is_err());
    }
}

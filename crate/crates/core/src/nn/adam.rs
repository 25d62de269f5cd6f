use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

/// One bias-corrected ADAM update of `params` along `grads`.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::Shape(format!(
                "adam: parameter {:?} vs gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signed_learning_rate() {
        let cfg = AdamConfig::default();
        let mut p = Tensor::new(vec![4], vec![1.0, -1.0, 0.5, 2.0]).unwrap();
        let before = p.clone();
        let g = Tensor::new(vec![4], vec![0.3, -7.0, 1e-2, -1e-3]).unwrap();
        let mut st = AdamState::new([&p]);
        adam_step(&mut [&mut p], std::slice::from_ref(&g), &mut st, &cfg).unwrap();
        for ((a, b), gv) in p.data().iter().zip(before.data()).zip(g.data()) {
            // hand computation: m_hat = g, v_hat = g^2
            let want = -cfg.learning_rate * gv / (gv.abs() + cfg.epsilon);
            assert!((a - b - want).abs() < 1e-15);
            assert!((a - b + cfg.learning_rate * gv.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[Tensor::zeros(&[3])], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn decreases_convex_quadratic() {
        // f(x) = (x - 3)^2
        let f = |x: f64| (x - 3.0).powi(2);
        let cfg = AdamConfig { learning_rate: 0.1, ..Default::default() };
        let mut p = Tensor::new(vec![1], vec![0.0]).unwrap();
        let mut st = AdamState::new([&p]);
        let mut last = f(0.0);
        for _ in 0..2 {
            let g = Tensor::new(vec![1], vec![2.0 * (p.data()[0] - 3.0)]).unwrap();
            adam_step(&mut [&mut p], &[g], &mut st, &cfg).unwrap();
            let now = f(p.data()[0]);
            assert!(now < last);
            last = now;
        }
        assert!(adam_step(&mut [&mut p], &[Tensor::zeros(&[2])], &mut st, &cfg).is_err());
    }
}

//! Adam with bias correction, operating over the model's flat parameter
//! tensor list.

use serde::{Deserialize, Serialize};

use crate::tensor::Scalar;
use crate::Error;

use super::Parameters;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Optimizer state: first/second moment per parameter tensor plus the step
/// counter.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(params: &Parameters<F>, config: AdamConfig) -> Self {
        let m = params.tensors().iter().map(|t| vec![F::zero(); t.len()]).collect();
        let v = params.tensors().iter().map(|t| vec![F::zero(); t.len()]).collect();
        Self {
            config,
            step: 0,
            m,
            v,
        }
    }

    /// One update step in place. Gradients must be shaped like the
    /// parameters.
    pub fn step(&mut self, params: &mut Parameters<F>, grads: &Parameters<F>) -> Result<(), Error> {
        let grad_tensors = grads.tensors();
        let mut param_tensors = params.tensors_mut();
        if grad_tensors.len() != self.m.len()
            || grad_tensors
                .iter()
                .zip(&param_tensors)
                .any(|(g, p)| g.len() != p.len())
        {
            return Err(Error::ShapeMismatch(
                "gradient tensors do not match parameters".into(),
            ));
        }
        self.step += 1;
        let b1 = F::from_f64(self.config.beta1);
        let b2 = F::from_f64(self.config.beta2);
        let one = F::one();
        let lr = F::from_f64(self.config.lr);
        let eps = F::from_f64(self.config.eps);
        let bc1 = F::from_f64(1.0 - self.config.beta1.powi(self.step as i32));
        let bc2 = F::from_f64(1.0 - self.config.beta2.powi(self.step as i32));
        for (ti, g) in grad_tensors.iter().enumerate() {
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            let p = &mut param_tensors[ti];
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

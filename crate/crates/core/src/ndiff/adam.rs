use serde::{Deserialize, Serialize};

use super::{Parameter, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
    /// Coupled (L2) decay: added to the gradient before the moment updates.
    pub weight_decay: Real,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment buffers for a fixed, ordered list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<Real>>,
    v: Vec<Vec<Real>>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Parameter>) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (vec![0.0; p.len()], vec![0.0; p.len()]))
            .unzip();
        Self {
            config,
            step: 0,
            m,
            v,
        }
    }

    /// Applies one update from the gradients stored in each parameter, then
    /// zeroes those gradients. `params` must be in construction order.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Parameter>) {
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
            weight_decay: wd,
        } = self.config;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        for (i, p) in params.into_iter().enumerate() {
            if p.trainable {
                let m = &mut self.m[i];
                let v = &mut self.v[i];
                assert_eq!(m.len(), p.len(), "parameter {} changed shape", p.name);
                let tensor = &mut p.tensor;
                for (((theta, &g0), mi), vi) in tensor
                    .value
                    .data_mut()
                    .iter_mut()
                    .zip(tensor.grad.data())
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    let g = g0 + wd * *theta;
                    *mi = b1 * *mi + (1.0 - b1) * g;
                    *vi = b2 * *vi + (1.0 - b2) * g * g;
                    let m_hat = *mi / bc1;
                    let v_hat = *vi / bc2;
                    *theta -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            p.tensor.zero_grad();
        }
    }
}

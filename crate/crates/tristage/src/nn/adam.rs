//! Adam optimizer over flat parameter views.

use serde::{Deserialize, Serialize};

use super::layers::ParamView;

/// Adam with bias correction. States are keyed by the position of each
/// parameter tensor in the `step` call, so callers must pass parameters in a
/// stable order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    states: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            states: Vec::new(),
        }
    }

    pub fn step(&mut self, mut params: Vec<ParamView<'_>>) {
        if self.states.is_empty() {
            self.states = params
                .iter()
                .map(|p| (vec![0.0; p.value.len()], vec![0.0; p.value.len()]))
                .collect();
        }
        assert_eq!(
            self.states.len(),
            params.len(),
            "parameter count changed between steps"
        );
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (state, p) in self.states.iter_mut().zip(params.iter_mut()) {
            let (m, v) = state;
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p.value[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

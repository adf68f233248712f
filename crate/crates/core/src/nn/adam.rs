use serde::{Deserialize, Serialize};

use super::{flatten, Params};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer over a flattened parameter container.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step<P: Params + ?Sized>(&mut self, params: &mut P, grads: &P) {
        let g = flatten(grads);
        if self.m.len() != g.len() {
            self.m = vec![0.0; g.len()];
            self.v = vec![0.0; g.len()];
            self.t = 0;
        }
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.t);
        let bias2 = 1.0 - beta2.powi(self.t);
        for ((m, v), &gi) in self.m.iter_mut().zip(self.v.iter_mut()).zip(&g) {
            *m = beta1 * *m + (1.0 - beta1) * gi;
            *v = beta2 * *v + (1.0 - beta2) * gi * gi;
        }
        let mut offset = 0;
        let (m, v) = (&self.m, &self.v);
        params.for_each_mut(&mut |_, data| {
            for (j, x) in data.iter_mut().enumerate() {
                let m_hat = m[offset + j] / bias1;
                let v_hat = v[offset + j] / bias2;
                *x -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
            offset += data.len();
        });
    }
}

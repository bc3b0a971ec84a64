use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::ParameterStore;
use crate::numerics::Tensor;

/// Adam with a Nesterov look-ahead on the first moment:
///
/// ```text
/// m = b1 m + (1 - b1) g            v = b2 v + (1 - b2) g^2
/// m_hat = b1 m / (1 - b1^(t+1)) + (1 - b1) g / (1 - b1^t)
/// v_hat = v / (1 - b2^t)
/// theta -= lr m_hat / (sqrt(v_hat) + eps)
/// ```
#[derive(Clone, Debug)]
pub struct Nadam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Nadam {
    pub fn new(lr: f64) -> Self {
        Nadam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, moments: BTreeMap::new() }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParameterStore, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, p) in params.iter() {
            let g = grads.get(name).ok_or_else(|| Error::invalid(format!("no gradient for {name}")))?;
            if g.shape() != p.shape() {
                return Err(Error::Shape { op: "nadam", shapes: vec![p.shape().to_vec(), g.shape().to_vec()] });
            }
        }
        self.step += 1;
        let t = self.step;
        let (b1, b2) = (self.beta1, self.beta2);
        let m_next = 1.0 - b1.powi(t + 1);
        let m_now = 1.0 - b1.powi(t);
        let v_corr = 1.0 - b2.powi(t);
        for (name, p) in params.iter_mut() {
            let g = grads[name].data();
            let (m, v) = self.moments.entry(name.clone()).or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            for (i, theta) in p.data_mut().iter_mut().enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = b1 * m[i] / m_next + (1.0 - b1) * g[i] / m_now;
                let v_hat = v[i] / v_corr;
                *theta -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

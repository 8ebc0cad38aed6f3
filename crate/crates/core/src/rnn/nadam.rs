use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NadamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with a Nesterov look-ahead on the first moment:
///
/// ```text
/// m  = b1 m + (1 - b1) g            v  = b2 v + (1 - b2) g^2
/// m^ = m / (1 - b1^t)               v^ = v / (1 - b2^t)
/// p -= lr (b1 m^ + (1 - b1) g / (1 - b1^t)) / (sqrt(v^) + eps)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Nadam<T> {
    pub config: NadamConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    /// Number of updates applied so far.
    pub t: u64,
}

impl<T: Scalar> Nadam<T> {
    pub fn new(config: NadamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    /// Apply one update. Rejects non-finite gradients without touching the
    /// parameters or moments.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::shape("nadam parameters", self.m.len(), params.len()));
        }
        if grads.len() != params.len() {
            return Err(Error::shape("nadam gradients", params.len(), grads.len()));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient {i} is {:?} at step {}",
                grads[i],
                self.t + 1
            )));
        }
        self.t += 1;
        let c = &self.config;
        let t = self.t as i32;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let lr = T::lit(c.learning_rate);
        let eps = T::lit(c.epsilon);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            let numer = b1 * m_hat + (one - b1) * g / bc1;
            *p -= lr * numer / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Scale `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [T], max_norm: T) -> T {
    let norm = grads.iter().map(|&g| g * g).sum::<T>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

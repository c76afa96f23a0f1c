use ndarray::{Array2, Zip};

use super::{Grads, ParamStore};
use crate::error::{Error, Result};

pub const BASE_LR: f64 = 1e-3;
pub const LR_DECAY: f64 = 0.5;
pub const LR_DECAY_EPOCHS: usize = 40;

/// `base * 0.5^floor(epoch / 40)`.
pub fn learning_rate(base: f64, epoch: usize) -> f64 {
    base * LR_DECAY.powi((epoch / LR_DECAY_EPOCHS) as i32)
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every trainable tensor.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads, lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Shape("optimizer state does not match the parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (id, g) in grads.iter().enumerate() {
            if !params.tensors()[id].trainable {
                continue;
            }
            let w = params.get_mut(id);
            if w.raw_dim() != g.raw_dim() {
                return Err(Error::Shape(format!("gradient {id} has the wrong shape")));
            }
            Zip::from(w)
                .and(&mut self.m[id])
                .and(&mut self.v[id])
                .and(g)
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(value: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.push("w".into(), vec![1], Array2::from_elem((1, 1), value), true);
        p.push("stat".into(), vec![1], Array2::from_elem((1, 1), 3.0), false);
        p
    }

    #[test]
    fn schedule() {
        assert_eq!(learning_rate(BASE_LR, 0), 1e-3);
        assert_eq!(learning_rate(BASE_LR, 39), 1e-3);
        assert_eq!(learning_rate(BASE_LR, 40), 5e-4);
        assert_eq!(learning_rate(BASE_LR, 80), 2.5e-4);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = scalar(0.7);
        let mut a = Adam::new(&p);
        for _ in 0..5 {
            let z = p.zeros_like();
            a.step(&mut p, &z, 1e-3).unwrap();
        }
        assert_eq!(p.get(0)[[0, 0]], 0.7);
    }

    #[test]
    fn first_step_formula() {
        let mut p = scalar(0.0);
        let mut a = Adam::new(&p);
        let mut g = p.zeros_like();
        g[0].fill(1.0);
        g[1].fill(1.0);
        a.step(&mut p, &g, 1e-3).unwrap();
        // m_hat = 1, v_hat = 1
        let want = -1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p.get(0)[[0, 0]] - want).abs() < 1e-18);
        assert_eq!(p.get(1)[[0, 0]], 3.0);

        // second step, formula evaluated directly
        a.step(&mut p, &g, 1e-3).unwrap();
        let m: f64 = 0.9 * 0.1 + 0.1;
        let v: f64 = 0.999 * 0.001 + 0.001;
        let upd = 1e-3 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert!((p.get(0)[[0, 0]] - (want - upd)).abs() < 1e-15);
    }
}

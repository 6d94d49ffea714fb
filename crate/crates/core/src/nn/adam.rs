//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::model::Parameters;
use super::tensor::{Scalar, Tensor};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Parameters<T>,
    pub v: Parameters<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Parameters<T>, config: AdamConfig) -> Self {
        let zeros = || {
            Parameters::from_tensors(params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect())
                .expect("same arity")
        };
        AdamState {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One update: `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`,
    /// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut Parameters<T>, grads: &Parameters<T>) -> Result<(), NnError> {
        for (p, g) in params.tensors().iter().zip(grads.tensors()) {
            if p.shape() != g.shape() {
                return Err(NnError::Shape {
                    op: "adam",
                    detail: format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape()),
                });
            }
        }
        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of_f64(c.beta1), T::of_f64(c.beta2));
        let (one_b1, one_b2) = (T::of_f64(1.0 - c.beta1), T::of_f64(1.0 - c.beta2));
        let lr = T::of_f64(c.lr);
        let eps = T::of_f64(c.eps);
        let (inv_bc1, inv_bc2) = (T::of_f64(1.0 / bc1), T::of_f64(1.0 / bc2));

        let params = params.tensors_mut();
        let m = self.m.tensors_mut();
        let v = self.v.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(grads.tensors()).zip(m).zip(v) {
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i];
                md[i] = b1 * md[i] + one_b1 * gi;
                vd[i] = b2 * vd[i] + one_b2 * gi * gi;
                let m_hat = md[i] * inv_bc1;
                let v_hat = vd[i] * inv_bc2;
                pd[i] = pd[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{init_params, ModelConfig};

    fn setup() -> (Parameters<f64>, Parameters<f64>) {
        let c = ModelConfig::new(12, 16);
        let p = init_params(&c, 3).unwrap();
        let g = Parameters::zeros(&c).unwrap();
        (p, g)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut p, mut g) = setup();
        for t in g.tensors_mut() {
            t.fill(0.37);
        }
        let before = p.clone();
        let mut s = AdamState::new(&p, AdamConfig::default());
        s.step(&mut p, &g).unwrap();
        assert_eq!(s.t, 1);
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let expect = 1e-3 * 0.37 / (0.37 + 1e-8);
        for (a, b) in p.tensors().iter().zip(before.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!(((y - x) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let (mut p, g) = setup();
        let before = p.clone();
        let mut s = AdamState::new(&p, AdamConfig::default());
        s.step(&mut p, &g).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn deterministic() {
        let (p0, mut g) = setup();
        for (i, t) in g.tensors_mut().into_iter().enumerate() {
            t.fill(0.01 * i as f64 - 0.03);
        }
        let run = || {
            let mut p = p0.clone();
            let mut s = AdamState::new(&p, AdamConfig::default());
            s.step(&mut p, &g).unwrap();
            s.step(&mut p, &g).unwrap();
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch() {
        let (mut p, _) = setup();
        let other = Parameters::zeros(&ModelConfig::new(13, 16)).unwrap();
        let mut s = AdamState::new(&p, AdamConfig::default());
        assert!(s.step(&mut p, &other).is_err());
    }
}

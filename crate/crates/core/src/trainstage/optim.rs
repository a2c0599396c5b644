use crate::model::Moments;
use crate::numerics::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias correction. Moments are kept for every parameter; frozen
/// ones simply never receive a gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn from_moments(lr: f64, moments: Moments) -> Self {
        Self {
            lr,
            step: moments.step,
            m: moments.m,
            v: moments.v,
        }
    }

    pub fn moments(&self) -> Moments {
        Moments {
            step: self.step,
            m: self.m.clone(),
            v: self.v.clone(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Updates each parameter that has a gradient; `None` entries are left untouched.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Option<Tensor>]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let (p, m, v) = (params[i].data_mut(), self.m[i].data_mut(), self.v[i].data_mut());
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= self.lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}

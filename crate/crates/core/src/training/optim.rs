//! Adam with a step-decay learning-rate schedule.

use std::collections::BTreeMap;

use crate::autodiff::{GradTable, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// `base · decay^floor(epoch / every)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub every: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 1e-4,
            decay: 0.1,
            every: 30,
        }
    }
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        let stages = (epoch / self.every.max(1)) as i32;
        if self.decay == 0.1 {
            // Divide by exact powers of ten so 1e-4 steps to 1e-5, 1e-6, ...
            self.base / 10f64.powi(stages)
        } else {
            self.base * self.decay.powi(stages)
        }
    }
}

/// Learning rate of the default schedule.
pub fn lr_at_epoch(epoch: usize) -> f64 {
    LrSchedule::default().at(epoch)
}

/// Bias-corrected Adam. Moments are kept per trainable parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<F> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first: BTreeMap<String, Tensor<F>>,
    pub second: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(store: &ParamStore<F>) -> Self {
        let zeros: BTreeMap<String, Tensor<F>> = store
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(n, p)| (n.to_string(), Tensor::zeros(p.value.shape())))
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Applies one update with learning rate `lr`. Nothing is modified when
    /// any gradient is non-finite or the table does not match the moments.
    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &GradTable<F>, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        if grads.len() != self.first.len() {
            return Err(Error::Config(format!(
                "gradient table has {} entries, optimizer tracks {}",
                grads.len(),
                self.first.len()
            )));
        }
        for (name, g) in grads.iter() {
            let m = self
                .first
                .get(name)
                .ok_or_else(|| Error::Config(format!("no optimizer state for {name}")))?;
            if m.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "adam",
                    lhs: m.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.to_string()));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (F::from_f64_lossy(self.beta1), F::from_f64_lossy(self.beta2));
        let c1 = F::from_f64_lossy(1.0 - self.beta1.powi(t));
        let c2 = F::from_f64_lossy(1.0 - self.beta2.powi(t));
        let (lr, eps) = (F::from_f64_lossy(lr), F::from_f64_lossy(self.eps));
        let one = F::one();
        for (name, g) in grads.iter() {
            let m = self.first.get_mut(name).expect("checked");
            let v = self.second.get_mut(name).expect("checked");
            let p = store.get_mut(name).expect("optimizer state matches the store");
            for (((p, m), v), &g) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

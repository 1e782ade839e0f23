//! Adam optimizer with bias correction.

use super::tensor::ParamStore;
use crate::error::{Error, Result};

/// Per-parameter first/second moment buffers plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f32) -> Self {
        let m = store.ids().map(|id| vec![0.0; store.get(id).numel()]).collect();
        let v = store.ids().map(|id| vec![0.0; store.get(id).numel()]).collect();
        AdamState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m, v }
    }

    pub fn moments(&self, index: usize) -> (&[f32], &[f32]) {
        (&self.m[index], &self.v[index])
    }

    pub fn set_moments(&mut self, index: usize, m: Vec<f32>, v: Vec<f32>) -> Result<()> {
        if m.len() != self.m[index].len() || v.len() != self.v[index].len() {
            return Err(Error::InvalidArg("moment buffer length mismatch".into()));
        }
        self.m[index] = m;
        self.v[index] = v;
        Ok(())
    }

    /// One update over every registered parameter, then zero all gradients.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::InvalidArg(format!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, id) in store.ids().enumerate() {
            let name = store.name(id).to_string();
            let t = store.get_mut(id);
            let grad = t.grad.as_ref().ok_or(Error::MissingGrad { name })?;
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                t.data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            t.assert_finite("adam_step")?;
            t.zero_grad();
        }
        Ok(())
    }
}

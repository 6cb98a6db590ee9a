//! Adam on flat parameter vectors.

use super::store::TensorStore;
use crate::error::{Error, Result};

/// Adam state for one flat parameter vector.
///
/// `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`. [`AdamState::step`]
/// minimizes, i.e. moves parameters against the gradient; pass negated
/// gradients to ascend.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "Adam holds {} accumulators but got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    pub fn save_into(&self, store: &mut TensorStore, prefix: &str) {
        store.insert_meta(format!("{prefix}.step"), self.step.to_string());
        store.insert_meta(format!("{prefix}.lr"), format!("{:.16e}", self.lr));
        store.insert_vec(format!("{prefix}.m"), &self.m);
        store.insert_vec(format!("{prefix}.v"), &self.v);
    }

    pub fn load_from(store: &TensorStore, prefix: &str) -> Result<Self> {
        let step: u64 = store
            .meta(&format!("{prefix}.step"))?
            .parse()
            .map_err(|_| Error::Parse("bad Adam step counter".into()))?;
        let lr: f64 = store
            .meta(&format!("{prefix}.lr"))?
            .parse()
            .map_err(|_| Error::Parse("bad Adam learning rate".into()))?;
        let m = store.get_vec(&format!("{prefix}.m"))?;
        let v = store.get_vec(&format!("{prefix}.v"))?;
        if m.len() != v.len() {
            return Err(Error::Checkpoint("Adam moment vectors disagree in length".into()));
        }
        Ok(Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step, m, v })
    }
}

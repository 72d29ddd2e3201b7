use crate::{ParamGrads, ParamStore, Result, Tensor, TensorError};

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    /// First moment per parameter.
    m: Vec<Tensor>,
    /// Second moment per parameter.
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros = |t: &Tensor| Tensor::new(t.shape().to_vec(), vec![0.0; t.len()]).expect("same shape");
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: store.iter().map(|(_, t)| zeros(t)).collect(),
            v: store.iter().map(|(_, t)| zeros(t)).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &Tensor {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &Tensor {
        &self.v[index]
    }

    /// One update of every parameter in `store`. Every parameter must have a
    /// gradient; nothing is modified otherwise.
    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads) -> Result<()> {
        for id in store.ids() {
            let g = grads.get(id).ok_or_else(|| TensorError::MissingGradient(store.name(id).to_string()))?;
            if g.shape() != store.get(id).shape() {
                return Err(TensorError::ShapeMismatch { op: "adam_step", lhs: store.get(id).shape().to_vec(), rhs: g.shape().to_vec() });
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powf(self.step as f64);
        let bc2 = 1.0 - self.beta2.powf(self.step as f64);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let g = grads.get(id).expect("checked above").data();
            let i = id.index();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = store.get_mut(id).data_mut();
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

//! Adam with bias correction.

use crate::numerics::{ParamStore, Real, Tensor};

#[derive(Clone, Debug)]
pub struct Adam<F: Real = f32> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Real> Default for Adam<F> {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl<F: Real> Adam<F> {
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Moments, one pair per parameter in store order.
    pub fn moments(&self) -> (&[Tensor<F>], &[Tensor<F>]) {
        (&self.m, &self.v)
    }

    /// One update from the gradients held in `store`; gradients are left
    /// in place.
    pub fn step(&mut self, store: &mut ParamStore<F>, lr: f64) {
        if self.m.len() != store.len() {
            self.m = store.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let (b1f, b2f) = (F::cast(b1), F::cast(b2));
        let (one_b1, one_b2) = (F::cast(1.0 - b1), F::cast(1.0 - b2));
        let step_size = F::cast(lr / c1);
        let inv_c2 = F::cast(1.0 / c2);
        let eps = F::cast(self.eps);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad().data().to_vec();
            let values = p.value.data_mut();
            for (((w, g), m), v) in values.iter_mut().zip(&grad).zip(m.data_mut()).zip(v.data_mut()) {
                *m = b1f * *m + one_b1 * *g;
                *v = b2f * *v + one_b2 * *g * *g;
                *w = *w - step_size * *m / ((*v * inv_c2).sqrt() + eps);
            }
        }
    }
}

//! AdamW with decoupled weight decay on weight matrices.

use super::params::FusionParams;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: FusionParams,
    v: FusionParams,
}

impl AdamState {
    pub fn new(params: &FusionParams) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    /// One update of `params` with gradient `grad`.
    pub fn step(&mut self, params: &mut FusionParams, grad: &FusionParams, lr: f64, weight_decay: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let tensors = params.tensors_mut().into_iter().zip(grad.tensors()).zip(self.m.tensors_mut()).zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            let decay = if p.is_matrix { weight_decay } else { 0.0 };
            for (((x, &gx), mx), vx) in p.values.iter_mut().zip(g.values).zip(m.values.iter_mut()).zip(v.values.iter_mut()) {
                *mx = b1 * *mx + (1.0 - b1) * gx;
                *vx = b2 * *vx + (1.0 - b2) * gx * gx;
                let mhat = *mx / bc1;
                let vhat = *vx / bc2;
                *x -= lr * (mhat / (vhat.sqrt() + eps) + decay * *x);
            }
        }
    }
}

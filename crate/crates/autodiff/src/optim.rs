//! AdamW with decoupled weight decay.

use crate::params::ParamStore;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            weight_decay: 1e-5,
        }
    }
}

/// Per-parameter moments plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamW<T: Scalar = f32> {
    pub config: AdamWConfig,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig, params: &ParamStore<T>) -> Self {
        let zeros = |_: crate::params::ParamId| vec![T::zero(); 0];
        let mut s = Self {
            config,
            first: params.ids().map(zeros).collect(),
            second: params.ids().map(zeros).collect(),
            step: 0,
        };
        for id in params.ids() {
            let n = params.get(id).numel();
            s.first[id.0] = vec![T::zero(); n];
            s.second[id.0] = vec![T::zero(); n];
        }
        s
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update with learning rate `lr`. Parameters whose gradient is `None`
    /// are left untouched (no decay either).
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Option<Vec<T>>], lr: f64) {
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.step as i32));
        let (lr_t, wd, eps) = (T::of(lr), T::of(c.weight_decay), T::of(c.eps));
        for id in params.ids().collect::<Vec<_>>() {
            let Some(g) = grads.get(id.0).and_then(Option::as_ref) else {
                continue;
            };
            let p = params.get_mut(id).data_mut();
            let (m, v) = (&mut self.first[id.0], &mut self.second[id.0]);
            debug_assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr_t * (mhat / (vhat.sqrt() + eps) + wd * p[i]);
            }
        }
    }
}

/// Global L2 norm of every present gradient.
pub fn grad_norm<T: Scalar>(grads: &[Option<Vec<T>>]) -> f64 {
    grads
        .iter()
        .flatten()
        .flat_map(|g| g.iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt()
}

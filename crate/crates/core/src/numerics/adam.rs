use crate::numerics::{ParamGrads, ParamStore, Scalar};

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros = |id| vec![T::zero(); store.get(id).len()];
        AdamState {
            m: store.ids().map(zeros).collect(),
            v: store.ids().map(zeros).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// Bias-corrected Adam update. Parameters without a gradient buffer are
/// treated as having zero gradient.
pub fn adam_step<T: Scalar>(
    store: &mut ParamStore<T>,
    grads: &ParamGrads<T>,
    state: &mut AdamState<T>,
    config: &AdamConfig,
) {
    state.step += 1;
    let t = state.step as f64;
    let b1 = T::of(config.beta1);
    let b2 = T::of(config.beta2);
    let one = T::one();
    let correction1 = T::of(1.0 - config.beta1.powf(t));
    let correction2 = T::of(1.0 - config.beta2.powf(t));
    let lr = T::of(config.lr);
    let eps = T::of(config.eps);

    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let m = &mut state.m[id.index()];
        let v = &mut state.v[id.index()];
        let values = store.get_mut(id).data_mut();
        let grad = grads.get(id);
        for j in 0..values.len() {
            let g = grad.map_or(T::zero(), |g| g[j]);
            m[j] = b1 * m[j] + (one - b1) * g;
            v[j] = b2 * v[j] + (one - b2) * g * g;
            let m_hat = m[j] / correction1;
            let v_hat = v[j] / correction2;
            values[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

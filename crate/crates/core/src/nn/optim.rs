use crate::error::{Error, Result};
use crate::nn::matrix::Scalar;
use crate::nn::store::ParamStore;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam step over every unfrozen parameter.
///
/// Every parameter must have a populated gradient buffer; frozen tensors are
/// left untouched. Increments the store's step counter.
pub fn adam_update<T: Scalar>(store: &mut ParamStore<T>, hyper: &AdamHyper) -> Result<()> {
    for (name, p) in store.iter() {
        if p.grad.is_none() {
            return Err(Error::State(format!("gradient of '{name}' is uninitialized")));
        }
    }
    let t = store.bump_step();
    let bias1 = 1.0 - hyper.beta1.powi(t as i32);
    let bias2 = 1.0 - hyper.beta2.powi(t as i32);
    let b1 = T::from_f64(hyper.beta1);
    let b2 = T::from_f64(hyper.beta2);
    let one_minus_b1 = T::from_f64(1.0 - hyper.beta1);
    let one_minus_b2 = T::from_f64(1.0 - hyper.beta2);
    let lr = T::from_f64(hyper.lr);
    let eps = T::from_f64(hyper.eps);
    let inv_bias1 = T::from_f64(1.0 / bias1);
    let inv_bias2 = T::from_f64(1.0 / bias2);

    for (_, p) in store.iter_mut() {
        if p.frozen {
            continue;
        }
        let grad = p.grad.as_ref().expect("checked above").as_slice();
        let m = p.adam_m.as_mut_slice();
        let v = p.adam_v.as_mut_slice();
        let w = p.value.as_mut_slice();
        for i in 0..w.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + one_minus_b1 * g;
            v[i] = b2 * v[i] + one_minus_b2 * g * g;
            let m_hat = m[i] * inv_bias1;
            let v_hat = v[i] * inv_bias2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescale all gradients so their global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm. Idempotent.
pub fn clip_gradients<T: Scalar>(store: &mut ParamStore<T>, max_norm: f64) -> Result<f64> {
    let mut norm_sq = 0.0f64;
    for (name, p) in store.iter() {
        let g = p
            .grad
            .as_ref()
            .ok_or_else(|| Error::State(format!("gradient of '{name}' is uninitialized")))?;
        norm_sq += g.l2_norm_sq().to_f64();
    }
    let norm = norm_sq.sqrt();
    if norm > max_norm {
        let factor = T::from_f64(max_norm / norm);
        for (_, p) in store.iter_mut() {
            p.grad.as_mut().expect("checked above").scale(factor);
        }
    }
    Ok(norm)
}

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::nn::store::ParamStore;

/// Central-difference check of analytic gradients, in f64.
///
/// `loss_and_grad` must zero the store's gradients, run its forward and
/// backward pass, and return the (deterministic) loss. Up to `max_coords`
/// coordinates are checked; when the store is small enough every coordinate
/// is visited. Returns the maximum relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<F>(
    store: &mut ParamStore<f64>,
    eps: f64,
    max_coords: usize,
    seed: u64,
    mut loss_and_grad: F,
) -> Result<f64>
where
    F: FnMut(&mut ParamStore<f64>) -> Result<f64>,
{
    let base_loss = loss_and_grad(store)?;
    if !base_loss.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite: {base_loss}")));
    }

    let analytic: BTreeMap<String, Vec<f64>> = store
        .iter()
        .filter(|(_, p)| !p.frozen)
        .map(|(name, p)| {
            let g = p
                .grad
                .as_ref()
                .ok_or_else(|| Error::State(format!("gradient of '{name}' is uninitialized")))?;
            Ok((name.clone(), g.as_slice().to_vec()))
        })
        .collect::<Result<_>>()?;

    let mut coords: Vec<(String, usize)> = Vec::new();
    for (name, g) in &analytic {
        for idx in 0..g.len() {
            coords.push((name.clone(), idx));
        }
    }
    if coords.len() > max_coords {
        // Deterministic partial Fisher-Yates draw of max_coords coordinates.
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for i in 0..max_coords {
            let j = rng.gen_range(i..coords.len());
            coords.swap(i, j);
        }
        coords.truncate(max_coords);
    }

    let mut max_rel = 0.0f64;
    for (name, idx) in coords {
        let original = store.value(&name)?.as_slice()[idx];
        store.value_mut(&name)?.as_mut_slice()[idx] = original + eps;
        let loss_plus = loss_and_grad(store)?;
        store.value_mut(&name)?.as_mut_slice()[idx] = original - eps;
        let loss_minus = loss_and_grad(store)?;
        store.value_mut(&name)?.as_mut_slice()[idx] = original;
        if !loss_plus.is_finite() || !loss_minus.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss while perturbing '{name}'[{idx}]"
            )));
        }
        let numeric = (loss_plus - loss_minus) / (2.0 * eps);
        let a = analytic[&name][idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::{loss_multilabel, multilabel_grad_logits, sigmoid};
    use crate::nn::mlp::{Activation, MlpSpec};

    #[test]
    fn linear_loss_is_exact() {
        let mut store = ParamStore::<f64>::new();
        store.insert_uniform("w", 4, 3, 17);
        let err = finite_diff_check(&mut store, 1e-5, 1000, 0, |s| {
            s.zero_grads();
            let sum: f64 = s.value("w")?.as_slice().iter().sum();
            s.grad_mut("w")?.fill(1.0);
            Ok(sum)
        })
        .unwrap();
        assert!(err < 1e-9, "linear loss rel err {err}");
    }

    #[test]
    fn mlp_with_multilabel_loss_checks_out() {
        let spec = MlpSpec::new("m", vec![6, 8, 5], Activation::Tanh, Activation::Linear);
        let mut store = ParamStore::<f64>::new();
        spec.init(&mut store, 7);
        let x = [0.3, -0.4, 0.8, 0.1, -0.9, 0.5];
        let targets = [1.0, 0.0, 1.0, 0.0, 1.0];
        let err = finite_diff_check(&mut store, 1e-5, 2000, 1, |s| {
            s.zero_grads();
            let (logits, cache) = spec.forward_cached(s, &x)?;
            let scores: Vec<f64> = logits.iter().map(|v| sigmoid(*v)).collect();
            let loss = loss_multilabel(&scores, &targets)?;
            let mut d_logits = vec![0.0; scores.len()];
            multilabel_grad_logits(&scores, &targets, &mut d_logits);
            spec.backward_from_logits(s, &cache, &d_logits)?;
            Ok(loss)
        })
        .unwrap();
        assert!(err < 1e-4, "mlp rel err {err}");
    }

    #[test]
    fn frozen_tensors_are_skipped() {
        let mut store = ParamStore::<f64>::new();
        store.insert_uniform("w", 2, 2, 3);
        store.insert_uniform("fixed", 2, 2, 4);
        store.freeze("fixed").unwrap();
        // Loss only reads "w"; an unfrozen "fixed" would report garbage
        // analytic gradients, a frozen one is never sampled.
        let err = finite_diff_check(&mut store, 1e-5, 1000, 0, |s| {
            s.zero_grads();
            let sum: f64 = s.value("w")?.as_slice().iter().sum();
            s.grad_mut("w")?.fill(1.0);
            Ok(sum)
        })
        .unwrap();
        assert!(err < 1e-9);
    }
}

use crate::error::{Error, Result};
use crate::nn::matrix::Scalar;

/// Clamp applied before any logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

pub fn logsumexp<T: Scalar>(xs: &[T]) -> T {
    let mut m = xs[0];
    for x in &xs[1..] {
        if *x > m {
            m = *x;
        }
    }
    if !m.is_finite() {
        // All entries -inf: the sum is 0, its log -inf.
        return m;
    }
    let mut acc = T::ZERO;
    for x in xs {
        acc += (*x - m).exp();
    }
    m + acc.ln()
}

/// Softmax computed through log-sum-exp; sums to 1 within 1e-12 in f64.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let lse = logsumexp(logits);
    logits.iter().map(|x| (*x - lse).exp()).collect()
}

pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let lse = logsumexp(logits);
    logits.iter().map(|x| *x - lse).collect()
}

/// Mean binary cross-entropy of sigmoid scores against a multi-hot target.
pub fn loss_multilabel<T: Scalar>(scores: &[T], targets: &[T]) -> Result<T> {
    if scores.len() != targets.len() {
        return Err(Error::Shape(format!(
            "multilabel loss: {} scores vs {} targets",
            scores.len(),
            targets.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Shape("multilabel loss over zero attributes".into()));
    }
    let lo = T::from_f64(LOG_CLAMP);
    let hi = T::from_f64(1.0 - LOG_CLAMP);
    let mut acc = T::ZERO;
    for (s, t) in scores.iter().zip(targets.iter()) {
        let mut s = *s;
        if s < lo {
            s = lo;
        }
        if s > hi {
            s = hi;
        }
        acc += -(*t * s.ln() + (T::ONE - *t) * (T::ONE - s).ln());
    }
    Ok(acc / T::from_f64(scores.len() as f64))
}

/// Gradient of `loss_multilabel` with respect to the *pre-sigmoid* logits,
/// written into `dlogits`. Uses the standard simplification (s - t) / K.
pub fn multilabel_grad_logits<T: Scalar>(scores: &[T], targets: &[T], dlogits: &mut [T]) {
    let inv_k = T::from_f64(1.0 / scores.len() as f64);
    for ((d, s), t) in dlogits.iter_mut().zip(scores.iter()).zip(targets.iter()) {
        *d = (*s - *t) * inv_k;
    }
}

/// Negative log softmax probability of the target index, in log space.
pub fn loss_categorical<T: Scalar>(logits: &[T], target: usize) -> Result<T> {
    if logits.len() < 2 {
        return Err(Error::Shape("categorical loss needs at least 2 classes".into()));
    }
    if target >= logits.len() {
        return Err(Error::Index(format!(
            "categorical target {target} out of range for {} classes",
            logits.len()
        )));
    }
    Ok(logsumexp(logits) - logits[target])
}

/// Gradient of `loss_categorical` with respect to the logits: softmax - onehot.
pub fn categorical_grad_logits<T: Scalar>(logits: &[T], target: usize, dlogits: &mut [T]) {
    let probs = softmax(logits);
    for (d, p) in dlogits.iter_mut().zip(probs.iter()) {
        *d = *p;
    }
    dlogits[target] -= T::ONE;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multilabel_at_half_is_ln2() {
        let scores = [0.5f64; 4];
        let targets = [1.0, 0.0, 1.0, 0.0];
        let loss = loss_multilabel(&scores, &targets).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn multilabel_perfect_prediction_tends_to_zero() {
        let scores = [1.0f64, 0.0, 1.0];
        let targets = [1.0, 0.0, 1.0];
        let loss = loss_multilabel(&scores, &targets).unwrap();
        // Post-clamp: -ln(1 - 1e-12) per term, effectively zero.
        assert!(loss < 1e-9);
    }

    #[test]
    fn multilabel_matches_scalar_arithmetic() {
        let scores = [0.9f64, 0.2, 0.5];
        let targets = [1.0, 0.0, 1.0];
        let expected = -(0.9f64.ln() + 0.8f64.ln() + 0.5f64.ln()) / 3.0;
        let loss = loss_multilabel(&scores, &targets).unwrap();
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn multilabel_rejects_length_mismatch() {
        assert!(loss_multilabel(&[0.5f32], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn categorical_uniform_is_ln_v() {
        let logits = [0.7f64; 4];
        for target in 0..4 {
            let loss = loss_categorical(&logits, target).unwrap();
            assert!((loss - 4.0f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn categorical_confident_target_is_near_zero() {
        let logits = [0.0f64, 100.0, 0.0];
        assert!(loss_categorical(&logits, 1).unwrap() < 1e-12);
    }

    #[test]
    fn categorical_matches_scalar_arithmetic() {
        let logits = [1.0f64, 2.0, 0.5];
        let z = 1.0f64.exp() + 2.0f64.exp() + 0.5f64.exp();
        let expected = -(2.0f64.exp() / z).ln();
        let loss = loss_categorical(&logits, 1).unwrap();
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn categorical_rejects_bad_index() {
        assert!(matches!(
            loss_categorical(&[0.0f32, 1.0], 2),
            Err(crate::Error::Index(_))
        ));
    }

    #[test]
    fn softmax_sums_to_one() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..17).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let sum: f64 = softmax(&logits).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}

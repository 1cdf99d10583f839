//! Corpus-level BLEU and its rating-weighted variant over rated
//! multi-reference sets, bit-reproducible (f64, order-fixed reductions).
//!
//! Conventions, pinned here and mirrored by the brute-force test oracles:
//! - weighted precision numerator per distinct hypothesis n-gram g:
//!   `max over references containing g of w * min(#g(hyp), #g(ref))`,
//!   zero when g appears in no reference;
//! - denominator per g: `max over all references of w * #g(hyp)`;
//! - corpus numerators and denominators are clamped below at 1e-9 before the
//!   log (negative sums would otherwise be undefined);
//! - effective reference length counts, per hypothesis, the positively-rated
//!   reference closest in length (ties to the shorter). When a sample has no
//!   positive reference the closest reference overall is used and the sample
//!   is counted in `all_negative_eta_count`.
//!
//! With every weight at 1.0 and all corpus numerators positive, the weighted
//! metric coincides with plain BLEU.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp applied to corpus-level sums before the logarithm.
pub const CORPUS_CLAMP: f64 = 1e-9;

/// The admissible rating weights.
const ALLOWED_WEIGHTS: [f64; 3] = [1.0, 0.5, -0.5];

/// Corpus-level score with its per-n precisions and length bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    /// Total hypothesis length (rho).
    pub hyp_len: usize,
    /// Total effective reference length (eta).
    pub eff_ref_len: usize,
    pub score: f64,
    /// Samples whose reference set had no positive rating (weighted metric only).
    pub all_negative_eta_count: usize,
}

/// `1` if the hypotheses are longer than the effective reference length,
/// otherwise `exp(1 - eta/rho)`.
pub fn brevity_penalty(rho: usize, eta: usize) -> f64 {
    debug_assert!(rho >= 1 && eta >= 1);
    if rho > eta {
        1.0
    } else {
        (1.0 - eta as f64 / rho as f64).exp()
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts: BTreeMap<&[String], usize> = BTreeMap::new();
    if n <= tokens.len() {
        for w in tokens.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

fn closest_length(hyp_len: usize, lengths: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for len in lengths {
        best = Some(match best {
            None => len,
            Some(cur) => {
                let d_new = (len as isize - hyp_len as isize).abs();
                let d_cur = (cur as isize - hyp_len as isize).abs();
                if d_new < d_cur || (d_new == d_cur && len < cur) {
                    len
                } else {
                    cur
                }
            }
        });
    }
    best
}

fn validate_corpus<R>(hypotheses: &[Vec<String>], references: &[R], max_n: usize) -> Result<()> {
    if hypotheses.is_empty() {
        return Err(Error::Input("empty evaluation corpus".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Input(format!(
            "{} hypotheses vs {} reference sets",
            hypotheses.len(),
            references.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::Input("max_n must be at least 1".into()));
    }
    if hypotheses.iter().any(|h| h.is_empty()) {
        return Err(Error::Input("empty hypothesis".into()));
    }
    Ok(())
}

/// Standard corpus BLEU with clipped counts and equal n-gram weights.
/// If any corpus numerator is zero the score is zero.
pub fn bleu_corpus(
    hypotheses: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    max_n: usize,
) -> Result<CorpusScore> {
    validate_corpus(hypotheses, references, max_n)?;
    if references.iter().any(|r| r.is_empty()) {
        return Err(Error::Input("hypothesis without references".into()));
    }

    let mut numer = vec![0u64; max_n];
    let mut denom = vec![0u64; max_n];
    let mut rho = 0usize;
    let mut eta = 0usize;

    for (hyp, refs) in hypotheses.iter().zip(references.iter()) {
        rho += hyp.len();
        eta += closest_length(hyp.len(), refs.iter().map(|r| r.len())).expect("nonempty refs");
        for n in 1..=max_n {
            let hyp_counts = ngram_counts(hyp, n);
            let ref_counts: Vec<BTreeMap<&[String], usize>> =
                refs.iter().map(|r| ngram_counts(r, n)).collect();
            for (gram, count) in hyp_counts {
                let clip = ref_counts
                    .iter()
                    .map(|rc| rc.get(gram).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                numer[n - 1] += count.min(clip) as u64;
                denom[n - 1] += count as u64;
            }
        }
    }

    let precisions: Vec<f64> = (0..max_n)
        .map(|n| {
            if denom[n] == 0 {
                0.0
            } else {
                numer[n] as f64 / denom[n] as f64
            }
        })
        .collect();
    let bp = brevity_penalty(rho.max(1), eta.max(1));
    let score = if numer.iter().any(|v| *v == 0) {
        0.0
    } else {
        let mean_log: f64 = precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64;
        bp * mean_log.exp()
    };
    Ok(CorpusScore {
        precisions,
        brevity_penalty: bp,
        hyp_len: rho,
        eff_ref_len: eta,
        score,
        all_negative_eta_count: 0,
    })
}

/// Rating-weighted corpus BLEU over rated reference sets
/// `(tokens, weight in {1.0, 0.5, -0.5})`.
pub fn delta_bleu_corpus(
    hypotheses: &[Vec<String>],
    rated: &[Vec<(Vec<String>, f64)>],
    max_n: usize,
) -> Result<CorpusScore> {
    validate_corpus(hypotheses, rated, max_n)?;
    for set in rated {
        if set.is_empty() {
            return Err(Error::Input("hypothesis without rated references".into()));
        }
        for (_, w) in set {
            if !ALLOWED_WEIGHTS.iter().any(|a| a == w) {
                return Err(Error::Input(format!("rating weight {w} outside {{1.0, 0.5, -0.5}}")));
            }
        }
    }

    let mut numer = vec![0.0f64; max_n];
    let mut denom = vec![0.0f64; max_n];
    let mut rho = 0usize;
    let mut eta = 0usize;
    let mut all_negative = 0usize;

    for (hyp, refs) in hypotheses.iter().zip(rated.iter()) {
        rho += hyp.len();
        let positive_lengths: Vec<usize> = refs
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(r, _)| r.len())
            .collect();
        eta += match closest_length(hyp.len(), positive_lengths.iter().copied()) {
            Some(len) => len,
            None => {
                all_negative += 1;
                closest_length(hyp.len(), refs.iter().map(|(r, _)| r.len()))
                    .expect("nonempty refs")
            }
        };

        for n in 1..=max_n {
            let hyp_counts = ngram_counts(hyp, n);
            let ref_counts: Vec<(BTreeMap<&[String], usize>, f64)> =
                refs.iter().map(|(r, w)| (ngram_counts(r, n), *w)).collect();
            for (gram, count) in hyp_counts {
                // Numerator: best weighted clipped count among references
                // that actually contain the n-gram.
                let mut best: Option<f64> = None;
                for (rc, w) in &ref_counts {
                    if let Some(rcount) = rc.get(gram) {
                        let v = w * count.min(*rcount) as f64;
                        best = Some(match best {
                            None => v,
                            Some(cur) => cur.max(v),
                        });
                    }
                }
                numer[n - 1] += best.unwrap_or(0.0);
                // Denominator: max over all references of w * #g(hyp).
                let max_w = ref_counts
                    .iter()
                    .map(|(_, w)| *w)
                    .fold(f64::NEG_INFINITY, f64::max);
                denom[n - 1] += max_w * count as f64;
            }
        }
    }

    let precisions: Vec<f64> = (0..max_n)
        .map(|n| numer[n].max(CORPUS_CLAMP) / denom[n].max(CORPUS_CLAMP))
        .collect();
    let bp = brevity_penalty(rho.max(1), eta.max(1));
    let mean_log: f64 = precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64;
    let score = bp * mean_log.exp();
    Ok(CorpusScore {
        precisions,
        brevity_penalty: bp,
        hyp_len: rho,
        eff_ref_len: eta,
        score,
        all_negative_eta_count: all_negative,
    })
}

#[cfg(test)]
pub(crate) mod test_support {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Random rated corpus. Hypotheses are mutated copies of one reference so
    /// n-gram overlap at every order stays positive (sample 0 is an exact
    /// copy of a strong-positive reference of length >= max_n + 1).
    pub fn random_rated_corpus(
        seed: u64,
        weights: &[f64],
        force_negative: bool,
    ) -> (Vec<Vec<String>>, Vec<Vec<(Vec<String>, f64)>>) {
        let vocab = ["what", "color", "is", "the", "ball", "dog", "where", "how"];
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n_samples = rng.gen_range(5..=50);
        let mut hyps = Vec::new();
        let mut rated = Vec::new();
        for s in 0..n_samples {
            let n_refs = rng.gen_range(1..=6);
            let mut refs: Vec<(Vec<String>, f64)> = (0..n_refs)
                .map(|_| {
                    let len = rng.gen_range(5..=9);
                    let tokens: Vec<String> = (0..len)
                        .map(|_| vocab[rng.gen_range(0..vocab.len())].to_string())
                        .collect();
                    let w = if force_negative {
                        -0.5
                    } else {
                        weights[rng.gen_range(0..weights.len())]
                    };
                    (tokens, w)
                })
                .collect();
            let hyp = if s == 0 {
                refs[0].1 = if force_negative { -0.5 } else { 1.0 };
                refs[0].0.clone()
            } else {
                let mut h = refs[rng.gen_range(0..refs.len())].0.clone();
                // Mutate up to two positions.
                for _ in 0..rng.gen_range(0..3) {
                    let pos = rng.gen_range(0..h.len());
                    h[pos] = vocab[rng.gen_range(0..vocab.len())].to_string();
                }
                h
            };
            hyps.push(hyp);
            rated.push(refs);
        }
        (hyps, rated)
    }

    /// Naive weighted-precision scorer, written independently of the library
    /// path: vectors of n-grams, linear scans, no shared helpers.
    pub fn naive_delta_bleu(
        hyps: &[Vec<String>],
        rated: &[Vec<(Vec<String>, f64)>],
        max_n: usize,
    ) -> (f64, Vec<f64>, usize) {
        fn grams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
            if n > tokens.len() {
                return vec![];
            }
            tokens.windows(n).map(|w| w.to_vec()).collect()
        }
        fn occurrences(grams: &[Vec<String>], g: &[String]) -> usize {
            grams.iter().filter(|x| x.as_slice() == g).count()
        }

        let mut precisions = Vec::new();
        for n in 1..=max_n {
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for (hyp, refs) in hyps.iter().zip(rated.iter()) {
                let hyp_grams = grams(hyp, n);
                let mut seen: Vec<&[String]> = Vec::new();
                for g in &hyp_grams {
                    if seen.iter().any(|s| *s == g.as_slice()) {
                        continue;
                    }
                    seen.push(g);
                    let hyp_count = occurrences(&hyp_grams, g);
                    let mut best = f64::NEG_INFINITY;
                    let mut found = false;
                    for (r, w) in refs {
                        let r_count = occurrences(&grams(r, n), g);
                        if r_count > 0 {
                            found = true;
                            best = best.max(w * hyp_count.min(r_count) as f64);
                        }
                    }
                    if found {
                        num += best;
                    }
                    let mut max_w = f64::NEG_INFINITY;
                    for (_, w) in refs {
                        max_w = max_w.max(*w);
                    }
                    den += max_w * hyp_count as f64;
                }
            }
            precisions.push(num.max(1e-9) / den.max(1e-9));
        }

        let mut rho = 0usize;
        let mut eta = 0usize;
        let mut flagged = 0usize;
        for (hyp, refs) in hyps.iter().zip(rated.iter()) {
            rho += hyp.len();
            let mut pool: Vec<usize> = refs
                .iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|(r, _)| r.len())
                .collect();
            if pool.is_empty() {
                flagged += 1;
                pool = refs.iter().map(|(r, _)| r.len()).collect();
            }
            let mut best = pool[0];
            for len in pool {
                let d_new = (len as isize - hyp.len() as isize).abs();
                let d_best = (best as isize - hyp.len() as isize).abs();
                if d_new < d_best || (d_new == d_best && len < best) {
                    best = len;
                }
            }
            eta += best;
        }
        let bp = if rho > eta { 1.0 } else { (1.0 - eta as f64 / rho as f64).exp() };
        let score =
            bp * (precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64).exp();
        (score, precisions, flagged)
    }
}

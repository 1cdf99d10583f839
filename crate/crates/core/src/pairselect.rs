//! Discriminative attribute-pair scoring: contrast between the two regions'
//! attribute responses, boosted by question similarity and penalized by
//! visual similarity, with exact and bound-pruned top-k ranking.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMode {
    Exact,
    Pruned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    /// Question-similarity weight (>= 0).
    pub alpha: f64,
    /// Visual-dissimilarity weight (>= 0).
    pub beta: f64,
    pub top_k: usize,
    pub mode: RankMode,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, top_k: 5, mode: RankMode::Exact }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("selector weights must be non-negative".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("selector top_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// One scored attribute pair (attribute i on region A, j on region B) with
/// all three factors recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub i: usize,
    pub j: usize,
    pub contrast: f64,
    pub q_sim: f64,
    pub v_sim: f64,
    pub score: f64,
}

fn check_inputs(
    va: &[f32],
    vb: &[f32],
    q_sim: &DenseMatrix<f64>,
    v_sim: &DenseMatrix<f64>,
) -> Result<usize> {
    let k = va.len();
    if vb.len() != k {
        return Err(Error::Shape(format!("score vectors differ: {} vs {}", k, vb.len())));
    }
    for (name, m) in [("q_sim", q_sim), ("v_sim", v_sim)] {
        if m.rows() != k || m.cols() != k {
            return Err(Error::Shape(format!(
                "{name} matrix is {}x{}, expected {k}x{k}",
                m.rows(),
                m.cols()
            )));
        }
    }
    Ok(k)
}

/// Score one attribute pair. The contrast term is
/// `vA_i (1 - vB_i) * vB_j (1 - vA_j)`; the full score multiplies in
/// `exp(alpha * q_sim)` and `exp(-beta * v_sim)`, evaluated in log space.
pub fn score_pair(
    va: &[f32],
    vb: &[f32],
    i: usize,
    j: usize,
    q_sim: &DenseMatrix<f64>,
    v_sim: &DenseMatrix<f64>,
    config: &SelectorConfig,
) -> Result<PairScore> {
    config.validate()?;
    let k = check_inputs(va, vb, q_sim, v_sim)?;
    if i >= k || j >= k {
        return Err(Error::Index(format!("attribute pair ({i}, {j}) out of range for K={k}")));
    }
    let a = va[i] as f64 * (1.0 - vb[i] as f64);
    let b = vb[j] as f64 * (1.0 - va[j] as f64);
    let q = q_sim.at(i, j);
    let v = v_sim.at(i, j);
    let contrast = a * b;
    let score = if contrast == 0.0 {
        0.0
    } else {
        (contrast.ln() + config.alpha * q - config.beta * v).exp()
    };
    Ok(PairScore { i, j, contrast, q_sim: q, v_sim: v, score })
}

/// Log-space ranking key; ties resolve to the lexicographically smaller
/// (i, j), so ordering is total and deterministic.
#[derive(Debug, Clone, Copy)]
struct Entry {
    key: f64,
    i: usize,
    j: usize,
}

impl Entry {
    fn better_than(&self, other: &Entry) -> bool {
        match self.key.partial_cmp(&other.key).unwrap_or(Ordering::Equal) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (self.i, self.j) < (other.i, other.j),
        }
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.i == other.i && self.j == other.j
    }
}
impl Eq for Entry {}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.better_than(other) {
            Ordering::Greater
        } else if other.better_than(self) {
            Ordering::Less
        } else {
            Ordering::Equal
        }
    }
}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct TopK {
    heap: BinaryHeap<std::cmp::Reverse<Entry>>,
    capacity: usize,
}

impl TopK {
    fn new(capacity: usize) -> Self {
        Self { heap: BinaryHeap::with_capacity(capacity + 1), capacity }
    }

    fn worst_key(&self) -> Option<f64> {
        if self.heap.len() < self.capacity {
            None
        } else {
            self.heap.peek().map(|e| e.0.key)
        }
    }

    fn offer(&mut self, entry: Entry) {
        if self.heap.len() < self.capacity {
            self.heap.push(std::cmp::Reverse(entry));
        } else if let Some(worst) = self.heap.peek() {
            if entry.better_than(&worst.0) {
                self.heap.pop();
                self.heap.push(std::cmp::Reverse(entry));
            }
        }
    }

    fn into_sorted(self) -> Vec<Entry> {
        let mut entries: Vec<Entry> = self.heap.into_iter().map(|e| e.0).collect();
        entries.sort_by(|a, b| b.cmp(a));
        entries
    }
}

/// Top-k attribute pairs by score, descending; ties break by (i, j).
///
/// Exact mode enumerates all K^2 pairs. Pruned mode walks both sides in
/// decreasing unilateral-contrast order under an admissible bound built from
/// the extreme similarity entries, so it returns exactly the exact-mode list.
/// Returns the ranked pairs plus a flag set when `top_k` was clamped to K^2.
pub fn rank_pairs_topk(
    va: &[f32],
    vb: &[f32],
    q_sim: &DenseMatrix<f64>,
    v_sim: &DenseMatrix<f64>,
    config: &SelectorConfig,
) -> Result<(Vec<PairScore>, bool)> {
    config.validate()?;
    let k = check_inputs(va, vb, q_sim, v_sim)?;
    if k == 0 {
        return Err(Error::Shape("empty attribute score vectors".into()));
    }
    let mut top_k = config.top_k;
    let mut clamped = false;
    if top_k > k * k {
        top_k = k * k;
        clamped = true;
    }

    let la: Vec<f64> = (0..k)
        .map(|i| (va[i] as f64 * (1.0 - vb[i] as f64)).ln())
        .collect();
    let lb: Vec<f64> = (0..k)
        .map(|j| (vb[j] as f64 * (1.0 - va[j] as f64)).ln())
        .collect();

    let mut top = TopK::new(top_k);
    match config.mode {
        RankMode::Exact => {
            for i in 0..k {
                for j in 0..k {
                    let key =
                        la[i] + lb[j] + config.alpha * q_sim.at(i, j) - config.beta * v_sim.at(i, j);
                    top.offer(Entry { key, i, j });
                }
            }
        }
        RankMode::Pruned => {
            // Admissible cap on the similarity contribution of any pair.
            let mut q_hi = f64::NEG_INFINITY;
            let mut v_lo = f64::INFINITY;
            for v in q_sim.as_slice() {
                q_hi = q_hi.max(*v);
            }
            for v in v_sim.as_slice() {
                v_lo = v_lo.min(*v);
            }
            let cap = config.alpha * q_hi - config.beta * v_lo;

            let mut a_order: Vec<usize> = (0..k).collect();
            a_order.sort_by(|x, y| la[*y].partial_cmp(&la[*x]).unwrap().then(x.cmp(y)));
            let mut b_order: Vec<usize> = (0..k).collect();
            b_order.sort_by(|x, y| lb[*y].partial_cmp(&lb[*x]).unwrap().then(x.cmp(y)));

            let lb_best = lb[b_order[0]];
            for &i in &a_order {
                if let Some(worst) = top.worst_key() {
                    // Every remaining i has la no larger, so the bound only shrinks.
                    if la[i] + lb_best + cap < worst {
                        break;
                    }
                }
                for &j in &b_order {
                    if let Some(worst) = top.worst_key() {
                        if la[i] + lb[j] + cap < worst {
                            break;
                        }
                    }
                    let key =
                        la[i] + lb[j] + config.alpha * q_sim.at(i, j) - config.beta * v_sim.at(i, j);
                    top.offer(Entry { key, i, j });
                }
            }
        }
    }

    let ranked = top
        .into_sorted()
        .into_iter()
        .map(|e| {
            let a = va[e.i] as f64 * (1.0 - vb[e.i] as f64);
            let b = vb[e.j] as f64 * (1.0 - va[e.j] as f64);
            let contrast = a * b;
            PairScore {
                i: e.i,
                j: e.j,
                contrast,
                q_sim: q_sim.at(e.i, e.j),
                v_sim: v_sim.at(e.i, e.j),
                score: if e.key == f64::NEG_INFINITY { 0.0 } else { e.key.exp() },
            }
        })
        .collect();
    Ok((ranked, clamped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn zero_matrix(k: usize) -> DenseMatrix<f64> {
        DenseMatrix::zeros(k, k)
    }

    fn symmetric_random(k: usize, rng: &mut ChaCha12Rng, range: f64) -> DenseMatrix<f64> {
        let mut m = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = rng.gen_range(-range..range);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    #[test]
    fn maximal_contrast_neutral_similarities_scores_one() {
        let config = SelectorConfig { alpha: 0.0, beta: 0.0, ..Default::default() };
        let va = [1.0f32, 0.0];
        let vb = [0.0f32, 1.0];
        let s = score_pair(&va, &vb, 0, 1, &zero_matrix(2), &zero_matrix(2), &config).unwrap();
        assert!((s.score - 1.0).abs() < 1e-12);
        assert!((s.contrast - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_half_scores_give_contrast_one_sixteenth() {
        let config = SelectorConfig { alpha: 0.0, beta: 0.0, ..Default::default() };
        let va = [0.5f32; 3];
        let vb = [0.5f32; 3];
        for i in 0..3 {
            for j in 0..3 {
                let s =
                    score_pair(&va, &vb, i, j, &zero_matrix(3), &zero_matrix(3), &config).unwrap();
                assert!((s.contrast - 0.0625).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn matches_scalar_arithmetic_oracle() {
        let mut q = zero_matrix(2);
        q.set(0, 1, 2.0);
        q.set(1, 0, 2.0);
        let mut v = zero_matrix(2);
        v.set(0, 1, 1.0);
        v.set(1, 0, 1.0);
        let config =
            SelectorConfig { alpha: 0.5, beta: 0.25, top_k: 1, mode: RankMode::Exact };
        let va = [0.9f32, 0.2];
        let vb = [0.1f32, 0.8];
        let s = score_pair(&va, &vb, 0, 1, &q, &v, &config).unwrap();
        // Scalar oracle evaluated on the same f32-rounded inputs.
        let expected = (va[0] as f64)
            * (1.0 - vb[0] as f64)
            * (vb[1] as f64)
            * (1.0 - va[1] as f64)
            * 1.0f64.exp()
            * (-0.25f64).exp();
        assert!(
            (s.score - expected).abs() / expected < 1e-9,
            "got {} want {expected}",
            s.score
        );
    }

    #[test]
    fn score_invariant_holds() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let k = 12;
        let q = symmetric_random(k, &mut rng, 2.0);
        let v = symmetric_random(k, &mut rng, 2.0);
        let va: Vec<f32> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let vb: Vec<f32> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let config = SelectorConfig { alpha: 0.7, beta: 0.3, ..Default::default() };
        for i in 0..k {
            for j in 0..k {
                let s = score_pair(&va, &vb, i, j, &q, &v, &config).unwrap();
                let direct =
                    s.contrast * (config.alpha * s.q_sim).exp() * (-config.beta * s.v_sim).exp();
                if direct != 0.0 {
                    assert!((s.score - direct).abs() / direct.abs() < 1e-9);
                }
                assert!(s.contrast >= 0.0 && s.contrast <= 1.0);
            }
        }
    }

    #[test]
    fn constructed_dominance_orders_first() {
        let config = SelectorConfig { alpha: 0.0, beta: 0.0, top_k: 4, mode: RankMode::Exact };
        let va = [0.95f32, 0.1];
        let vb = [0.05f32, 0.9];
        let (ranked, clamped) =
            rank_pairs_topk(&va, &vb, &zero_matrix(2), &zero_matrix(2), &config).unwrap();
        assert!(!clamped);
        assert_eq!((ranked[0].i, ranked[0].j), (0, 1));
        for w in ranked.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn swapping_regions_transposes_the_ranking() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let k = 15;
        let q = symmetric_random(k, &mut rng, 1.0);
        let v = symmetric_random(k, &mut rng, 1.0);
        let va: Vec<f32> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let vb: Vec<f32> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let config = SelectorConfig { alpha: 1.0, beta: 0.5, top_k: 7, mode: RankMode::Exact };
        let (fwd, _) = rank_pairs_topk(&va, &vb, &q, &v, &config).unwrap();
        let (rev, _) = rank_pairs_topk(&vb, &va, &q, &v, &config).unwrap();
        for (f, r) in fwd.iter().zip(rev.iter()) {
            assert_eq!((f.i, f.j), (r.j, r.i));
            assert_eq!(f.score, r.score);
        }
    }

    #[test]
    fn alpha_beta_zero_ranking_depends_only_on_contrast() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let k = 10;
        let q = symmetric_random(k, &mut rng, 3.0);
        let v = symmetric_random(k, &mut rng, 3.0);
        let va: Vec<f32> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let vb: Vec<f32> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let config = SelectorConfig { alpha: 0.0, beta: 0.0, top_k: 5, mode: RankMode::Exact };
        let (with_sims, _) = rank_pairs_topk(&va, &vb, &q, &v, &config).unwrap();
        let (without, _) =
            rank_pairs_topk(&va, &vb, &zero_matrix(k), &zero_matrix(k), &config).unwrap();
        let pairs_a: Vec<(usize, usize)> = with_sims.iter().map(|p| (p.i, p.j)).collect();
        let pairs_b: Vec<(usize, usize)> = without.iter().map(|p| (p.i, p.j)).collect();
        assert_eq!(pairs_a, pairs_b);
    }

    #[test]
    fn score_is_monotone_in_the_right_directions() {
        let config = SelectorConfig { alpha: 0.3, beta: 0.2, ..Default::default() };
        let q = symmetric_random(2, &mut ChaCha12Rng::seed_from_u64(1), 1.0);
        let v = symmetric_random(2, &mut ChaCha12Rng::seed_from_u64(2), 1.0);
        let base = score_pair(&[0.5, 0.4], &[0.3, 0.6], 0, 1, &q, &v, &config).unwrap();
        // Raising vA_i or vB_j raises the score.
        let up_ai = score_pair(&[0.7, 0.4], &[0.3, 0.6], 0, 1, &q, &v, &config).unwrap();
        let up_bj = score_pair(&[0.5, 0.4], &[0.3, 0.8], 0, 1, &q, &v, &config).unwrap();
        assert!(up_ai.score >= base.score);
        assert!(up_bj.score >= base.score);
        // Raising vB_i or vA_j lowers it.
        let up_bi = score_pair(&[0.5, 0.4], &[0.5, 0.6], 0, 1, &q, &v, &config).unwrap();
        let up_aj = score_pair(&[0.5, 0.6], &[0.3, 0.6], 0, 1, &q, &v, &config).unwrap();
        assert!(up_bi.score <= base.score);
        assert!(up_aj.score <= base.score);
    }

    #[test]
    fn pruned_equals_exact_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for trial in 0..60 {
            let k = rng.gen_range(3..40);
            let q = symmetric_random(k, &mut rng, 2.0);
            let v = symmetric_random(k, &mut rng, 2.0);
            let va: Vec<f32> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let vb: Vec<f32> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let top_k = rng.gen_range(1..8);
            let exact = SelectorConfig { alpha: 1.0, beta: 1.0, top_k, mode: RankMode::Exact };
            let pruned = SelectorConfig { mode: RankMode::Pruned, ..exact };
            let (e, _) = rank_pairs_topk(&va, &vb, &q, &v, &exact).unwrap();
            let (p, _) = rank_pairs_topk(&va, &vb, &q, &v, &pruned).unwrap();
            assert_eq!(e, p, "trial {trial} k={k} top_k={top_k}");
        }
    }

    #[test]
    fn top_k_clamps_with_warning() {
        let config = SelectorConfig { alpha: 0.0, beta: 0.0, top_k: 100, mode: RankMode::Exact };
        let (ranked, clamped) = rank_pairs_topk(
            &[0.5, 0.5],
            &[0.5, 0.5],
            &zero_matrix(2),
            &zero_matrix(2),
            &config,
        )
        .unwrap();
        assert!(clamped);
        assert_eq!(ranked.len(), 4);
    }

    #[test]
    fn out_of_range_pair_is_an_index_error() {
        let config = SelectorConfig::default();
        assert!(matches!(
            score_pair(&[0.5], &[0.5], 0, 3, &zero_matrix(1), &zero_matrix(1), &config),
            Err(Error::Index(_))
        ));
    }
}

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::corpus::{CorpusStore, EvalPairRecord, RegionRecord};
use crate::error::{Error, Result};

/// Image-level split assignment; all regions of an image land in one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    by_image: BTreeMap<String, usize>,
    n_splits: usize,
}

impl SplitAssignment {
    pub fn split_of(&self, image_id: &str) -> Option<usize> {
        self.by_image.get(image_id).copied()
    }

    pub fn n_splits(&self) -> usize {
        self.n_splits
    }

    pub fn split_size(&self, split: usize) -> usize {
        self.by_image.values().filter(|s| **s == split).count()
    }

    pub fn by_image(&self) -> &BTreeMap<String, usize> {
        &self.by_image
    }

    /// Regions whose image fell into `split`, in region_id order.
    pub fn regions_in<'a>(&self, store: &'a CorpusStore, split: usize) -> Vec<&'a RegionRecord> {
        store
            .regions()
            .filter(|r| self.split_of(&r.image_id) == Some(split))
            .collect()
    }

    /// Pairs where both regions' images fell into `split`.
    pub fn pairs_in<'a>(&self, store: &'a CorpusStore, split: usize) -> Vec<&'a EvalPairRecord> {
        store
            .pairs()
            .iter()
            .filter(|p| {
                let a = store.region(&p.region_a).map(|r| self.split_of(&r.image_id));
                let b = store.region(&p.region_b).map(|r| self.split_of(&r.image_id));
                matches!((a, b), (Ok(Some(sa)), Ok(Some(sb))) if sa == split && sb == split)
            })
            .collect()
    }
}

/// Partition image ids into splits with the given ratios. Seeded shuffle,
/// largest-remainder apportionment (remainder ties go to the earlier split).
pub fn make_splits(store: &CorpusStore, ratios: &[f64], seed: u64) -> Result<SplitAssignment> {
    if ratios.is_empty() {
        return Err(Error::Config("make_splits needs at least one ratio".into()));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios sum to {total}, expected 1")));
    }
    if ratios.iter().any(|r| *r < 0.0) {
        return Err(Error::Config("negative split ratio".into()));
    }

    let mut images = store.image_ids();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    images.shuffle(&mut rng);

    let n = images.len();
    let mut counts: Vec<usize> = ratios.iter().map(|r| (r * n as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut remainders: Vec<(usize, f64)> = ratios
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r * n as f64 - counts[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    for k in 0..(n - assigned) {
        counts[remainders[k % remainders.len()].0] += 1;
    }

    let mut by_image = BTreeMap::new();
    let mut cursor = 0usize;
    for (split, count) in counts.iter().enumerate() {
        for image in &images[cursor..cursor + count] {
            by_image.insert(image.clone(), split);
        }
        cursor += count;
    }
    Ok(SplitAssignment { by_image, n_splits: ratios.len() })
}

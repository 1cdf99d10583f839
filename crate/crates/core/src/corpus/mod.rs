//! Data model and ingestion for regions, questions, and rated reference sets,
//! plus tokenization, split generation, and the synthetic micro-world.

pub mod splits;
pub mod synth;
pub mod text;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use splits::{make_splits, SplitAssignment};
pub use text::{build_vocab, tokenize, QuestionSequence, Vocabulary, MORE_THAN_ONE};

/// One question/answer annotation attached to a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub text: String,
    pub answer: String,
}

/// One image region with precomputed features and attached text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub region_id: String,
    pub image_id: String,
    /// (x_tl, y_tl, x_br, y_br) in pixels.
    pub bbox: [f64; 4],
    /// (W, H) in pixels.
    pub image_size: [f64; 2],
    pub feature_region: Vec<f32>,
    pub feature_image: Vec<f32>,
    pub questions: Vec<QaPair>,
    pub descriptions: Vec<String>,
    /// Optional object-category label; used for hard-subset grouping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl RegionRecord {
    pub fn validate(&self, feature_dim: usize) -> std::result::Result<(), String> {
        let [x_tl, y_tl, x_br, y_br] = self.bbox;
        let [w, h] = self.image_size;
        if w <= 0.0 || h <= 0.0 {
            return Err(format!("region {}: non-positive image size", self.region_id));
        }
        if !(0.0 <= x_tl && x_tl < x_br && x_br <= w) || !(0.0 <= y_tl && y_tl < y_br && y_br <= h)
        {
            return Err(format!("region {}: malformed bbox", self.region_id));
        }
        if self.feature_region.len() != feature_dim {
            return Err(format!(
                "region {}: feature_region length {} != profile dim {}",
                self.region_id,
                self.feature_region.len(),
                feature_dim
            ));
        }
        if self.feature_image.len() != feature_dim {
            return Err(format!(
                "region {}: feature_image length {} != profile dim {}",
                self.region_id,
                self.feature_image.len(),
                feature_dim
            ));
        }
        Ok(())
    }

    /// Relative location/size 5-vector recomputed from the bbox.
    pub fn location_vector(&self) -> Result<[f64; 5]> {
        compute_location_vector(&self.bbox, &self.image_size)
    }

    /// Full region representation: [feature_region, feature_image, location].
    pub fn representation(&self) -> Result<Vec<f32>> {
        let loc = self.location_vector()?;
        let mut rep = Vec::with_capacity(self.feature_region.len() + self.feature_image.len() + 5);
        rep.extend_from_slice(&self.feature_region);
        rep.extend_from_slice(&self.feature_image);
        rep.extend(loc.iter().map(|v| *v as f32));
        Ok(rep)
    }
}

/// `[x_tl/W, y_tl/H, x_br/W, y_br/H, area_ratio]`.
pub fn compute_location_vector(bbox: &[f64; 4], image_size: &[f64; 2]) -> Result<[f64; 5]> {
    let [x_tl, y_tl, x_br, y_br] = *bbox;
    let [w, h] = *image_size;
    if w <= 0.0 || h <= 0.0 {
        return Err(Error::Domain("zero-area image".into()));
    }
    let box_area = (x_br - x_tl) * (y_br - y_tl);
    Ok([x_tl / w, y_tl / h, x_br / w, y_br / h, box_area / (w * h)])
}

/// Annotator rating of one reference question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rating {
    StrongPos,
    WeakPos,
    Neg,
}

impl Rating {
    pub fn weight(self) -> f64 {
        match self {
            Rating::StrongPos => 1.0,
            Rating::WeakPos => 0.5,
            Rating::Neg => -0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedReference {
    pub text: String,
    pub rating: Rating,
}

/// One evaluation pair: two region ids plus the rated reference questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPairRecord {
    pub pair_id: String,
    pub region_a: String,
    pub region_b: String,
    pub references: Vec<RatedReference>,
}

impl EvalPairRecord {
    /// Tokenized references paired with their rating weights.
    pub fn reference_set(&self) -> Vec<(Vec<String>, f64)> {
        self.references
            .iter()
            .map(|r| (tokenize(&r.text), r.rating.weight()))
            .collect()
    }
}

/// Immutable-after-ingest store of regions and evaluation pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStore {
    feature_dim: usize,
    regions: BTreeMap<String, RegionRecord>,
    pairs: Vec<EvalPairRecord>,
}

impl CorpusStore {
    pub fn new(feature_dim: usize) -> Self {
        Self { feature_dim, regions: BTreeMap::new(), pairs: Vec::new() }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn insert_region(&mut self, record: RegionRecord) -> std::result::Result<(), String> {
        record.validate(self.feature_dim)?;
        self.regions.insert(record.region_id.clone(), record);
        Ok(())
    }

    pub fn insert_pair(&mut self, record: EvalPairRecord) -> std::result::Result<(), String> {
        for rid in [&record.region_a, &record.region_b] {
            if !self.regions.contains_key(rid) {
                return Err(format!("pair {}: unknown region {rid}", record.pair_id));
            }
        }
        if record.references.is_empty() {
            return Err(format!("pair {}: empty reference set", record.pair_id));
        }
        let a = &self.regions[&record.region_a];
        let b = &self.regions[&record.region_b];
        if let (Some(ca), Some(cb)) = (&a.category, &b.category) {
            if ca != cb {
                return Err(format!(
                    "pair {}: regions have different categories {ca} vs {cb}",
                    record.pair_id
                ));
            }
        }
        self.pairs.push(record);
        Ok(())
    }

    pub fn region(&self, region_id: &str) -> Result<&RegionRecord> {
        self.regions
            .get(region_id)
            .ok_or_else(|| Error::Data(format!("unknown region '{region_id}'")))
    }

    /// Regions in region_id order.
    pub fn regions(&self) -> impl Iterator<Item = &RegionRecord> {
        self.regions.values()
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn pairs(&self) -> &[EvalPairRecord] {
        &self.pairs
    }

    /// Sorted unique image ids.
    pub fn image_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.regions.values().map(|r| r.image_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// Counts (and reasons) for records dropped during ingest.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub accepted_regions: usize,
    pub accepted_pairs: usize,
    pub rejected: Vec<(usize, String)>,
}

impl IngestReport {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }
}

/// Read regions (and optionally pairs) from JSON-Lines files.
///
/// A line that fails to parse (missing field, bad JSON) is a hard parse error
/// carrying its line number; a structurally valid record that violates the
/// bbox/feature invariants is rejected and counted instead.
pub fn ingest_corpus(
    regions_path: &Path,
    pairs_path: Option<&Path>,
    feature_dim: usize,
) -> Result<(CorpusStore, IngestReport)> {
    let mut store = CorpusStore::new(feature_dim);
    let mut report = IngestReport::default();

    let reader = BufReader::new(File::open(regions_path)?);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RegionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            msg: format!("{regions_path:?}: {e}"),
        })?;
        match store.insert_region(record) {
            Ok(()) => report.accepted_regions += 1,
            Err(reason) => report.rejected.push((lineno + 1, reason)),
        }
    }

    if let Some(pairs_path) = pairs_path {
        let reader = BufReader::new(File::open(pairs_path)?);
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EvalPairRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: format!("{pairs_path:?}: {e}"),
            })?;
            match store.insert_pair(record) {
                Ok(()) => report.accepted_pairs += 1,
                Err(reason) => report.rejected.push((lineno + 1, reason)),
            }
        }
    }

    Ok((store, report))
}

/// Write the store back out as JSON-Lines; the inverse of `ingest_corpus`
/// for valid stores. Regions are emitted in region_id order, pairs in
/// insertion order.
pub fn dump_corpus(store: &CorpusStore, regions_path: &Path, pairs_path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(regions_path)?);
    for region in store.regions() {
        serde_json::to_writer(&mut out, region)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;

    let mut out = BufWriter::new(File::create(pairs_path)?);
    for pair in store.pairs() {
        serde_json::to_writer(&mut out, pair)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

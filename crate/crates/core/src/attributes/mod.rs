//! Attribute vocabulary extraction under part-of-speech constraints,
//! multi-label attribute recognition, and visual similarity from the
//! recognition head's weight rows.

pub mod postag;

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::synth::contains_subsequence;
use crate::corpus::{tokenize, CorpusStore, RegionRecord};
use crate::error::{Error, Result};
use crate::nn::{
    adam_update, clip_gradients, loss_multilabel, multilabel_grad_logits, AdamHyper, Activation,
    DenseMatrix, MlpSpec, ParamStore, Scalar,
};

pub use postag::{pos_tag_lite, PosTag};

/// One attribute: a 1-3 token expression and the tag pattern it matched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeEntry {
    pub expression: Vec<String>,
    pub pos_pattern: Vec<PosTag>,
}

/// Ordered attribute list; indices are the model output slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeVocab {
    entries: Vec<AttributeEntry>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct AttributeEntryFile {
    expression: String,
    pos_pattern: Vec<String>,
}

impl AttributeVocab {
    pub fn from_entries(entries: Vec<AttributeEntry>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.expression.join(" "), i))
            .collect();
        Self { entries, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[AttributeEntry] {
        &self.entries
    }

    pub fn expression(&self, i: usize) -> &[String] {
        &self.entries[i].expression
    }

    pub fn index_of(&self, expression: &[String]) -> Option<usize> {
        self.index.get(&expression.join(" ")).copied()
    }

    /// Exact token-sequence match of an answer against the attribute list.
    pub fn match_answer(&self, answer_tokens: &[String]) -> Option<usize> {
        self.index_of(answer_tokens)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let file: Vec<AttributeEntryFile> = self
            .entries
            .iter()
            .map(|e| AttributeEntryFile {
                expression: e.expression.join(" "),
                pos_pattern: e.pos_pattern.iter().map(|t| t.as_str().to_string()).collect(),
            })
            .collect();
        serde_json::to_value(file).expect("vocab serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let file: Vec<AttributeEntryFile> = serde_json::from_value(value.clone())?;
        let entries = file
            .into_iter()
            .map(|e| {
                let pos_pattern = e
                    .pos_pattern
                    .iter()
                    .map(|t| {
                        PosTag::parse(t)
                            .ok_or_else(|| Error::Schema(format!("unknown pos tag '{t}'")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(AttributeEntry {
                    expression: e.expression.split_whitespace().map(String::from).collect(),
                    pos_pattern,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_entries(entries))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}

/// The n-gram tag patterns an attribute expression may take.
pub fn default_pos_rules() -> Vec<Vec<PosTag>> {
    use PosTag::*;
    vec![
        vec![Nn],
        vec![Jj],
        vec![Vb],
        vec![Cd],
        vec![Jj, Nn],
        vec![Vb, Nn],
        vec![In, Nn],
        vec![Nn, Nn],
        vec![Vb, Nn, Nn],
        vec![In, Nn, Nn],
    ]
}

/// Extraction result plus how many requested slots went unfilled.
#[derive(Debug, Clone)]
pub struct ExtractOutcome {
    pub vocab: AttributeVocab,
    pub shortfall: usize,
}

/// Collect the top-k n-gram expressions (n <= 3) that match a tag pattern and
/// share at least one token with the most frequent answers. Deterministic:
/// frequency descending, ties lexicographic.
pub fn extract_attribute_vocab(
    texts: &[Vec<String>],
    answers: &[Vec<String>],
    rules: &[Vec<PosTag>],
    k: usize,
    answer_top_n: usize,
) -> ExtractOutcome {
    let max_n = rules.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut counts: HashMap<Vec<String>, (usize, Vec<PosTag>)> = HashMap::new();
    for text in texts {
        let tags = pos_tag_lite(text);
        for n in 1..=max_n.min(text.len()) {
            for start in 0..=text.len() - n {
                let window_tags = &tags[start..start + n];
                if rules.iter().any(|r| r.as_slice() == window_tags) {
                    let expr = text[start..start + n].to_vec();
                    let entry = counts
                        .entry(expr)
                        .or_insert_with(|| (0, window_tags.to_vec()));
                    entry.0 += 1;
                }
            }
        }
    }

    // Top answers by frequency of the full answer string.
    let mut answer_counts: HashMap<&[String], usize> = HashMap::new();
    for a in answers {
        *answer_counts.entry(a.as_slice()).or_default() += 1;
    }
    let mut ranked_answers: Vec<(&[String], usize)> = answer_counts.into_iter().collect();
    ranked_answers.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let answer_tokens: std::collections::HashSet<&String> = ranked_answers
        .iter()
        .take(answer_top_n)
        .flat_map(|(a, _)| a.iter())
        .collect();

    let mut candidates: Vec<(Vec<String>, usize, Vec<PosTag>)> = counts
        .into_iter()
        .filter(|(expr, _)| expr.iter().any(|t| answer_tokens.contains(t)))
        .map(|(expr, (count, pattern))| (expr, count, pattern))
        .collect();
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    candidates.truncate(k);

    let shortfall = k.saturating_sub(candidates.len());
    let entries = candidates
        .into_iter()
        .map(|(expression, _, pos_pattern)| AttributeEntry { expression, pos_pattern })
        .collect();
    ExtractOutcome { vocab: AttributeVocab::from_entries(entries), shortfall }
}

/// Tokenized descriptions and answers of a region, the text the attribute
/// labels and the extraction corpus are both built from.
pub fn region_texts(region: &RegionRecord) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let descriptions = region.descriptions.iter().map(|d| tokenize(d)).collect();
    let answers = region.questions.iter().map(|q| tokenize(&q.answer)).collect();
    (descriptions, answers)
}

/// Multi-hot ground-truth labels: attribute k fires iff its expression occurs
/// as a contiguous token subsequence in any description or answer.
pub fn label_regions(region: &RegionRecord, vocab: &AttributeVocab) -> Vec<f32> {
    let (descriptions, answers) = region_texts(region);
    vocab
        .entries()
        .iter()
        .map(|entry| {
            let hit = descriptions
                .iter()
                .chain(answers.iter())
                .any(|text| contains_subsequence(text, &entry.expression));
            if hit {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// MLP attribute recognizer with a sigmoid head; the head's weight matrix
/// rows double as per-attribute visual embeddings.
#[derive(Debug, Clone)]
pub struct AttrModel<T: Scalar> {
    pub spec: MlpSpec,
    pub store: ParamStore<T>,
    pub vocab: AttributeVocab,
    pub input_dim: usize,
    pub hidden: usize,
}

impl<T: Scalar> AttrModel<T> {
    pub fn init(input_dim: usize, hidden: usize, vocab: AttributeVocab, seed: u64) -> Self {
        let spec = MlpSpec::new(
            "attr",
            vec![input_dim, hidden, vocab.len()],
            Activation::Tanh,
            Activation::Sigmoid,
        );
        let mut store = ParamStore::new();
        spec.init(&mut store, seed);
        Self { spec, store, vocab, input_dim, hidden }
    }

    pub fn k(&self) -> usize {
        self.vocab.len()
    }

    /// Attribute score vector in (0,1)^K for one region representation.
    pub fn predict(&self, region_rep: &[T]) -> Result<Vec<T>> {
        if region_rep.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "attr model expects input {}, got {}",
                self.input_dim,
                region_rep.len()
            )));
        }
        self.spec.forward(&self.store, region_rep)
    }

    fn w_f(&self) -> Result<&DenseMatrix<T>> {
        self.store.value(&self.spec.head_layer().w)
    }

    /// Inner product of head weight rows i and j; symmetric by construction.
    pub fn visual_similarity(&self, i: usize, j: usize) -> Result<f64> {
        self.visual_similarity_mode(i, j, false)
    }

    /// `cosine = true` length-normalizes the rows before the inner product.
    pub fn visual_similarity_mode(&self, i: usize, j: usize, cosine: bool) -> Result<f64> {
        let w = self.w_f()?;
        if i >= w.rows() || j >= w.rows() {
            return Err(Error::Index(format!(
                "attribute index ({i}, {j}) out of range for K={}",
                w.rows()
            )));
        }
        // Accumulate in f64 regardless of the model dtype; the selector
        // consumes these values in f64.
        let dot = |a: usize, b: usize| -> f64 {
            w.row(a)
                .iter()
                .zip(w.row(b).iter())
                .map(|(x, y)| x.to_f64() * y.to_f64())
                .sum()
        };
        let raw = dot(i, j);
        if !cosine {
            return Ok(raw);
        }
        let ni = dot(i, i).sqrt();
        let nj = dot(j, j).sqrt();
        if ni == 0.0 || nj == 0.0 {
            return Ok(0.0);
        }
        Ok(raw / (ni * nj))
    }

    /// Full K x K similarity matrix of head weight rows.
    pub fn similarity_matrix(&self, cosine: bool) -> Result<DenseMatrix<f64>> {
        let k = self.k();
        let mut out = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                out.set(i, j, self.visual_similarity_mode(i, j, cosine)?);
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "attr",
            "input_dim": self.input_dim,
            "hidden": self.hidden,
            "vocab": self.vocab.to_json(),
        });
        crate::nn::save_store_to_path(path, &self.store, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (store, meta) = crate::nn::load_store_from_path::<T>(path)?;
        if meta["kind"] != "attr" {
            return Err(Error::Schema(format!("not an attribute checkpoint: {}", meta["kind"])));
        }
        let input_dim = meta["input_dim"]
            .as_u64()
            .ok_or_else(|| Error::Schema("missing input_dim".into()))? as usize;
        let hidden = meta["hidden"]
            .as_u64()
            .ok_or_else(|| Error::Schema("missing hidden".into()))? as usize;
        let vocab = AttributeVocab::from_json(&meta["vocab"])?;
        let spec = MlpSpec::new(
            "attr",
            vec![input_dim, hidden, vocab.len()],
            Activation::Tanh,
            Activation::Sigmoid,
        );
        Ok(Self { spec, store, vocab, input_dim, hidden })
    }
}

/// Hyperparameters for attribute-model training.
#[derive(Debug, Clone)]
pub struct AttrHyper {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for AttrHyper {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 50,
            batch_size: 50,
            adam: AdamHyper::default(),
            clip_norm: 5.0,
            seed: 1234,
        }
    }
}

/// (representation, multi-hot labels) pairs for the given regions.
pub fn build_attr_samples(
    regions: &[&RegionRecord],
    vocab: &AttributeVocab,
) -> Result<Vec<(Vec<f32>, Vec<f32>)>> {
    regions
        .iter()
        .map(|r| Ok((r.representation()?, label_regions(r, vocab))))
        .collect()
}

/// Minimize mean binary cross-entropy over the samples with Adam and
/// gradient clipping. Deterministic under the hyper seed.
pub fn train_attr_model(
    samples: &[(Vec<f32>, Vec<f32>)],
    vocab: AttributeVocab,
    hyper: &AttrHyper,
) -> Result<AttrModel<f32>> {
    if samples.is_empty() {
        return Err(Error::Data("no attribute training samples".into()));
    }
    let input_dim = samples[0].0.len();
    let mut model = AttrModel::<f32>::init(input_dim, hyper.hidden, vocab, hyper.seed);
    let mut rng = ChaCha12Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for _epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            model.store.zero_grads();
            let scale = 1.0 / batch.len() as f32;
            for &idx in batch {
                let (rep, labels) = &samples[idx];
                let (scores, cache) = model.spec.forward_cached(&model.store, rep)?;
                let mut d_logits = vec![0.0f32; scores.len()];
                multilabel_grad_logits(&scores, labels, &mut d_logits);
                d_logits.iter_mut().for_each(|d| *d *= scale);
                model.spec.backward_from_logits(&mut model.store, &cache, &d_logits)?;
            }
            clip_gradients(&mut model.store, hyper.clip_norm)?;
            adam_update(&mut model.store, &hyper.adam)?;
        }
    }
    Ok(model)
}

/// Mean loss of a trained model over samples (diagnostic).
pub fn attr_eval_loss(model: &AttrModel<f32>, samples: &[(Vec<f32>, Vec<f32>)]) -> Result<f64> {
    let mut total = 0.0f64;
    for (rep, labels) in samples {
        let scores = model.predict(rep)?;
        total += loss_multilabel(&scores, labels)?.to_f64();
    }
    Ok(total / samples.len() as f64)
}

/// Mean average precision over attributes with at least one positive label.
/// Ranking ties break by sample index.
pub fn mean_average_precision(scores: &[Vec<f32>], labels: &[Vec<f32>]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let k = scores[0].len();
    let mut ap_sum = 0.0f64;
    let mut valid = 0usize;
    for attr in 0..k {
        let mut ranked: Vec<(f32, bool)> = scores
            .iter()
            .zip(labels.iter())
            .map(|(s, l)| (s[attr], l[attr] > 0.5))
            .collect();
        let positives = ranked.iter().filter(|(_, l)| *l).count();
        if positives == 0 {
            continue;
        }
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut hits = 0usize;
        let mut ap = 0.0f64;
        for (rank, (_, is_pos)) in ranked.iter().enumerate() {
            if *is_pos {
                hits += 1;
                ap += hits as f64 / (rank + 1) as f64;
            }
        }
        ap_sum += ap / positives as f64;
        valid += 1;
    }
    if valid == 0 {
        0.0
    } else {
        ap_sum / valid as f64
    }
}

/// Extraction corpus for a set of regions: all descriptions and answers.
pub fn build_extraction_corpus(
    store: &CorpusStore,
    regions: &[&RegionRecord],
) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let _ = store;
    let mut texts = Vec::new();
    let mut answers = Vec::new();
    for region in regions {
        let (descriptions, region_answers) = region_texts(region);
        texts.extend(descriptions);
        for a in region_answers {
            texts.push(a.clone());
            answers.push(a);
        }
    }
    (texts, answers)
}

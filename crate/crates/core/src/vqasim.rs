//! Small VQA model: question LSTM plus image projection feeding an
//! attribute-restricted answer classifier. Trained mainly so the rows of its
//! answer projection embed attributes in question space.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::attributes::AttributeVocab;
use crate::corpus::{tokenize, RegionRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{
    adam_update, categorical_grad_logits, clip_gradients, loss_categorical, softmax, AdamHyper,
    DenseMatrix, ParamStore, Scalar, StackedLstm,
};

#[derive(Debug, Clone)]
pub struct VqaHyper {
    pub d_emb: usize,
    pub d_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for VqaHyper {
    fn default() -> Self {
        Self {
            d_emb: 32,
            d_hidden: 32,
            epochs: 25,
            batch_size: 50,
            adam: AdamHyper::default(),
            clip_norm: 5.0,
            seed: 2345,
        }
    }
}

/// Answer logits are `W_q h_question + W_v f_image + b` over the K attributes.
#[derive(Debug, Clone)]
pub struct VqaModel<T: Scalar> {
    pub store: ParamStore<T>,
    pub question_vocab: Vocabulary,
    pub attr_vocab: AttributeVocab,
    pub lstm: StackedLstm,
    pub d_emb: usize,
    pub d_hidden: usize,
    pub feat_dim: usize,
}

const EMBED: &str = "vqa.embed";
const W_Q: &str = "vqa.w_q";
const W_V: &str = "vqa.w_v";
const BIAS: &str = "vqa.b";

impl<T: Scalar> VqaModel<T> {
    pub fn init(
        question_vocab: Vocabulary,
        attr_vocab: AttributeVocab,
        feat_dim: usize,
        d_emb: usize,
        d_hidden: usize,
        seed: u64,
    ) -> Self {
        let mut store = ParamStore::new();
        store.insert_uniform(EMBED, question_vocab.len(), d_emb, seed);
        let lstm = StackedLstm::new("vqa", d_emb, d_hidden, 1);
        lstm.init(&mut store, seed.wrapping_add(7));
        store.insert_uniform(W_Q, attr_vocab.len(), d_hidden, seed.wrapping_add(13));
        store.insert_uniform(W_V, attr_vocab.len(), feat_dim, seed.wrapping_add(17));
        store.insert_zeros(BIAS, attr_vocab.len(), 1);
        Self { store, question_vocab, attr_vocab, lstm, d_emb, d_hidden, feat_dim }
    }

    pub fn k(&self) -> usize {
        self.attr_vocab.len()
    }

    fn embed_tokens(&self, tokens: &[usize]) -> Result<Vec<Vec<T>>> {
        let embed = self.store.value(EMBED)?;
        tokens
            .iter()
            .map(|t| {
                if *t >= embed.rows() {
                    return Err(Error::Index(format!("token index {t} outside vocabulary")));
                }
                Ok(embed.row(*t).to_vec())
            })
            .collect()
    }

    /// Answer logits for an encoded question and an image feature vector.
    pub fn logits(&self, tokens: &[usize], feature: &[T]) -> Result<Vec<T>> {
        if tokens.is_empty() {
            return Err(Error::Input("empty question".into()));
        }
        if feature.len() != self.feat_dim {
            return Err(Error::Shape(format!(
                "vqa feature length {} != {}",
                feature.len(),
                self.feat_dim
            )));
        }
        let inputs = self.embed_tokens(tokens)?;
        let mut states = self.lstm.zero_states::<T>();
        let mut h = vec![T::ZERO; self.d_hidden];
        for x in &inputs {
            h = self.lstm.step(&self.store, x, &mut states)?;
        }
        self.logits_from_parts(&h, feature)
    }

    fn logits_from_parts(&self, h: &[T], feature: &[T]) -> Result<Vec<T>> {
        let w_q = self.store.value(W_Q)?;
        let w_v = self.store.value(W_V)?;
        let b = self.store.value(BIAS)?;
        let mut logits = vec![T::ZERO; self.k()];
        w_q.matvec(h, &mut logits);
        let mut img = vec![T::ZERO; self.k()];
        w_v.matvec(feature, &mut img);
        for ((l, i), bias) in logits.iter_mut().zip(img.iter()).zip(b.as_slice().iter()) {
            *l += *i + *bias;
        }
        Ok(logits)
    }

    /// Forward + backward for one training tuple; gradients are scaled by
    /// `scale` and accumulated. Returns the (unscaled) loss.
    pub fn loss_and_grad(
        &mut self,
        tokens: &[usize],
        feature: &[T],
        target: usize,
        scale: T,
    ) -> Result<T> {
        if tokens.is_empty() {
            return Err(Error::Input("empty question".into()));
        }
        let inputs = self.embed_tokens(tokens)?;
        let (hiddens, cache) = self.lstm.forward_cached(&self.store, &inputs)?;
        let h = hiddens.last().expect("nonempty question").clone();
        let logits = self.logits_from_parts(&h, feature)?;
        let loss = loss_categorical(&logits, target)?;

        let mut d_logits = vec![T::ZERO; logits.len()];
        categorical_grad_logits(&logits, target, &mut d_logits);
        d_logits.iter_mut().for_each(|d| *d *= scale);

        // Head gradients.
        let mut d_h = vec![T::ZERO; self.d_hidden];
        self.store.value(W_Q)?.matvec_t(&d_logits, &mut d_h);
        self.store.grad_mut(W_Q)?.add_outer(&d_logits, &h);
        self.store.grad_mut(W_V)?.add_outer(&d_logits, feature);
        for (g, d) in self
            .store
            .grad_mut(BIAS)?
            .as_mut_slice()
            .iter_mut()
            .zip(d_logits.iter())
        {
            *g += *d;
        }

        // Only the final step's hidden state feeds the classifier.
        let mut d_outputs = vec![vec![T::ZERO; self.d_hidden]; inputs.len()];
        *d_outputs.last_mut().expect("nonempty") = d_h;
        let d_inputs = self.lstm.backward(&mut self.store, &cache, &d_outputs)?;

        let d_embed = self.store.grad_mut(EMBED)?;
        for (token, d_x) in tokens.iter().zip(d_inputs.iter()) {
            let row = d_embed.row_mut(*token);
            for (slot, d) in row.iter_mut().zip(d_x.iter()) {
                *slot += *d;
            }
        }
        Ok(loss)
    }

    /// Most probable attribute answer with its softmax probability.
    /// Ties resolve to the lowest attribute index.
    pub fn predict(&self, question: &[String], feature: &[T]) -> Result<(usize, f64)> {
        if question.is_empty() {
            return Err(Error::Input("empty question".into()));
        }
        let tokens = self.question_vocab.encode_content(question);
        let logits = self.logits(&tokens, feature)?;
        let probs = softmax(&logits);
        let mut best = 0usize;
        for (i, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = i;
            }
        }
        Ok((best, probs[best].to_f64()))
    }

    /// Inner product of answer-projection rows i and j (f64 accumulation).
    pub fn question_similarity(&self, i: usize, j: usize) -> Result<f64> {
        let w = self.store.value(W_Q)?;
        if i >= w.rows() || j >= w.rows() {
            return Err(Error::Index(format!(
                "attribute index ({i}, {j}) out of range for K={}",
                w.rows()
            )));
        }
        Ok(w.row(i)
            .iter()
            .zip(w.row(j).iter())
            .map(|(a, b)| a.to_f64() * b.to_f64())
            .sum())
    }

    pub fn similarity_matrix(&self) -> Result<DenseMatrix<f64>> {
        let k = self.k();
        let mut out = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                out.set(i, j, self.question_similarity(i, j)?);
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "vqa",
            "d_emb": self.d_emb,
            "d_hidden": self.d_hidden,
            "feat_dim": self.feat_dim,
            "question_vocab": self.question_vocab.tokens(),
            "attr_vocab": self.attr_vocab.to_json(),
        });
        crate::nn::save_store_to_path(path, &self.store, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (store, meta) = crate::nn::load_store_from_path::<T>(path)?;
        if meta["kind"] != "vqa" {
            return Err(Error::Schema(format!("not a vqa checkpoint: {}", meta["kind"])));
        }
        let d_emb = meta["d_emb"].as_u64().ok_or_else(|| Error::Schema("missing d_emb".into()))?
            as usize;
        let d_hidden = meta["d_hidden"]
            .as_u64()
            .ok_or_else(|| Error::Schema("missing d_hidden".into()))? as usize;
        let feat_dim = meta["feat_dim"]
            .as_u64()
            .ok_or_else(|| Error::Schema("missing feat_dim".into()))? as usize;
        let tokens: Vec<String> = serde_json::from_value(meta["question_vocab"].clone())?;
        if tokens.len() < Vocabulary::RESERVED {
            return Err(Error::Schema("question vocabulary too small".into()));
        }
        let question_vocab = Vocabulary::from_tokens(tokens[Vocabulary::RESERVED..].to_vec());
        let attr_vocab = AttributeVocab::from_json(&meta["attr_vocab"])?;
        let lstm = StackedLstm::new("vqa", d_emb, d_hidden, 1);
        Ok(Self { store, question_vocab, attr_vocab, lstm, d_emb, d_hidden, feat_dim })
    }
}

/// One filtered training tuple: encoded question, region representation, and
/// the attribute index its answer matched.
#[derive(Debug, Clone)]
pub struct VqaTuple {
    pub tokens: Vec<usize>,
    pub feature: Vec<f32>,
    pub answer: usize,
}

/// Keep only QA pairs whose answer exactly matches an attribute expression.
pub fn build_vqa_tuples(
    regions: &[&RegionRecord],
    question_vocab: &Vocabulary,
    attr_vocab: &AttributeVocab,
) -> Result<Vec<VqaTuple>> {
    let mut tuples = Vec::new();
    for region in regions {
        let feature = region.representation()?;
        for qa in &region.questions {
            let answer_tokens = tokenize(&qa.answer);
            if let Some(answer) = attr_vocab.match_answer(&answer_tokens) {
                let question = tokenize(&qa.text);
                if question.is_empty() {
                    continue;
                }
                tuples.push(VqaTuple {
                    tokens: question_vocab.encode_content(&question),
                    feature: feature.clone(),
                    answer,
                });
            }
        }
    }
    Ok(tuples)
}

/// Train with categorical cross-entropy over the K attribute answers.
pub fn train_vqa(
    tuples: &[VqaTuple],
    question_vocab: Vocabulary,
    attr_vocab: AttributeVocab,
    feat_dim: usize,
    hyper: &VqaHyper,
) -> Result<VqaModel<f32>> {
    if tuples.is_empty() {
        return Err(Error::Data("no QA pairs survive attribute filtering".into()));
    }
    let mut model = VqaModel::<f32>::init(
        question_vocab,
        attr_vocab,
        feat_dim,
        hyper.d_emb,
        hyper.d_hidden,
        hyper.seed,
    );
    let mut rng = ChaCha12Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..tuples.len()).collect();
    for _epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            model.store.zero_grads();
            let scale = 1.0 / batch.len() as f32;
            for &idx in batch {
                let t = &tuples[idx];
                model.loss_and_grad(&t.tokens, &t.feature, t.answer, scale)?;
            }
            clip_gradients(&mut model.store, hyper.clip_norm)?;
            adam_update(&mut model.store, &hyper.adam)?;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::{pos_tag_lite, AttributeEntry};
    use crate::corpus::build_vocab;
    use crate::nn::finite_diff_check;

    fn attr_vocab(exprs: &[&str]) -> AttributeVocab {
        AttributeVocab::from_entries(
            exprs
                .iter()
                .map(|e| {
                    let expression = tokenize(e);
                    let pos_pattern = pos_tag_lite(&expression);
                    AttributeEntry { expression, pos_pattern }
                })
                .collect(),
        )
    }

    fn tiny_model(seed: u64) -> VqaModel<f32> {
        let lists = vec![tokenize("what color is the ball")];
        let vocab = build_vocab(&lists, 1);
        VqaModel::init(vocab, attr_vocab(&["red", "blue", "green"]), 6, 4, 5, seed)
    }

    #[test]
    fn zeroed_model_is_uniform() {
        let mut model = tiny_model(1);
        for name in ["vqa.embed", "vqa.w_q", "vqa.w_v", "vqa.lstm0.w_ih", "vqa.lstm0.w_hh"] {
            model.store.value_mut(name).unwrap().fill(0.0);
        }
        let (idx, prob) = model
            .predict(&tokenize("what color is the ball"), &[0.0; 6])
            .unwrap();
        assert_eq!(idx, 0); // ties resolve to the lowest index
        assert!((prob - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn empty_question_is_an_input_error() {
        let model = tiny_model(2);
        assert!(matches!(model.predict(&[], &[0.0; 6]), Err(Error::Input(_))));
    }

    #[test]
    fn single_pair_memorization() {
        let lists = vec![tokenize("what color is the ball")];
        let vocab = build_vocab(&lists, 1);
        let tuples: Vec<VqaTuple> = (0..1)
            .map(|_| VqaTuple {
                tokens: vocab.encode_content(&tokenize("what color is the ball")),
                feature: vec![0.4, -0.2, 0.9, 0.0, 0.1, -0.5],
                answer: 1,
            })
            .collect();
        let hyper = VqaHyper {
            epochs: 200,
            batch_size: 1,
            d_emb: 8,
            d_hidden: 8,
            ..Default::default()
        };
        let model =
            train_vqa(&tuples, vocab, attr_vocab(&["red", "blue", "green"]), 6, &hyper).unwrap();
        let t = &tuples[0];
        let logits = model.logits(&t.tokens, &t.feature).unwrap();
        let loss = loss_categorical(&logits, t.answer).unwrap();
        assert!(loss < 0.1, "memorization loss {loss}");
    }

    #[test]
    fn empty_tuples_is_a_data_error() {
        let vocab = build_vocab(&vec![tokenize("a")], 1);
        assert!(matches!(
            train_vqa(&[], vocab, attr_vocab(&["red"]), 4, &VqaHyper::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn answer_filtering_requires_exact_sequence_match() {
        let region = RegionRecord {
            region_id: "r".into(),
            image_id: "i".into(),
            bbox: [0.0, 0.0, 5.0, 5.0],
            image_size: [10.0, 10.0],
            feature_region: vec![0.0; 2],
            feature_image: vec![0.0; 2],
            questions: vec![
                crate::corpus::QaPair { text: "where is it".into(), answer: "on left".into() },
                crate::corpus::QaPair { text: "what is it".into(), answer: "a left turn".into() },
            ],
            descriptions: vec![],
            category: None,
        };
        let vocab = build_vocab(&vec![tokenize("where is it")], 1);
        let attrs = attr_vocab(&["on left", "left"]);
        let tuples = build_vqa_tuples(&[&region], &vocab, &attrs).unwrap();
        // "on left" matches exactly; "a left turn" matches nothing.
        assert_eq!(tuples.len(), 1);
        assert_eq!(tuples[0].answer, 0);
    }

    #[test]
    fn zero_projection_similarity_is_zero() {
        let mut model = tiny_model(3);
        model.store.value_mut("vqa.w_q").unwrap().fill(0.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(model.question_similarity(i, j).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn similarity_matrix_is_symmetric_and_matches_product() {
        let model = tiny_model(4);
        let sim = model.similarity_matrix().unwrap();
        let w = model.store.value("vqa.w_q").unwrap().clone();
        for i in 0..3 {
            assert!(sim.at(i, i) >= 0.0);
            for j in 0..3 {
                assert_eq!(sim.at(i, j), sim.at(j, i));
                let mut acc = 0.0f64;
                for c in 0..w.cols() {
                    acc += w.at(i, c) as f64 * w.at(j, c) as f64;
                }
                assert!((sim.at(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn similarity_index_out_of_range() {
        let model = tiny_model(5);
        assert!(matches!(model.question_similarity(0, 9), Err(Error::Index(_))));
    }

    #[test]
    fn gradients_pass_finite_difference_check() {
        let lists = vec![tokenize("what color is the ball")];
        let vocab = build_vocab(&lists, 1);
        let mut model =
            VqaModel::<f64>::init(vocab.clone(), attr_vocab(&["red", "blue"]), 5, 3, 4, 11);
        let tokens = vocab.encode_content(&tokenize("what color is the ball"));
        let feature = vec![0.2, -0.7, 0.4, 0.9, -0.1];
        let mut store = std::mem::replace(&mut model.store, ParamStore::new());
        let err = finite_diff_check(&mut store, 1e-5, 400, 2, |s| {
            std::mem::swap(&mut model.store, s);
            model.store.zero_grads();
            let loss = model.loss_and_grad(&tokens, &feature, 1, 1.0);
            std::mem::swap(&mut model.store, s);
            loss
        })
        .unwrap();
        assert!(err < 1e-4, "vqa gradcheck {err}");
    }
}

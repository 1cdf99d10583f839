use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::text::tokenize;
use crate::corpus::{CorpusStore, EvalPairRecord, QaPair, RatedReference, Rating, RegionRecord};
use crate::error::{Error, Result};

/// One value of an attribute family: the raw surface form plus the gold
/// part-of-speech tag of each surface token (post-tokenization).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyValue {
    pub surface: String,
    pub tags: Vec<String>,
}

impl FamilyValue {
    pub fn new(surface: &str, tags: &[&str]) -> Self {
        Self { surface: surface.into(), tags: tags.iter().map(|t| t.to_string()).collect() }
    }

    /// Canonical token sequence after tokenization (numeral rewrite applied).
    pub fn attr_tokens(&self) -> Vec<String> {
        tokenize(&self.surface)
    }
}

/// An attribute family. Families with a question template are asked about;
/// the single family without one names the object and is shared within a pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    pub values: Vec<FamilyValue>,
    /// Template tokens; `<obj>` is replaced by the object surface.
    pub question: Option<Vec<String>>,
}

/// Micro-world generator configuration. Each image holds exactly two regions
/// forming one evaluation pair that differs in exactly one questioned family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_images: usize,
    pub noise_sigma: f64,
    pub families: Vec<FamilySpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let jj = |s: &str| FamilyValue::new(s, &["JJ"]);
        let vb = |s: &str| FamilyValue::new(s, &["VB"]);
        let nn = |s: &str| FamilyValue::new(s, &["NN"]);
        let families = vec![
            FamilySpec {
                name: "count".into(),
                values: vec![FamilyValue::new("one", &["CD"]), FamilyValue::new("two", &["CD"])],
                question: Some(words(&["how", "many", "<obj>", "are", "there"])),
            },
            FamilySpec {
                name: "object".into(),
                values: ["ball", "car", "dog", "cat", "man", "woman", "table", "chair"]
                    .iter()
                    .map(|s| nn(s))
                    .collect(),
                question: None,
            },
            FamilySpec {
                name: "color".into(),
                values: ["red", "blue", "green", "white", "black", "yellow"]
                    .iter()
                    .map(|s| jj(s))
                    .collect(),
                question: Some(words(&["what", "color", "is", "the", "<obj>"])),
            },
            FamilySpec {
                name: "action".into(),
                values: ["run", "sit", "stand", "jump", "walk"].iter().map(|s| vb(s)).collect(),
                question: Some(words(&["what", "is", "the", "<obj>", "doing"])),
            },
            FamilySpec {
                name: "location".into(),
                values: ["on left", "on right", "on top", "on bottom"]
                    .iter()
                    .map(|s| FamilyValue::new(s, &["IN", "NN"]))
                    .collect(),
                question: Some(words(&["where", "is", "the", "<obj>"])),
            },
        ];
        Self { n_images: 300, noise_sigma: 0.05, families }
    }
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| w.to_string()).collect()
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::Config("synthetic config lists zero families".into()));
        }
        let objects = self.families.iter().filter(|f| f.question.is_none()).count();
        if objects != 1 {
            return Err(Error::Config(format!(
                "synthetic config needs exactly one object family, found {objects}"
            )));
        }
        if self.families.iter().filter(|f| f.question.is_some()).count() == 0 {
            return Err(Error::Config("synthetic config has no questioned families".into()));
        }
        if self.families.iter().any(|f| f.values.len() < 2) {
            return Err(Error::Config("every family needs at least two values".into()));
        }
        if self.n_images == 0 {
            return Err(Error::Config("n_images must be positive".into()));
        }
        Ok(())
    }

    pub fn object_family(&self) -> usize {
        self.families
            .iter()
            .position(|f| f.question.is_none())
            .expect("validated config has an object family")
    }

    pub fn questioned(&self) -> Vec<usize> {
        (0..self.families.len()).filter(|i| self.families[*i].question.is_some()).collect()
    }

    /// Feature dimension: one one-hot block per family, in config order.
    pub fn feature_dim(&self) -> usize {
        self.families.iter().map(|f| f.values.len()).sum()
    }

    fn render_question(&self, family: usize, object_surface: &str) -> String {
        self.families[family]
            .question
            .as_ref()
            .expect("questioned family")
            .iter()
            .map(|t| if t == "<obj>" { object_surface } else { t.as_str() })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn clean_feature(&self, values: &[usize]) -> Vec<f32> {
        let mut feat = Vec::with_capacity(self.feature_dim());
        for (family, value) in self.families.iter().zip(values.iter()) {
            for v in 0..family.values.len() {
                feat.push(if v == *value { 1.0 } else { 0.0 });
            }
        }
        feat
    }
}

/// Ground truth emitted alongside the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub families: Vec<FamilySpec>,
    /// Per region: value index per family, in config order.
    pub region_values: BTreeMap<String, Vec<usize>>,
    /// Per pair: index of the family the two regions differ in.
    pub pair_diff_family: BTreeMap<String, usize>,
}

impl SynthTruth {
    pub fn object_family(&self) -> usize {
        self.families
            .iter()
            .position(|f| f.question.is_none())
            .expect("truth always has an object family")
    }

    pub fn questioned(&self) -> Vec<usize> {
        (0..self.families.len()).filter(|i| self.families[*i].question.is_some()).collect()
    }

    /// Gold tag of a generator-emitted description token.
    pub fn gold_tag(&self, token: &str) -> Option<&str> {
        for family in &self.families {
            for value in &family.values {
                for (t, tag) in value.attr_tokens().iter().zip(value.tags.iter()) {
                    if t == token {
                        return Some(tag.as_str());
                    }
                }
            }
        }
        None
    }

    /// Families whose value tokens occur in the expression.
    pub fn expression_families(&self, expression: &[String]) -> BTreeSet<usize> {
        let token_map = self.value_token_map();
        let mut out = BTreeSet::new();
        for token in expression {
            if let Some(fams) = token_map.get(token) {
                out.extend(fams.iter().copied());
            }
        }
        out
    }

    fn value_token_map(&self) -> HashMap<String, BTreeSet<usize>> {
        let mut map: HashMap<String, BTreeSet<usize>> = HashMap::new();
        for (fi, family) in self.families.iter().enumerate() {
            for value in &family.values {
                for canon in value.attr_tokens() {
                    map.entry(canon).or_default().insert(fi);
                }
            }
        }
        map
    }

    /// Classify a generated question into a questioned family by the template
    /// tokens that are unique to that family.
    pub fn question_family(&self, tokens: &[String]) -> Option<usize> {
        let token_set: HashSet<&str> = tokens.iter().map(|t| t.as_str()).collect();
        let questioned = self.questioned();
        let mut hit = None;
        for &fi in &questioned {
            let mine: HashSet<&str> = self.families[fi]
                .question
                .as_ref()
                .expect("questioned")
                .iter()
                .filter(|t| *t != "<obj>")
                .map(|t| t.as_str())
                .collect();
            let others: HashSet<&str> = questioned
                .iter()
                .filter(|other| **other != fi)
                .flat_map(|other| {
                    self.families[*other]
                        .question
                        .as_ref()
                        .expect("questioned")
                        .iter()
                        .filter(|t| *t != "<obj>")
                        .map(|t| t.as_str())
                })
                .collect();
            let distinctive: HashSet<&str> = mine.difference(&others).copied().collect();
            if !distinctive.is_empty() && distinctive.iter().any(|t| token_set.contains(t)) {
                if hit.is_some() {
                    return None;
                }
                hit = Some(fi);
            }
        }
        hit
    }

    /// Expected multi-hot labels for a region over the given expressions,
    /// derived from the recorded family values rather than the emitted text.
    pub fn expected_labels(&self, region_id: &str, expressions: &[Vec<String>]) -> Vec<bool> {
        let values = &self.region_values[region_id];
        // Rebuild the token streams the generator would emit for this region.
        let mut streams: Vec<Vec<String>> = Vec::new();
        let mut description = Vec::new();
        for (fi, family) in self.families.iter().enumerate() {
            description.extend(family.values[values[fi]].attr_tokens());
        }
        streams.push(description);
        for fi in self.questioned() {
            streams.push(self.families[fi].values[values[fi]].attr_tokens());
        }
        expressions
            .iter()
            .map(|expr| streams.iter().any(|s| contains_subsequence(s, expr)))
            .collect()
    }
}

pub fn contains_subsequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Generate the synthetic corpus: per image two regions sharing everything
/// but one questioned family, questions from per-family templates, and rated
/// references marking the differing family's question strong-positive.
pub fn synth_microworld(config: &SynthConfig, seed: u64) -> Result<(CorpusStore, SynthTruth)> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut store = CorpusStore::new(config.feature_dim());
    let mut truth = SynthTruth {
        families: config.families.clone(),
        region_values: BTreeMap::new(),
        pair_diff_family: BTreeMap::new(),
    };

    let object_family = config.object_family();
    let questioned = config.questioned();
    let (img_w, img_h) = (640.0, 480.0);

    for img in 0..config.n_images {
        let image_id = format!("i{img:05}");
        // Shared value profile, then perturb one questioned family for B.
        let mut values_a: Vec<usize> = config
            .families
            .iter()
            .map(|f| rng.gen_range(0..f.values.len()))
            .collect();
        let diff_family = questioned[rng.gen_range(0..questioned.len())];
        let n_values = config.families[diff_family].values.len();
        let mut values_b = values_a.clone();
        values_b[diff_family] = (values_a[diff_family] + rng.gen_range(1..n_values)) % n_values;
        // Canonicalize so region A always carries the lower value index; the
        // rng already decided the actual assignment.
        if values_b[diff_family] < values_a[diff_family] {
            std::mem::swap(&mut values_a, &mut values_b);
        }

        let clean_a = config.clean_feature(&values_a);
        let clean_b = config.clean_feature(&values_b);
        let clean_image: Vec<f32> =
            clean_a.iter().zip(clean_b.iter()).map(|(a, b)| (a + b) / 2.0).collect();

        let mut make_region = |suffix: &str, values: &[usize], clean: &[f32], rng: &mut ChaCha12Rng| {
            let region_id = format!("r{img:05}{suffix}");
            let object_surface = config.families[object_family].values[values[object_family]]
                .surface
                .clone();
            let feature_region = add_noise(clean, config.noise_sigma, rng);
            let feature_image = add_noise(&clean_image, config.noise_sigma, rng);
            let x_tl = rng.gen_range(0.0..img_w * 0.75);
            let x_br = rng.gen_range(x_tl + img_w * 0.05..img_w);
            let y_tl = rng.gen_range(0.0..img_h * 0.75);
            let y_br = rng.gen_range(y_tl + img_h * 0.05..img_h);
            let questions: Vec<QaPair> = questioned
                .iter()
                .map(|fi| QaPair {
                    text: config.render_question(*fi, &object_surface),
                    answer: config.families[*fi].values[values[*fi]].surface.clone(),
                })
                .collect();
            let description = config
                .families
                .iter()
                .zip(values.iter())
                .map(|(f, v)| f.values[*v].surface.clone())
                .collect::<Vec<_>>()
                .join(" ");
            truth.region_values.insert(region_id.clone(), values.to_vec());
            RegionRecord {
                region_id,
                image_id: image_id.clone(),
                bbox: [x_tl, y_tl, x_br, y_br],
                image_size: [img_w, img_h],
                feature_region,
                feature_image,
                questions,
                descriptions: vec![description],
                category: Some(object_surface),
            }
        };

        let region_a = make_region("a", &values_a, &clean_a, &mut rng);
        let region_b = make_region("b", &values_b, &clean_b, &mut rng);
        let object_surface = config.families[object_family].values[values_a[object_family]]
            .surface
            .clone();
        let region_a_id = region_a.region_id.clone();
        let region_b_id = region_b.region_id.clone();
        store.insert_region(region_a).map_err(Error::Data)?;
        store.insert_region(region_b).map_err(Error::Data)?;

        let references: Vec<RatedReference> = questioned
            .iter()
            .map(|fi| RatedReference {
                text: config.render_question(*fi, &object_surface),
                rating: if *fi == diff_family { Rating::StrongPos } else { Rating::Neg },
            })
            .collect();
        let pair_id = format!("p{img:05}");
        truth.pair_diff_family.insert(pair_id.clone(), diff_family);
        store
            .insert_pair(EvalPairRecord {
                pair_id,
                region_a: region_a_id,
                region_b: region_b_id,
                references,
            })
            .map_err(Error::Data)?;
    }

    Ok((store, truth))
}

fn add_noise(clean: &[f32], sigma: f64, rng: &mut ChaCha12Rng) -> Vec<f32> {
    if sigma == 0.0 {
        return clean.to_vec();
    }
    clean
        .iter()
        .map(|v| {
            // Box-Muller transform; keeps the dependency footprint small.
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            *v + (z * sigma) as f32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dump_corpus;

    #[test]
    fn sigma_zero_features_are_one_hot_per_family() {
        let config = SynthConfig { n_images: 20, noise_sigma: 0.0, ..Default::default() };
        let (store, truth) = synth_microworld(&config, 3).unwrap();
        for region in store.regions() {
            let values = &truth.region_values[&region.region_id];
            let mut offset = 0;
            for (fi, family) in config.families.iter().enumerate() {
                let block = &region.feature_region[offset..offset + family.values.len()];
                let argmax = block
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                assert_eq!(argmax, values[fi], "family {} of {}", family.name, region.region_id);
                offset += family.values.len();
            }
        }
    }

    #[test]
    fn differing_family_question_is_strong_positive() {
        let config = SynthConfig { n_images: 30, noise_sigma: 0.05, ..Default::default() };
        let (store, truth) = synth_microworld(&config, 5).unwrap();
        for pair in store.pairs() {
            let diff = truth.pair_diff_family[&pair.pair_id];
            let strong: Vec<&RatedReference> = pair
                .references
                .iter()
                .filter(|r| r.rating == Rating::StrongPos)
                .collect();
            assert_eq!(strong.len(), 1);
            let family = truth.question_family(&tokenize(&strong[0].text)).unwrap();
            assert_eq!(family, diff);
            // Regions differ in exactly the recorded family.
            let va = &truth.region_values[&pair.region_a];
            let vb = &truth.region_values[&pair.region_b];
            let diffs: Vec<usize> =
                (0..va.len()).filter(|i| va[*i] != vb[*i]).collect();
            assert_eq!(diffs, vec![diff]);
        }
    }

    #[test]
    fn dump_is_byte_identical_across_runs() {
        let config = SynthConfig { n_images: 50, noise_sigma: 0.05, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let mut dumps = Vec::new();
        for run in 0..2 {
            let (store, _) = synth_microworld(&config, 13).unwrap();
            let regions = dir.path().join(format!("regions{run}.jsonl"));
            let pairs = dir.path().join(format!("pairs{run}.jsonl"));
            dump_corpus(&store, &regions, &pairs).unwrap();
            dumps.push((std::fs::read(&regions).unwrap(), std::fs::read(&pairs).unwrap()));
        }
        assert_eq!(dumps[0], dumps[1]);
    }

    #[test]
    fn ingest_of_dump_reproduces_the_store() {
        let config = SynthConfig { n_images: 40, noise_sigma: 0.05, ..Default::default() };
        let (store, _) = synth_microworld(&config, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let regions = dir.path().join("regions.jsonl");
        let pairs = dir.path().join("pairs.jsonl");
        dump_corpus(&store, &regions, &pairs).unwrap();
        let (reloaded, report) =
            crate::corpus::ingest_corpus(&regions, Some(&pairs), config.feature_dim()).unwrap();
        assert_eq!(report.rejected_count(), 0);
        assert_eq!(store, reloaded);
    }

    #[test]
    fn zero_families_is_a_config_error() {
        let config = SynthConfig { n_images: 1, noise_sigma: 0.0, families: vec![] };
        assert!(matches!(synth_microworld(&config, 0), Err(Error::Config(_))));
    }

    #[test]
    fn question_family_classifies_templates() {
        let truth = synth_microworld(&SynthConfig { n_images: 1, ..Default::default() }, 0)
            .unwrap()
            .1;
        let color = truth
            .families
            .iter()
            .position(|f| f.name == "color")
            .unwrap();
        assert_eq!(truth.question_family(&tokenize("what color is the dog")), Some(color));
        assert_eq!(truth.question_family(&tokenize("the dog")), None);
    }
}

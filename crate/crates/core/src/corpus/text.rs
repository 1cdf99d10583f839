use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number words that the tokenizer folds into the merged count token.
const NUMBER_WORDS_ABOVE_ONE: [&str; 11] = [
    "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
];

/// Merged token standing in for every numeral greater than one.
pub const MORE_THAN_ONE: &str = "more_than_one";

/// Lowercase, split on whitespace and punctuation (punctuation dropped,
/// underscores kept), and rewrite numerals: anything greater than one maps to
/// [`MORE_THAN_ONE`], "1" maps to "one".
pub fn tokenize(raw: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in raw.chars() {
        if ch.is_alphanumeric() || ch == '_' {
            for lower in ch.to_lowercase() {
                current.push(lower);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens.into_iter().map(rewrite_numeral).collect()
}

fn rewrite_numeral(token: String) -> String {
    if token.chars().all(|c| c.is_ascii_digit()) && !token.is_empty() {
        return match token.parse::<u64>() {
            Ok(0) => token,
            Ok(1) => "one".to_string(),
            Ok(_) => MORE_THAN_ONE.to_string(),
            Err(_) => MORE_THAN_ONE.to_string(), // overflow: certainly > 1
        };
    }
    if NUMBER_WORDS_ABOVE_ONE.contains(&token.as_str()) {
        return MORE_THAN_ONE.to_string();
    }
    token
}

/// Token/index mapping with four fixed reserved entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    index_to_token: Vec<String>,
    #[serde(skip)]
    token_to_index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const BOS: usize = 1;
    pub const EOS: usize = 2;
    pub const UNK: usize = 3;
    pub const RESERVED: usize = 4;

    fn reserved_tokens() -> Vec<String> {
        // Angle brackets are stripped by the tokenizer, so no corpus token can
        // ever collide with a reserved entry.
        vec!["<pad>".into(), "<bos>".into(), "<eos>".into(), "<unk>".into()]
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut index_to_token = Self::reserved_tokens();
        index_to_token.extend(tokens);
        let token_to_index = index_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { index_to_token, token_to_index }
    }

    /// Rebuild the lookup map after deserialization.
    pub fn rebuild_index(&mut self) {
        self.token_to_index = self
            .index_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries always present
    }

    pub fn index_of(&self, token: &str) -> usize {
        *self.token_to_index.get(token).unwrap_or(&Self::UNK)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.index_to_token[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    pub fn non_reserved(&self) -> &[String] {
        &self.index_to_token[Self::RESERVED..]
    }

    pub fn encode_content(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t)).collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<String> {
        indices.iter().map(|i| self.index_to_token[*i].clone()).collect()
    }
}

/// Keep tokens with frequency >= `min_freq`; everything else maps to the
/// unknown marker. Entry order: frequency descending, then lexicographic.
pub fn build_vocab<'a, I>(token_lists: I, min_freq: usize) -> Vocabulary
where
    I: IntoIterator<Item = &'a Vec<String>>,
{
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for list in token_lists {
        for token in list {
            *freq.entry(token.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> =
        freq.into_iter().filter(|(_, c)| *c >= min_freq).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()).collect())
}

/// Marker-wrapped index sequence: starts with BOS, ends with EOS, at most
/// `max_len` content tokens in between.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSequence {
    pub tokens: Vec<usize>,
}

impl QuestionSequence {
    pub fn encode(vocab: &Vocabulary, content: &[String], max_len: usize) -> Self {
        let mut tokens = Vec::with_capacity(content.len().min(max_len) + 2);
        tokens.push(Vocabulary::BOS);
        for t in content.iter().take(max_len) {
            tokens.push(vocab.index_of(t));
        }
        tokens.push(Vocabulary::EOS);
        Self { tokens }
    }

    pub fn content(&self) -> &[usize] {
        &self.tokens[1..self.tokens.len() - 1]
    }

    pub fn content_len(&self) -> usize {
        self.tokens.len() - 2
    }

    pub fn validate(&self, max_len: usize) -> Result<()> {
        if self.tokens.len() < 2
            || self.tokens[0] != Vocabulary::BOS
            || *self.tokens.last().expect("nonempty") != Vocabulary::EOS
        {
            return Err(Error::Schema("question sequence must be BOS..EOS wrapped".into()));
        }
        if self.content().iter().any(|t| *t == Vocabulary::BOS || *t == Vocabulary::EOS) {
            return Err(Error::Schema("interior marker token in question sequence".into()));
        }
        if self.content_len() > max_len {
            return Err(Error::Schema(format!(
                "question content length {} exceeds max {max_len}",
                self.content_len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_drops_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("What color is his shirt?"),
            vec!["what", "color", "is", "his", "shirt"]
        );
    }

    #[test]
    fn tokenize_empty_string() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn tokenize_rewrites_numerals() {
        assert_eq!(tokenize("three dogs"), vec![MORE_THAN_ONE, "dogs"]);
        assert_eq!(tokenize("1 dog"), vec!["one", "dog"]);
        assert_eq!(tokenize("42 dogs"), vec![MORE_THAN_ONE, "dogs"]);
        assert_eq!(tokenize("more_than_one dog"), vec![MORE_THAN_ONE, "dog"]);
    }

    #[test]
    fn vocab_min_freq_filters() {
        let lists = vec![tokenize("a b"), tokenize("b c")];
        let vocab = build_vocab(&lists, 2);
        assert_eq!(vocab.non_reserved(), &["b".to_string()]);
        assert_eq!(vocab.index_of("a"), Vocabulary::UNK);
        assert_eq!(vocab.index_of("c"), Vocabulary::UNK);
        assert_eq!(vocab.index_of("b"), Vocabulary::RESERVED);
    }

    #[test]
    fn vocab_is_bijective_over_non_reserved() {
        let lists = vec![tokenize("red blue green red blue red")];
        let vocab = build_vocab(&lists, 1);
        for (i, t) in vocab.tokens().iter().enumerate() {
            assert_eq!(vocab.index_of(t), i);
        }
    }

    #[test]
    fn question_sequence_wraps_and_truncates() {
        let vocab = build_vocab(&vec![tokenize("a b c d e")], 1);
        let content = tokenize("a b c d e");
        let seq = QuestionSequence::encode(&vocab, &content, 3);
        assert_eq!(seq.tokens[0], Vocabulary::BOS);
        assert_eq!(*seq.tokens.last().unwrap(), Vocabulary::EOS);
        assert_eq!(seq.content_len(), 3);
        seq.validate(3).unwrap();
    }
}

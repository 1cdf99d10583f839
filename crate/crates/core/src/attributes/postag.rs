use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// The coarse tag set used by the attribute-pattern rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PosTag {
    Nn,
    Jj,
    Vb,
    Cd,
    In,
    Other,
}

impl PosTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Nn => "NN",
            PosTag::Jj => "JJ",
            PosTag::Vb => "VB",
            PosTag::Cd => "CD",
            PosTag::In => "IN",
            PosTag::Other => "OTHER",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "NN" => Some(PosTag::Nn),
            "JJ" => Some(PosTag::Jj),
            "VB" => Some(PosTag::Vb),
            "CD" => Some(PosTag::Cd),
            "IN" => Some(PosTag::In),
            "OTHER" => Some(PosTag::Other),
            _ => None,
        }
    }
}

const PREPOSITIONS: &[&str] = &[
    "about", "above", "across", "after", "against", "along", "among", "around", "at", "before",
    "behind", "below", "beneath", "beside", "between", "by", "down", "during", "for", "from", "in",
    "inside", "into", "near", "of", "off", "on", "onto", "outside", "over", "past", "through",
    "to", "toward", "under", "underneath", "up", "upon", "with", "within", "without",
];

const ADJECTIVES: &[&str] = &[
    "red", "blue", "green", "white", "black", "yellow", "brown", "gray", "grey", "orange", "pink",
    "purple", "big", "small", "large", "little", "old", "young", "new", "tall", "short", "long",
    "wooden", "metal", "plastic", "dark", "light", "bright", "dirty", "clean", "empty", "full",
    "open", "closed", "happy", "sad", "wet", "dry", "hot", "cold", "round", "square", "striped",
];

const VERBS: &[&str] = &[
    "wear", "stand", "hold", "sit", "look", "play", "run", "walk", "jump", "eat", "drink", "ride",
    "fly", "swim", "sleep", "talk", "read", "write", "hit", "throw", "catch", "kick", "smile",
    "wave", "lie", "lean", "hang", "carry", "pull", "push", "watch", "surf", "ski", "skate",
];

const NUMERALS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "more_than_one", "zero",
];

const NOUNS: &[&str] = &[
    "man", "woman", "person", "people", "boy", "girl", "kid", "child", "table", "shirt", "ball",
    "car", "dog", "cat", "chair", "left", "right", "top", "bottom", "front", "back", "side",
    "middle", "background", "foreground", "field", "court", "grass", "tree", "building", "street",
    "road", "sign", "train", "track", "plate", "bear", "game", "video", "tennis", "baseball",
    "player", "hat", "jacket", "bench", "horse", "bird", "food", "water", "glass", "cup",
    "bottle", "bag", "phone", "book", "clock", "window", "door", "wall", "floor", "ground",
    "sky", "cloud", "sun", "hand", "head", "hair", "face", "room", "kitchen", "bathroom", "bed",
    "couch", "desk", "computer", "keyboard", "laptop", "screen", "bus", "truck", "bike",
    "bicycle", "motorcycle", "boat", "plane", "umbrella", "surfboard", "skateboard", "kite",
    "racket", "bat", "glove", "helmet", "color", "colour", "shoe", "sock", "pant", "dress",
    "coat", "cap", "fence", "flower", "plant", "leaf", "rock", "sand", "beach", "ocean", "river",
    "mountain", "snow",
];

const FUNCTION_WORDS: &[&str] = &[
    "what", "who", "where", "when", "why", "how", "which", "whose", "many", "much", "there",
    "here", "and", "or", "not", "no", "yes", "very", "some", "any", "the", "a", "an", "this",
    "that", "these", "those", "his", "her", "its", "their", "my", "your", "our", "he", "she",
    "it", "they", "we", "you", "i", "is", "are", "was", "were", "be", "been", "being", "am",
    "do", "does", "did", "can", "could", "will", "would", "has", "have", "had", "as", "but",
    "if", "so", "than", "then", "them", "him", "me", "us", "all", "both", "each", "other",
];

fn lexicon() -> &'static HashMap<&'static str, PosTag> {
    static LEXICON: OnceLock<HashMap<&'static str, PosTag>> = OnceLock::new();
    LEXICON.get_or_init(|| {
        let mut map = HashMap::new();
        // Later inserts win; order the open classes first so closed-class
        // words always keep their function-word reading.
        for w in NOUNS {
            map.insert(*w, PosTag::Nn);
        }
        for w in ADJECTIVES {
            map.insert(*w, PosTag::Jj);
        }
        for w in VERBS {
            map.insert(*w, PosTag::Vb);
        }
        for w in NUMERALS {
            map.insert(*w, PosTag::Cd);
        }
        for w in PREPOSITIONS {
            map.insert(*w, PosTag::In);
        }
        for w in FUNCTION_WORDS {
            map.insert(*w, PosTag::Other);
        }
        map
    })
}

/// Deterministic per-token tagger: bundled lexicon first, then suffix rules,
/// defaulting to NN like classic baseline taggers.
pub fn pos_tag_lite(tokens: &[String]) -> Vec<PosTag> {
    tokens.iter().map(|t| tag_token(t)).collect()
}

fn tag_token(token: &str) -> PosTag {
    if let Some(tag) = lexicon().get(token) {
        return *tag;
    }
    if token.chars().all(|c| c.is_ascii_digit()) && !token.is_empty() {
        return PosTag::Cd;
    }
    if token.len() > 4 && (token.ends_with("ing") || token.ends_with("ed")) {
        return PosTag::Vb;
    }
    if token.len() > 3 && token.ends_with("ly") {
        return PosTag::Other;
    }
    if token.len() > 4
        && (token.ends_with("ful")
            || token.ends_with("ous")
            || token.ends_with("ish")
            || token.ends_with("able")
            || token.ends_with("est"))
    {
        return PosTag::Jj;
    }
    PosTag::Nn
}

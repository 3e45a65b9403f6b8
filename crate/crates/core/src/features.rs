//! Token-in-context featurization.
//!
//! A token's vector has three blocks:
//!
//! * hashed character n-grams of the token itself, tagged `T|`;
//! * hashed character n-grams of each neighbor within `±context_window`,
//!   tagged with the signed offset (`C-1|`, `C+2|`, ...);
//! * seven handcrafted markers of the target token, stored after the hash
//!   buckets at indices `hash_dim..hash_dim + 7`.
//!
//! Gram strings are hashed with 64-bit FNV-1a and reduced modulo `hash_dim`.
//! Colliding grams add their counts.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labels::{LabeledCorpus, TaskView};
use crate::sparse::SparseVector;

/// Number of handcrafted markers appended after the hash buckets.
pub const HANDCRAFTED_LEN: usize = 7;

/// Function words for the `is_function_word` marker.
pub const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "can", "could", "did", "do", "does", "for",
    "from", "had", "has", "have", "he", "her", "him", "his", "i", "in", "is", "it", "its", "me", "my", "no",
    "not", "of", "on", "or", "our", "she", "so", "that", "the", "their", "them", "then", "there", "they",
    "this", "to", "up", "was", "we", "were", "will", "with", "would", "you", "your",
];

const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub use_token_char: bool,
    pub use_context_char: bool,
    pub use_handcrafted: bool,
    pub context_window: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub hash_bits: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::baseline()
    }
}

impl FeatureConfig {
    pub fn baseline() -> Self {
        Self {
            use_token_char: true,
            use_context_char: true,
            use_handcrafted: true,
            context_window: 1,
            ngram_min: 1,
            ngram_max: 3,
            hash_bits: 18,
        }
    }

    pub fn all_off() -> Self {
        Self {
            use_token_char: false,
            use_context_char: false,
            use_handcrafted: false,
            context_window: 0,
            ..Self::baseline()
        }
    }

    pub fn hash_dim(&self) -> usize {
        1usize << self.hash_bits
    }

    /// Total dimensionality: hash buckets plus the handcrafted block.
    pub fn dim(&self) -> usize {
        self.hash_dim() + HANDCRAFTED_LEN
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_window > 2 {
            return Err(Error::InvalidConfig(format!(
                "context_window must be 0, 1 or 2, got {}",
                self.context_window
            )));
        }
        if !(10..=26).contains(&self.hash_bits) {
            return Err(Error::InvalidConfig(format!(
                "hash_bits must be in 10..=26, got {}",
                self.hash_bits
            )));
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(Error::InvalidConfig(format!(
                "bad n-gram range {}..={}",
                self.ngram_min, self.ngram_max
            )));
        }
        Ok(())
    }

    /// Flat `key = value` document.
    pub fn to_document(&self) -> String {
        toml::to_string(self).expect("flat struct serializes")
    }

    pub fn from_document(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_document`].
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_document().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The seven handcrafted markers of one token.
#[derive(Debug, Clone, PartialEq)]
pub struct HandcraftedBlock {
    pub token_length: f64,
    pub is_function_word: bool,
    pub contains_digit: bool,
    pub vowel_ratio: f64,
    pub repeats_previous: bool,
    pub utterance_position: f64,
    pub is_single_char: bool,
}

impl HandcraftedBlock {
    pub fn compute(utterance: &[&str], target: usize) -> Self {
        let surface = utterance[target];
        let n_chars = surface.chars().count();
        let vowels = surface.chars().filter(|c| VOWELS.contains(c)).count();
        Self {
            token_length: n_chars as f64,
            is_function_word: FUNCTION_WORDS.binary_search(&surface).is_ok(),
            contains_digit: surface.chars().any(|c| c.is_ascii_digit()),
            vowel_ratio: if n_chars == 0 {
                0.0
            } else {
                vowels as f64 / n_chars as f64
            },
            repeats_previous: target > 0 && utterance[target - 1] == surface,
            utterance_position: if utterance.len() > 1 {
                target as f64 / (utterance.len() - 1) as f64
            } else {
                0.0
            },
            is_single_char: n_chars == 1,
        }
    }

    pub fn values(&self) -> [f64; HANDCRAFTED_LEN] {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        [
            self.token_length,
            flag(self.is_function_word),
            flag(self.contains_digit),
            self.vowel_ratio,
            flag(self.repeats_previous),
            self.utterance_position,
            flag(self.is_single_char),
        ]
    }
}

/// All contiguous character substrings of length `n_min..=n_max`, as a
/// multiset (repeats kept), shortest first.
pub fn char_ngrams(surface: &str, n_min: usize, n_max: usize) -> Vec<String> {
    let chars: Vec<char> = surface.chars().collect();
    let mut grams = Vec::new();
    for n in n_min..=n_max.min(chars.len()) {
        for window in chars.windows(n) {
            grams.push(window.iter().collect());
        }
    }
    grams
}

fn add_grams(pairs: &mut Vec<(u32, f64)>, tag: &str, surface: &str, cfg: &FeatureConfig) {
    let mask = (cfg.hash_dim() - 1) as u64;
    let mut buf = Vec::with_capacity(tag.len() + 16);
    for gram in char_ngrams(surface, cfg.ngram_min, cfg.ngram_max) {
        buf.clear();
        buf.extend_from_slice(tag.as_bytes());
        buf.push(b'|');
        buf.extend_from_slice(gram.as_bytes());
        pairs.push(((fnv1a64(&buf) & mask) as u32, 1.0));
    }
}

/// Feature vector of `utterance[target]` under `cfg`.
pub fn featurize(utterance: &[&str], target: usize, cfg: &FeatureConfig) -> SparseVector {
    assert!(target < utterance.len(), "target index out of range");
    let mut pairs = Vec::new();
    if cfg.use_token_char {
        add_grams(&mut pairs, "T", utterance[target], cfg);
    }
    if cfg.use_context_char {
        let w = cfg.context_window as isize;
        for offset in (-w..=w).filter(|&o| o != 0) {
            let pos = target as isize + offset;
            if pos < 0 || pos >= utterance.len() as isize {
                continue;
            }
            add_grams(&mut pairs, &format!("C{offset:+}"), utterance[pos as usize], cfg);
        }
    }
    if cfg.use_handcrafted {
        let block = HandcraftedBlock::compute(utterance, target);
        let base = cfg.hash_dim() as u32;
        pairs.extend(
            block
                .values()
                .into_iter()
                .enumerate()
                .map(|(k, v)| (base + k as u32, v)),
        );
    }
    SparseVector::from_pairs(cfg.dim(), pairs).expect("indices bounded by dim")
}

/// Feature matrix of one task view.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vectors: Vec<SparseVector>,
    pub targets: Vec<bool>,
    pub groups: Vec<String>,
    /// Corpus indices of the instances.
    pub instances: Vec<usize>,
    pub dim: usize,
    pub fingerprint: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Looks up the utterance of every corpus token.
pub struct ContextIndex<'a> {
    surfaces: Vec<&'a str>,
    /// (utterance start, position within utterance) per corpus token
    position: Vec<(usize, usize)>,
    span_end: Vec<usize>,
}

impl<'a> ContextIndex<'a> {
    pub fn new(corpus: &'a LabeledCorpus) -> Self {
        let surfaces: Vec<&str> = corpus.tokens().iter().map(|t| t.surface.as_str()).collect();
        let mut position = vec![(0, 0); surfaces.len()];
        let mut span_end = vec![0; surfaces.len()];
        for span in corpus.utterance_spans() {
            for i in span.clone() {
                position[i] = (span.start, i - span.start);
                span_end[i] = span.end;
            }
        }
        Self {
            surfaces,
            position,
            span_end,
        }
    }

    /// Utterance surfaces and target position of corpus token `i`.
    pub fn context(&self, i: usize) -> (&[&'a str], usize) {
        let (start, pos) = self.position[i];
        (&self.surfaces[start..self.span_end[i]], pos)
    }

    pub fn featurize(&self, i: usize, cfg: &FeatureConfig) -> SparseVector {
        let (utt, pos) = self.context(i);
        featurize(utt, pos, cfg)
    }
}

pub fn featurize_dataset(corpus: &LabeledCorpus, view: &TaskView, cfg: &FeatureConfig) -> Result<Dataset> {
    if view.is_empty() {
        return Err(Error::EmptyTask {
            task: view.task.to_string(),
        });
    }
    cfg.validate()?;
    let index = ContextIndex::new(corpus);
    Ok(Dataset {
        vectors: view.instances.iter().map(|&i| index.featurize(i, cfg)).collect(),
        targets: view.targets.clone(),
        groups: view.groups.clone(),
        instances: view.instances.clone(),
        dim: cfg.dim(),
        fingerprint: cfg.fingerprint(),
    })
}

/// The six ablation arms, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ablation {
    Baseline,
    NoTokenChar,
    NoContextChar,
    NoHandcrafted,
    NoContextWindow,
    Ctx2,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::Baseline,
        Ablation::NoTokenChar,
        Ablation::NoContextChar,
        Ablation::NoHandcrafted,
        Ablation::NoContextWindow,
        Ablation::Ctx2,
    ];

    /// Column title in the ablation tables.
    pub fn title(self) -> &'static str {
        match self {
            Ablation::Baseline => "Baseline",
            Ablation::NoTokenChar => "-Token Char",
            Ablation::NoContextChar => "-Context Char",
            Ablation::NoHandcrafted => "-Handcrafted",
            Ablation::NoContextWindow => "-Context Window",
            Ablation::Ctx2 => "+Ctx 2",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Ablation::Baseline => "baseline",
            Ablation::NoTokenChar => "-token_char",
            Ablation::NoContextChar => "-context_char",
            Ablation::NoHandcrafted => "-handcrafted",
            Ablation::NoContextWindow => "-context_window",
            Ablation::Ctx2 => "+ctx2",
        }
    }

    pub fn parse(s: &str) -> Option<Ablation> {
        Ablation::ALL.into_iter().find(|a| a.slug() == s)
    }

    /// Applies this arm to a baseline configuration.
    pub fn apply(self, base: &FeatureConfig) -> FeatureConfig {
        let mut cfg = base.clone();
        match self {
            Ablation::Baseline => {}
            Ablation::NoTokenChar => cfg.use_token_char = false,
            Ablation::NoContextChar => cfg.use_context_char = false,
            Ablation::NoHandcrafted => cfg.use_handcrafted = false,
            Ablation::NoContextWindow => cfg.context_window = 0,
            Ablation::Ctx2 => cfg.context_window = 2,
        }
        cfg
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{task_view, LabeledToken, Task};
    use proptest::prelude::*;

    const EXAMPLE: [&str; 7] = ["bog", "dog", "chased", "a", "up", "a", "tree"];

    /// Exhaustive substring enumeration by start/end positions.
    fn substrings(s: &str, n_min: usize, n_max: usize) -> Vec<String> {
        let chars: Vec<char> = s.chars().collect();
        let mut out = Vec::new();
        for start in 0..chars.len() {
            for end in start + 1..=chars.len() {
                let n = end - start;
                if n >= n_min && n <= n_max {
                    out.push(chars[start..end].iter().collect());
                }
            }
        }
        out.sort();
        out
    }

    fn sorted(mut v: Vec<String>) -> Vec<String> {
        v.sort();
        v
    }

    #[test]
    fn ngrams_match_enumeration() {
        assert_eq!(sorted(char_ngrams("dog", 1, 3)), substrings("dog", 1, 3));
        assert_eq!(char_ngrams("dog", 1, 3).len(), 6);
        assert_eq!(char_ngrams("a", 1, 3), ["a"]);
        assert_eq!(sorted(char_ngrams("oo", 1, 2)), ["o", "o", "oo"]);
    }

    #[test]
    fn function_words_sorted_for_binary_search() {
        assert!(FUNCTION_WORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn all_off_is_empty() {
        assert_eq!(featurize(&EXAMPLE, 1, &FeatureConfig::all_off()).nnz(), 0);
    }

    fn hashed(tag: &str, gram: &str, cfg: &FeatureConfig) -> u32 {
        (fnv1a64(format!("{tag}|{gram}").as_bytes()) & (cfg.hash_dim() as u64 - 1)) as u32
    }

    #[test]
    fn baseline_includes_both_neighbors() {
        let cfg = FeatureConfig::baseline();
        let v = featurize(&EXAMPLE, 1, &cfg);
        assert!(v.get(hashed("C-1", "bog", &cfg)) > 0.0);
        assert!(v.get(hashed("C+1", "cha", &cfg)) > 0.0);
        assert!(v.get(hashed("T", "dog", &cfg)) > 0.0);
        assert_eq!(v.get(hashed("C+2", "a", &cfg)), 0.0);
    }

    #[test]
    fn window_two_at_utterance_start() {
        let cfg = Ablation::Ctx2.apply(&FeatureConfig::baseline());
        let v = featurize(&EXAMPLE, 0, &cfg);
        assert!(v.get(hashed("C+1", "dog", &cfg)) > 0.0);
        assert!(v.get(hashed("C+2", "sed", &cfg)) > 0.0);
        let only_ctx = FeatureConfig {
            use_token_char: false,
            use_handcrafted: false,
            ..cfg.clone()
        };
        let left_only = featurize(&EXAMPLE[..1], 0, &only_ctx);
        assert_eq!(left_only.nnz(), 0);
    }

    #[test]
    fn context_char_off_equals_window_zero() {
        let base = FeatureConfig::baseline();
        let a = Ablation::NoContextChar.apply(&base);
        let b = Ablation::NoContextWindow.apply(&base);
        for i in 0..EXAMPLE.len() {
            assert_eq!(featurize(&EXAMPLE, i, &a), featurize(&EXAMPLE, i, &b));
        }
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn handcrafted_block_values() {
        let b = HandcraftedBlock::compute(&["the", "cat", "cat", "a1"], 2);
        assert_eq!(b.token_length, 3.0);
        assert!(!b.is_function_word);
        assert!(b.repeats_previous);
        assert!((b.vowel_ratio - 1.0 / 3.0).abs() < 1e-15);
        assert!((b.utterance_position - 2.0 / 3.0).abs() < 1e-15);
        let d = HandcraftedBlock::compute(&["the", "cat", "cat", "a1"], 3);
        assert!(d.contains_digit);
        assert_eq!(d.utterance_position, 1.0);
        let s = HandcraftedBlock::compute(&["a"], 0);
        assert!(s.is_single_char && s.is_function_word);
        assert_eq!(s.utterance_position, 0.0);
    }

    #[test]
    fn document_roundtrip_and_fingerprint() {
        let cfg = Ablation::Ctx2.apply(&FeatureConfig::baseline());
        let back = FeatureConfig::from_document(&cfg.to_document()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
        assert_eq!(cfg.fingerprint().len(), 16);
        let bad = FeatureConfig {
            context_window: 3,
            ..cfg
        };
        assert!(FeatureConfig::from_document(&bad.to_document()).is_err());
    }

    #[test]
    fn dataset_determinism_and_size() {
        let toks = EXAMPLE
            .iter()
            .enumerate()
            .map(|(i, s)| LabeledToken {
                transcript_id: "t1".into(),
                utterance_index: 0,
                token_index: i,
                surface: s.to_string(),
                word: true,
                ciu: i != 0 && i != 3,
            })
            .collect();
        let corpus = LabeledCorpus::new(toks).unwrap();
        let view = task_view(&corpus, Task::Ciu).unwrap();
        let cfg = FeatureConfig::baseline();
        let a = featurize_dataset(&corpus, &view, &cfg).unwrap();
        let b = featurize_dataset(&corpus, &view, &cfg).unwrap();
        assert_eq!(a.len(), 7);
        assert_eq!(a, b);
        assert_eq!(a.fingerprint, cfg.fingerprint());
    }

    fn arb_utterance() -> impl Strategy<Value = (Vec<String>, usize)> {
        proptest::collection::vec("[a-z0-9']{1,8}", 1..8).prop_flat_map(|u| {
            let n = u.len();
            (Just(u), 0..n)
        })
    }

    proptest! {
        #[test]
        fn ablations_are_subsets_of_baseline((utt, i) in arb_utterance()) {
            let refs: Vec<&str> = utt.iter().map(String::as_str).collect();
            let base = FeatureConfig { hash_bits: 12, ..FeatureConfig::baseline() };
            let full = featurize(&refs, i, &base);
            for arm in [Ablation::NoTokenChar, Ablation::NoContextChar, Ablation::NoHandcrafted, Ablation::NoContextWindow] {
                let v = featurize(&refs, i, &arm.apply(&base));
                prop_assert!(v.support_subset_of(&full));
            }
            prop_assert!(full.support_subset_of(&featurize(&refs, i, &Ablation::Ctx2.apply(&base))));
        }

        #[test]
        fn window_zero_equals_context_off((utt, i) in arb_utterance(), w in 0usize..3) {
            let refs: Vec<&str> = utt.iter().map(String::as_str).collect();
            let zero = FeatureConfig { context_window: 0, ..FeatureConfig::baseline() };
            let off = FeatureConfig { use_context_char: false, context_window: w, ..FeatureConfig::baseline() };
            prop_assert_eq!(featurize(&refs, i, &zero), featurize(&refs, i, &off));
        }

        #[test]
        fn no_zero_entries_and_bounded((utt, i) in arb_utterance()) {
            let refs: Vec<&str> = utt.iter().map(String::as_str).collect();
            let cfg = FeatureConfig::baseline();
            let v = featurize(&refs, i, &cfg);
            prop_assert!(v.values().iter().all(|&x| x != 0.0));
            prop_assert!(v.indices().iter().all(|&k| (k as usize) < cfg.dim()));
            let block = HandcraftedBlock::compute(&refs, i);
            prop_assert!((0.0..=1.0).contains(&block.vowel_ratio));
            prop_assert!((0.0..=1.0).contains(&block.utterance_position));
        }
    }
}

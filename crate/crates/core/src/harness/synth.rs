//! Synthetic picture-description corpus with known WORD/CIU labels.
//!
//! This is test scaffolding, not a model of aphasic speech. Each transcript
//! retells a cat-in-a-tree story with a severity level that sets how often
//! the speaker produces:
//!
//! * non-words built from a syllable set rich in `z`, `x`, `q` and `j`
//!   (WORD = 0), sometimes followed by the intended word;
//! * real-word substitutions such as `hat` for `cat` (CIU = 0);
//! * off-topic utterances (every token CIU = 0);
//! * immediate repetitions, marked `[/]` (the repeat is CIU = 0);
//! * fillers, `&` fragments, `xxx` and pauses, which the cleaner removes.
//!
//! The story vocabulary avoids `z`, `x`, `q` and `j`, so lexicality is
//! separable from spelling alone. About 4% of word tokens get a flipped CIU
//! label to model coder disagreement.

use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::chat::{tokenize_corpus, Cleaner, RawChatFile};
use crate::classifiers::rng_for;
use crate::error::{Error, Result};
use crate::labels::{join_tokens_labels, LabeledCorpus, LabeledToken};

const STORY: &[&str] = &[
    "the little girl was riding her bike",
    "she saw her cat up in the tree",
    "the cat climbed up the tree",
    "the cat is stuck in the tree",
    "the girl is crying for her cat",
    "her dad climbed up the ladder",
    "dad tried to get the cat down",
    "the dog was barking at the tree",
    "the dog chased the cat up the tree",
    "then dad got stuck in the tree too",
    "the ladder fell down on the grass",
    "somebody called the fire department",
    "the firemen came with a long ladder",
    "the firemen will rescue the cat and the dad",
    "a bird is singing on the branch",
    "the girl holds out her arms",
    "the cat is scared",
    "the dog is running around the tree",
];

const TANGENT: &[&str] = &[
    "i had a cat like that one",
    "my wife does not like dogs",
    "i do not know what that is",
    "oh boy this is hard",
    "i used to climb trees when i was little",
    "that reminds me of my house",
    "what do you call that thing",
    "i can not say it",
    "my son has a bike",
    "we had a big tree at home",
];

/// Real-word substitutions: intended word, produced word.
const SUBSTITUTIONS: &[(&str, &str)] = &[
    ("cat", "hat"),
    ("dog", "bog"),
    ("tree", "free"),
    ("ladder", "letter"),
    ("girl", "curl"),
    ("bird", "word"),
    ("dad", "bad"),
    ("bike", "hike"),
];

const NONWORD_SYLLABLES: &[&str] = &[
    "zo", "xa", "qui", "jel", "zix", "quo", "jaz", "xem", "zu", "jo", "qex", "zaj",
];

/// Removed by the cleaner; never become tokens.
const NOISE: &[&str] = &["uh", "um", "er", "&uh", "&=laughs", "&-um", "xxx", "(.)", "(1.5)"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Mild,
    Moderate,
    Severe,
}

/// Per-token (or per-utterance for `tangent`) event probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub nonword: f64,
    pub tangent: f64,
    pub repetition: f64,
    pub substitution: f64,
    pub noise: f64,
}

impl Severity {
    pub fn rates(self) -> Rates {
        match self {
            Severity::Mild => Rates {
                nonword: 0.01,
                tangent: 0.06,
                repetition: 0.02,
                substitution: 0.02,
                noise: 0.05,
            },
            Severity::Moderate => Rates {
                nonword: 0.03,
                tangent: 0.12,
                repetition: 0.05,
                substitution: 0.04,
                noise: 0.10,
            },
            Severity::Severe => Rates {
                nonword: 0.07,
                tangent: 0.22,
                repetition: 0.08,
                substitution: 0.07,
                noise: 0.18,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub transcripts: usize,
    pub min_utterances: usize,
    pub max_utterances: usize,
    /// Probabilities of mild and moderate; the rest is severe.
    pub mild_share: f64,
    pub moderate_share: f64,
    pub ciu_noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 42,
            transcripts: 50,
            min_utterances: 22,
            max_utterances: 34,
            mild_share: 0.4,
            moderate_share: 0.4,
            ciu_noise: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub files: Vec<RawChatFile>,
    pub labels: LabeledCorpus,
}

struct Tok {
    surface: String,
    word: bool,
    ciu: bool,
    /// Raw CHAT pieces written before the token.
    before: Vec<String>,
}

impl Tok {
    fn new(surface: impl Into<String>, word: bool, ciu: bool) -> Self {
        Self {
            surface: surface.into(),
            word,
            ciu,
            before: Vec::new(),
        }
    }
}

fn nonword(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=3);
    (0..n)
        .map(|_| *NONWORD_SYLLABLES.choose(rng).expect("non-empty"))
        .collect()
}

fn story_utterance(rng: &mut ChaCha8Rng, r: &Rates) -> Vec<Tok> {
    let mut toks = Vec::new();
    for w in STORY.choose(rng).expect("non-empty").split(' ') {
        if rng.random_bool(r.nonword) {
            toks.push(Tok::new(nonword(rng), false, false));
            if rng.random_bool(0.5) {
                toks.push(Tok::new(w, true, true));
            }
            continue;
        }
        if let Some(&(_, wrong)) = SUBSTITUTIONS.iter().find(|(right, _)| *right == w) {
            if rng.random_bool(r.substitution * 4.0) {
                toks.push(Tok::new(wrong, true, false));
                continue;
            }
        }
        toks.push(Tok::new(w, true, true));
        if rng.random_bool(r.repetition) {
            let mut rep = Tok::new(w, true, false);
            rep.before.push("[/]".into());
            toks.push(rep);
        }
    }
    toks
}

fn tangent_utterance(rng: &mut ChaCha8Rng) -> Vec<Tok> {
    TANGENT
        .choose(rng)
        .expect("non-empty")
        .split(' ')
        .map(|w| Tok::new(w, true, false))
        .collect()
}

fn severity(rng: &mut ChaCha8Rng, p: &SynthParams) -> Severity {
    let u: f64 = rng.random();
    if u < p.mild_share {
        Severity::Mild
    } else if u < p.mild_share + p.moderate_share {
        Severity::Moderate
    } else {
        Severity::Severe
    }
}

/// CHAT main-tier text for `toks`, wrapped onto a continuation line when long.
fn tier_lines(rng: &mut ChaCha8Rng, toks: &[Tok], r: &Rates) -> Vec<String> {
    let mut pieces: Vec<String> = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if rng.random_bool(r.noise) {
            pieces.push((*NOISE.choose(rng).expect("non-empty")).to_string());
        }
        pieces.extend(t.before.iter().cloned());
        let mut s = t.surface.clone();
        if i == 0 && rng.random_bool(0.3) {
            s[..1].make_ascii_uppercase();
        }
        pieces.push(s);
    }
    pieces.push(if rng.random_bool(0.1) { "?" } else { "." }.into());
    if pieces.len() > 9 {
        let mid = pieces.len() / 2;
        vec![
            format!("*PAR:\t{}", pieces[..mid].join(" ")),
            format!("\t{}", pieces[mid..].join(" ")),
        ]
    } else {
        vec![format!("*PAR:\t{}", pieces.join(" "))]
    }
}

/// Generates the corpus and checks that cleaning the CHAT text yields
/// exactly the labeled surfaces.
pub fn generate(params: &SynthParams) -> Result<SynthCorpus> {
    if params.transcripts < 2 || params.min_utterances == 0 || params.min_utterances > params.max_utterances {
        return Err(Error::InvalidConfig(format!(
            "bad synthetic corpus parameters {params:?}"
        )));
    }
    let mut rng = rng_for(params.seed, 0);
    let mut files = Vec::new();
    let mut labels = Vec::new();
    for n in 0..params.transcripts {
        let id = format!("synth{:03}", n + 1);
        let sev = severity(&mut rng, params);
        let rates = sev.rates();
        let mut lines = vec![
            "@UTF8".to_string(),
            "@Begin".into(),
            "@Languages:\teng".into(),
            "@Participants:\tPAR Participant, INV Investigator".into(),
            "@ID:\teng|synth|PAR|||||Participant|||".into(),
            format!("@Comment:\tsynthetic story retelling, severity {}", sev.name()),
            "@G:\tCat".into(),
            "*INV:\tcan you tell me the story ?".into(),
        ];
        let utterances = rng.random_range(params.min_utterances..=params.max_utterances);
        for u in 0..utterances {
            let mut toks = if rng.random_bool(rates.tangent) {
                tangent_utterance(&mut rng)
            } else {
                story_utterance(&mut rng, &rates)
            };
            for t in toks.iter_mut().filter(|t| t.word) {
                if rng.random_bool(params.ciu_noise) {
                    t.ciu = !t.ciu;
                }
            }
            lines.extend(tier_lines(&mut rng, &toks, &rates));
            if rng.random_bool(0.1) {
                lines.push("%com:\tpoints to the picture".into());
            }
            if rng.random_bool(0.15) {
                lines.push("*INV:\tmhm .".into());
            }
            labels.extend(toks.into_iter().enumerate().map(|(i, t)| LabeledToken {
                transcript_id: id.clone(),
                utterance_index: u,
                token_index: i,
                surface: t.surface,
                word: t.word,
                ciu: t.ciu,
            }));
        }
        lines.push("@End".into());
        files.push(RawChatFile::new(format!("{id}.cha"), lines));
    }
    let labels = LabeledCorpus::new(labels)?;

    let cleaner = Cleaner::default();
    let transcripts = files
        .iter()
        .map(|f| cleaner.parse_chat(f))
        .collect::<Result<Vec<_>>>()?;
    join_tokens_labels(&tokenize_corpus(&transcripts), &labels)?;
    Ok(SynthCorpus { files, labels })
}

impl SynthCorpus {
    /// Writes `dir/cha/<id>.cha` and `dir/labels.tsv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let cha = dir.join("cha");
        fs::create_dir_all(&cha).map_err(|e| Error::io(&cha, e))?;
        for f in &self.files {
            let path = cha.join(&f.path);
            fs::write(&path, f.lines.join("\n") + "\n").map_err(|e| Error::io(&path, e))?;
        }
        crate::labels::save_labels(&dir.join("labels.tsv"), &self.labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn story_vocabulary_avoids_nonword_letters() {
        let vocab = STORY.iter().chain(TANGENT).flat_map(|s| s.split(' '));
        let subs = SUBSTITUTIONS.iter().flat_map(|(a, b)| [*a, *b]);
        for w in vocab.chain(subs) {
            assert!(!w.contains(['z', 'x', 'q', 'j']), "{w}");
        }
        for s in NONWORD_SYLLABLES {
            assert!(s.contains(['z', 'x', 'q', 'j']), "{s}");
        }
    }

    #[test]
    fn default_corpus_shape() {
        let c = generate(&SynthParams::default()).unwrap();
        assert_eq!(c.labels.transcript_ids().len(), 50);
        assert!((8_000..=13_000).contains(&c.labels.len()), "{}", c.labels.len());
        let t = c.labels.tokens();
        let nonwords = t.iter().filter(|t| !t.word).count();
        let ciu = t.iter().filter(|t| t.ciu).count();
        assert!(nonwords > 50 && nonwords < t.len() / 10);
        assert!(ciu > t.len() / 2 && ciu < t.len() * 19 / 20);
    }

    #[test]
    fn generation_is_seeded() {
        let p = SynthParams {
            transcripts: 4,
            ..SynthParams::default()
        };
        assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
        let q = SynthParams { seed: 7, ..p.clone() };
        assert_ne!(generate(&p).unwrap().labels, generate(&q).unwrap().labels);
    }

    #[test]
    fn written_files_ingest_back() {
        let p = SynthParams {
            transcripts: 3,
            ..SynthParams::default()
        };
        let c = generate(&p).unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        let transcripts = crate::chat::ingest_dir(&dir.path().join("cha"), &Cleaner::default()).unwrap();
        let loaded = crate::labels::load_labels(&dir.path().join("labels.tsv")).unwrap();
        assert_eq!(loaded, c.labels);
        join_tokens_labels(&tokenize_corpus(&transcripts), &loaded).unwrap();
    }
}

//! Gold WORD/CIU labels aligned to the token table.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chat::TokenRow;
use crate::error::{Error, Result, TokenKey};

pub const LABEL_HEADER: &str = "transcript_id\tutterance_index\ttoken_index\tsurface\tword\tciu";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledToken {
    pub transcript_id: String,
    pub utterance_index: usize,
    pub token_index: usize,
    pub surface: String,
    pub word: bool,
    pub ciu: bool,
}

impl LabeledToken {
    pub fn key(&self) -> TokenKey {
        (self.transcript_id.clone(), self.utterance_index, self.token_index)
    }

    fn key_ref(&self) -> (&str, usize, usize) {
        (&self.transcript_id, self.utterance_index, self.token_index)
    }
}

/// Validated labels in (transcript, utterance, token) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    tokens: Vec<LabeledToken>,
    transcript_ids: Vec<String>,
}

impl LabeledCorpus {
    /// Sorts and validates `tokens`.
    pub fn new(mut tokens: Vec<LabeledToken>) -> Result<Self> {
        tokens.sort_by(|a, b| a.key_ref().cmp(&b.key_ref()));
        for pair in tokens.windows(2) {
            if pair[0].key_ref() == pair[1].key_ref() {
                return Err(Error::DuplicateKey { key: pair[0].key() });
            }
        }
        if let Some(bad) = tokens.iter().find(|t| t.ciu && !t.word) {
            return Err(Error::LabelConstraintViolation { key: bad.key() });
        }
        let mut transcript_ids: Vec<String> = tokens.iter().map(|t| t.transcript_id.clone()).collect();
        transcript_ids.dedup();
        Ok(Self {
            tokens,
            transcript_ids,
        })
    }

    pub fn tokens(&self) -> &[LabeledToken] {
        &self.tokens
    }

    pub fn transcript_ids(&self) -> &[String] {
        &self.transcript_ids
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Corpus index ranges of each utterance, in corpus order.
    pub fn utterance_spans(&self) -> Vec<std::ops::Range<usize>> {
        let mut spans = Vec::new();
        let mut start = 0;
        for i in 1..=self.tokens.len() {
            let boundary = i == self.tokens.len() || {
                let (a, b) = (&self.tokens[i - 1], &self.tokens[i]);
                a.transcript_id != b.transcript_id || a.utterance_index != b.utterance_index
            };
            if boundary {
                spans.push(start..i);
                start = i;
            }
        }
        spans
    }

    /// Restricts the corpus to the given transcripts.
    pub fn subset(&self, ids: &[String]) -> LabeledCorpus {
        let keep: std::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        let tokens: Vec<LabeledToken> = self
            .tokens
            .iter()
            .filter(|t| keep.contains(t.transcript_id.as_str()))
            .cloned()
            .collect();
        LabeledCorpus::new(tokens).expect("subset of a valid corpus is valid")
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(LABEL_HEADER);
        out.push('\n');
        for t in &self.tokens {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                t.transcript_id,
                t.utterance_index,
                t.token_index,
                t.surface,
                u8::from(t.word),
                u8::from(t.ciu)
            ));
        }
        out
    }

    pub fn from_tsv(text: &str, source: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::BadTable {
            path: source.to_owned(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == LABEL_HEADER => {}
            _ => return Err(bad(1, format!("expected header {LABEL_HEADER:?}"))),
        }
        let mut tokens = Vec::new();
        for (n, line) in lines {
            let line_no = n + 1;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 6 {
                return Err(bad(line_no, format!("expected 6 columns, got {}", cols.len())));
            }
            let index = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| bad(line_no, format!("not an index: {s:?}")))
            };
            let flag = |s: &str, column: &'static str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(Error::NonBinaryFlag {
                    line: line_no,
                    column,
                    value: s.to_owned(),
                }),
            };
            tokens.push(LabeledToken {
                transcript_id: cols[0].to_owned(),
                utterance_index: index(cols[1])?,
                token_index: index(cols[2])?,
                surface: cols[3].to_owned(),
                word: flag(cols[4], "word")?,
                ciu: flag(cols[5], "ciu")?,
            });
        }
        Self::new(tokens)
    }
}

pub fn load_labels(path: &Path) -> Result<LabeledCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LabeledCorpus::from_tsv(&text, &path.display().to_string())
}

pub fn save_labels(path: &Path, corpus: &LabeledCorpus) -> Result<()> {
    fs::write(path, corpus.to_tsv()).map_err(|e| Error::io(path, e))
}

/// Attaches labels to every token-table row. Surfaces must agree.
pub fn join_tokens_labels(tokens: &[TokenRow], labels: &LabeledCorpus) -> Result<LabeledCorpus> {
    let mut by_key: BTreeMap<(&str, usize, usize), &LabeledToken> =
        labels.tokens.iter().map(|t| (t.key_ref(), t)).collect();
    let mut joined = Vec::with_capacity(tokens.len());
    for row in tokens {
        let key = (row.transcript_id.as_str(), row.utterance_index, row.token_index);
        let owned_key = || (row.transcript_id.clone(), row.utterance_index, row.token_index);
        let label = by_key
            .remove(&key)
            .ok_or_else(|| Error::MissingLabel { key: owned_key() })?;
        if label.surface != row.surface {
            return Err(Error::SurfaceMismatch {
                key: owned_key(),
                token: row.surface.clone(),
                label: label.surface.clone(),
            });
        }
        joined.push(label.clone());
    }
    if let Some(orphan) = by_key.values().next() {
        return Err(Error::OrphanLabel { key: orphan.key() });
    }
    LabeledCorpus::new(joined)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    Word,
    Ciu,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Word, Task::Ciu];

    pub fn name(self) -> &'static str {
        match self {
            Task::Word => "WORD",
            Task::Ciu => "CIU",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s.to_ascii_lowercase().as_str() {
            "word" => Some(Task::Word),
            "ciu" => Some(Task::Ciu),
            _ => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Instances of one task: corpus indices, binary targets and group keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskView {
    pub task: Task,
    pub instances: Vec<usize>,
    pub targets: Vec<bool>,
    pub groups: Vec<String>,
}

impl TaskView {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// WORD: every token, target = word flag. CIU: gold-word tokens only,
/// target = ciu flag.
pub fn task_view(corpus: &LabeledCorpus, task: Task) -> Result<TaskView> {
    let mut view = TaskView {
        task,
        instances: Vec::new(),
        targets: Vec::new(),
        groups: Vec::new(),
    };
    for (i, t) in corpus.tokens.iter().enumerate() {
        let target = match task {
            Task::Word => t.word,
            Task::Ciu if t.word => t.ciu,
            Task::Ciu => continue,
        };
        view.instances.push(i);
        view.targets.push(target);
        view.groups.push(t.transcript_id.clone());
    }
    if view.is_empty() {
        return Err(Error::EmptyTask {
            task: task.to_string(),
        });
    }
    Ok(view)
}

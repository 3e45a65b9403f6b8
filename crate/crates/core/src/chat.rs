//! CHAT transcript ingest: participant tier extraction, cleaning and
//! tokenization.
//!
//! Only `*PAR:` tiers are kept. Headers (`@`), dependent tiers (`%`) and
//! other speakers are dropped. A line starting with a tab continues the
//! previous line and is joined to it before any filtering happens.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Fillers removed during cleaning, in addition to every `&`-prefixed form.
pub const DEFAULT_FILLERS: &[&str] = &["uh", "um", "er", "eh", "hm", "mhm"];

/// Unintelligible-speech markers.
const UNINTELLIGIBLE: &[&str] = &["xxx", "yyy", "www"];

const PARTICIPANT: &str = "PAR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawChatFile {
    pub path: String,
    pub lines: Vec<String>,
}

impl RawChatFile {
    pub fn new(path: impl Into<String>, lines: Vec<String>) -> Self {
        Self {
            path: path.into(),
            lines,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(
            path.display().to_string(),
            text.lines().map(str::to_owned).collect(),
        ))
    }

    /// File stem of `path`, used as the transcript id.
    pub fn stem(&self) -> String {
        Path::new(&self.path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.path.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub index: usize,
    pub raw_text: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub transcript_id: String,
    pub utterances: Vec<Utterance>,
}

/// One row of the flat token table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TokenRow {
    pub transcript_id: String,
    pub utterance_index: usize,
    pub token_index: usize,
    pub surface: String,
}

/// Cleaning rules. The filler list is configurable; everything else is fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cleaner {
    fillers: Vec<String>,
}

impl Default for Cleaner {
    fn default() -> Self {
        Self::with_fillers(DEFAULT_FILLERS.iter().copied())
    }
}

impl Cleaner {
    pub fn with_fillers<I, S>(fillers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut fillers: Vec<String> = fillers
            .into_iter()
            .map(|f| f.as_ref().trim().to_lowercase())
            .filter(|f| !f.is_empty())
            .collect();
        fillers.sort();
        fillers.dedup();
        Self { fillers }
    }

    pub fn fillers(&self) -> &[String] {
        &self.fillers
    }

    pub fn is_filler(&self, token: &str) -> bool {
        self.fillers.binary_search_by(|f| f.as_str().cmp(token)).is_ok()
    }

    /// Cleans one tier's text into lowercase surface tokens.
    pub fn clean_utterance(&self, raw_text: &str) -> Vec<String> {
        strip_spans(raw_text)
            .split_whitespace()
            .filter_map(|tok| self.clean_token(tok))
            .collect()
    }

    fn clean_token(&self, raw: &str) -> Option<String> {
        if raw.starts_with('&') || is_pause(raw) {
            return None;
        }
        // Special-form suffixes: `bog@u` -> `bog`.
        let raw = raw.split('@').next().unwrap_or("");
        let lowered = raw.to_lowercase();
        let kept: String = lowered
            .chars()
            .filter(|c| c.is_alphanumeric() || *c == '\'' || *c == '-')
            .collect();
        let token = kept.trim_matches(|c| c == '\'' || c == '-');
        if token.is_empty() || is_omitted(token) || UNINTELLIGIBLE.contains(&token) || self.is_filler(token) {
            return None;
        }
        Some(token.to_owned())
    }

    /// Parses a CHAT file into its participant utterances.
    pub fn parse_chat(&self, file: &RawChatFile) -> Result<Transcript> {
        let mut tiers: Vec<(usize, String)> = Vec::new();
        for (n, line) in file.lines.iter().enumerate() {
            let line = line.trim_end_matches('\r');
            if let Some(rest) = line.strip_prefix('\t') {
                if let Some((_, last)) = tiers.last_mut() {
                    let rest = rest.trim();
                    if !rest.is_empty() {
                        last.push(' ');
                        last.push_str(rest);
                    }
                }
            } else if !line.trim().is_empty() {
                tiers.push((n + 1, line.to_owned()));
            }
        }

        let mut utterances = Vec::new();
        for (line_no, line) in tiers {
            let Some(body) = line.strip_prefix('*') else {
                continue;
            };
            let (code, text) = match body.split_once(':') {
                Some((code, text)) if is_speaker_code(code) => (code, text),
                _ => {
                    return Err(Error::MalformedTier {
                        path: file.path.clone(),
                        line: line_no,
                        text: line.clone(),
                    })
                }
            };
            if code != PARTICIPANT {
                continue;
            }
            let raw_text = text.trim().to_owned();
            let tokens = self.clean_utterance(&raw_text);
            utterances.push(Utterance {
                index: utterances.len(),
                raw_text,
                tokens,
            });
        }

        if utterances.is_empty() {
            return Err(Error::EmptyTranscript {
                path: file.path.clone(),
            });
        }
        Ok(Transcript {
            transcript_id: file.stem(),
            utterances,
        })
    }
}

fn is_speaker_code(code: &str) -> bool {
    !code.is_empty() && code.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Timed or untimed pause tokens: `(.)`, `(..)`, `(1.5)`, `(2:03.1)`.
fn is_pause(tok: &str) -> bool {
    tok.len() >= 2
        && tok.starts_with('(')
        && tok.ends_with(')')
        && tok[1..tok.len() - 1]
            .chars()
            .all(|c| c.is_ascii_digit() || c == '.' || c == ':')
}

/// CHAT marks omitted words with a leading zero: `0is`.
fn is_omitted(tok: &str) -> bool {
    let mut chars = tok.chars();
    chars.next() == Some('0') && chars.next().is_some_and(char::is_alphabetic)
}

/// Removes bracketed code spans (including nested ones and an unterminated
/// trailing span) and media bullets delimited by U+0015.
fn strip_spans(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    let mut in_bullet = false;
    for c in text.chars() {
        match c {
            '\u{15}' => {
                in_bullet = !in_bullet;
                out.push(' ');
            }
            _ if in_bullet => {}
            '[' => {
                depth += 1;
                out.push(' ');
            }
            ']' if depth > 0 => {
                depth -= 1;
                out.push(' ');
            }
            _ if depth > 0 => {}
            _ => out.push(c),
        }
    }
    out
}

/// Flattens transcripts into the token table in corpus order.
pub fn tokenize_corpus(transcripts: &[Transcript]) -> Vec<TokenRow> {
    transcripts
        .iter()
        .flat_map(|t| {
            t.utterances.iter().flat_map(move |u| {
                u.tokens.iter().enumerate().map(move |(i, s)| TokenRow {
                    transcript_id: t.transcript_id.clone(),
                    utterance_index: u.index,
                    token_index: i,
                    surface: s.clone(),
                })
            })
        })
        .collect()
}

/// Parses every `.cha` file in `dir`, ordered by transcript id.
pub fn ingest_dir(dir: &Path, cleaner: &Cleaner) -> Result<Vec<Transcript>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "cha") {
            paths.push(path);
        }
    }
    paths.sort();
    let mut transcripts = paths
        .iter()
        .map(|p| RawChatFile::read(p).and_then(|f| cleaner.parse_chat(&f)))
        .collect::<Result<Vec<_>>>()?;
    transcripts.sort_by(|a, b| a.transcript_id.cmp(&b.transcript_id));
    for pair in transcripts.windows(2) {
        if pair[0].transcript_id == pair[1].transcript_id {
            return Err(Error::InvalidConfig(format!(
                "duplicate transcript id {}",
                pair[0].transcript_id
            )));
        }
    }
    Ok(transcripts)
}

pub const TOKEN_TABLE_HEADER: &str = "transcript_id\tutterance_index\ttoken_index\tsurface";

pub fn write_token_table(path: &Path, rows: &[TokenRow]) -> Result<()> {
    let mut out = String::from(TOKEN_TABLE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.transcript_id, r.utterance_index, r.token_index, r.surface
        ));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_token_table(path: &Path) -> Result<Vec<TokenRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, message: String| Error::BadTable {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TOKEN_TABLE_HEADER => {}
        _ => return Err(bad(1, format!("expected header {TOKEN_TABLE_HEADER:?}"))),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad(n + 1, format!("expected 4 columns, got {}", cols.len())));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(n + 1, format!("not an index: {s:?}")))
        };
        rows.push(TokenRow {
            transcript_id: cols[0].to_owned(),
            utterance_index: parse(cols[1])?,
            token_index: parse(cols[2])?,
            surface: cols[3].to_owned(),
        });
    }
    Ok(rows)
}

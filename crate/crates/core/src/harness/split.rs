//! Transcript-grouped train/test splits.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classifiers::rng_for;
use crate::error::{Error, Result};
use crate::labels::LabeledCorpus;

/// RNG stream reserved for split shuffles.
const SPLIT_STREAM: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratio: f64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

fn shuffled_ids(corpus: &LabeledCorpus, seed: u64) -> Result<Vec<String>> {
    let n = corpus.transcript_ids().len();
    if n < 2 {
        return Err(Error::TooFewTranscripts(n));
    }
    let mut ids = corpus.transcript_ids().to_vec();
    ids.sort();
    ids.shuffle(&mut rng_for(seed, SPLIT_STREAM));
    Ok(ids)
}

/// Shuffles transcript ids and puts the first `floor(ratio * n)` in train.
pub fn make_split(corpus: &LabeledCorpus, ratio: f64, seed: u64) -> Result<SplitManifest> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "ratio must be in (0, 1), got {ratio}"
        )));
    }
    let ids = shuffled_ids(corpus, seed)?;
    let cut = (ratio * ids.len() as f64).floor() as usize;
    let mut train_ids = ids[..cut].to_vec();
    let mut test_ids = ids[cut..].to_vec();
    train_ids.sort();
    test_ids.sort();
    Ok(SplitManifest {
        seed,
        ratio,
        train_ids,
        test_ids,
    })
}

/// `k` grouped folds; fold `f` tests on every `k`-th shuffled transcript.
pub fn make_kfold(corpus: &LabeledCorpus, k: usize, seed: u64) -> Result<Vec<SplitManifest>> {
    let ids = shuffled_ids(corpus, seed)?;
    if k < 2 || k > ids.len() {
        return Err(Error::InvalidConfig(format!(
            "k-fold needs 2 <= k <= {} transcripts, got {k}",
            ids.len()
        )));
    }
    Ok((0..k)
        .map(|f| {
            let (mut test_ids, mut train_ids) = (Vec::new(), Vec::new());
            for (i, id) in ids.iter().enumerate() {
                if i % k == f {
                    test_ids.push(id.clone());
                } else {
                    train_ids.push(id.clone());
                }
            }
            train_ids.sort();
            test_ids.sort();
            SplitManifest {
                seed,
                ratio: train_ids.len() as f64 / ids.len() as f64,
                train_ids,
                test_ids,
            }
        })
        .collect())
}

impl SplitManifest {
    /// Sides must be disjoint and together equal the corpus transcripts.
    pub fn check_covers(&self, corpus: &LabeledCorpus) -> Result<()> {
        let train: BTreeSet<&String> = self.train_ids.iter().collect();
        let test: BTreeSet<&String> = self.test_ids.iter().collect();
        if let Some(id) = train.intersection(&test).next() {
            return Err(Error::InvalidConfig(format!(
                "transcript {id} is on both split sides"
            )));
        }
        let all: BTreeSet<&String> = corpus.transcript_ids().iter().collect();
        let union: BTreeSet<&String> = train.union(&test).copied().collect();
        if union != all {
            return Err(Error::InvalidConfig(
                "split manifest does not cover exactly the corpus transcripts".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

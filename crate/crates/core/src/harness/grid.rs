//! Baseline runs and the ablation grid.
//!
//! Every (config, model) job trains one WORD model on all training tokens
//! and one CIU model on the gold-word training tokens. Both score every test
//! token. The WORD record evaluates all test tokens. The CIU record
//! evaluates the gold-word test tokens with labels gated by the same job's
//! WORD predictions. So every record of a task sees the same ordered test
//! items, whatever the config or model.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::split::SplitManifest;
use crate::classifiers::{predict_label, rng_for, train, ModelKind, TrainedModel};
use crate::error::{Error, Result};
use crate::features::{Ablation, ContextIndex, FeatureConfig};
use crate::gate::{route_low_confidence, RoutingConfig, RoutingReport, TokenDecision};
use crate::labels::{LabeledCorpus, LabeledToken, Task};
use crate::metrics::{metric_row_from_labels, MetricRow, RowMeta};
use crate::sparse::SparseVector;
use crate::stats::{adjust_family, compare, PairedRun, StatsRow};

pub const RUNS_FORMAT: &str = "ciu-runs";
pub const RUNS_VERSION: u32 = 1;

/// Model seed for one (task, model) pair. It does not depend on the feature
/// config, so arms with identical matrices train identical models.
pub fn cell_seed(global: u64, task: Task, model: ModelKind) -> u64 {
    let t = Task::ALL.iter().position(|x| *x == task).unwrap_or(0) as u64;
    let m = ModelKind::ALL.iter().position(|x| *x == model).unwrap_or(0) as u64;
    rng_for(global, 0x100 + 16 * t + m).next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: Task,
    pub config: Ablation,
    pub model: ModelKind,
    pub fingerprint: String,
    pub seed: u64,
    pub row: MetricRow,
    /// Digest of the ordered keys of `instances`.
    pub test_digest: String,
    /// Evaluated test tokens, as indices into [`GridRun::test_tokens`].
    pub instances: Vec<usize>,
    pub predictions: Vec<bool>,
    pub scores: Vec<f64>,
    /// Raw model score on every test token (ungated).
    pub token_scores: Vec<f64>,
    pub warnings: Vec<String>,
    /// Wall time for training and scoring; never written to report files.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub format: String,
    pub version: u32,
    pub settings: RunConfig,
    pub manifest: SplitManifest,
    pub test_tokens: Vec<LabeledToken>,
    pub fingerprints: Vec<(Ablation, String)>,
    pub records: Vec<RunRecord>,
    pub stats: Vec<StatsRow>,
}

/// Hex SHA-256 prefix of ordered token keys.
pub fn keys_digest<'a>(tokens: impl Iterator<Item = &'a LabeledToken>) -> String {
    let mut h = Sha256::new();
    for t in tokens {
        h.update(format!(
            "{}\t{}\t{}\n",
            t.transcript_id, t.utterance_index, t.token_index
        ));
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

struct ConfigData {
    arm: Ablation,
    cfg: FeatureConfig,
    train_rows: Vec<SparseVector>,
    train_word: Vec<bool>,
    ciu_rows: Vec<SparseVector>,
    ciu_targets: Vec<bool>,
    test_rows: Vec<SparseVector>,
}

fn featurize_all(corpus: &LabeledCorpus, cfg: &FeatureConfig) -> Vec<SparseVector> {
    let index = ContextIndex::new(corpus);
    (0..corpus.len()).map(|i| index.featurize(i, cfg)).collect()
}

fn config_data(
    arm: Ablation,
    base: &FeatureConfig,
    train: &LabeledCorpus,
    test: &LabeledCorpus,
) -> Result<ConfigData> {
    let cfg = arm.apply(base);
    cfg.validate()?;
    let train_rows = featurize_all(train, &cfg);
    let train_word: Vec<bool> = train.tokens().iter().map(|t| t.word).collect();
    let (mut ciu_rows, mut ciu_targets) = (Vec::new(), Vec::new());
    for (row, t) in train_rows.iter().zip(train.tokens()) {
        if t.word {
            ciu_rows.push(row.clone());
            ciu_targets.push(t.ciu);
        }
    }
    if ciu_rows.is_empty() {
        return Err(Error::EmptyTask {
            task: Task::Ciu.to_string(),
        });
    }
    Ok(ConfigData {
        arm,
        test_rows: featurize_all(test, &cfg),
        cfg,
        train_rows,
        train_word,
        ciu_rows,
        ciu_targets,
    })
}

struct Shared<'a> {
    settings: &'a RunConfig,
    test: &'a LabeledCorpus,
    word_instances: Vec<usize>,
    ciu_instances: Vec<usize>,
    word_digest: String,
    ciu_digest: String,
}

fn train_scored(
    settings: &RunConfig,
    task: Task,
    kind: ModelKind,
    rows: &[SparseVector],
    targets: &[bool],
    data: &ConfigData,
) -> Result<(TrainedModel, Vec<f64>, u64)> {
    let seed = cell_seed(settings.seed, task, kind);
    let model = train(&settings.model_spec(kind, seed), rows, targets, data.cfg.dim())?;
    let scores = model.score_all(&data.test_rows)?;
    Ok((model, scores, seed))
}

fn run_job(shared: &Shared, data: &ConfigData, kind: ModelKind) -> Result<[RunRecord; 2]> {
    let started = Instant::now();
    let s = shared.settings;
    let thr = s.threshold;
    let tokens = shared.test.tokens();
    let fingerprint = data.cfg.fingerprint();
    let meta = |task| RowMeta {
        model: kind,
        task,
        config: data.arm,
        fingerprint: fingerprint.clone(),
    };

    let (word_model, word_scores, word_seed) =
        train_scored(s, Task::Word, kind, &data.train_rows, &data.train_word, data)?;
    let (ciu_model, ciu_scores, ciu_seed) =
        train_scored(s, Task::Ciu, kind, &data.ciu_rows, &data.ciu_targets, data)?;

    let word_gold: Vec<bool> = shared.word_instances.iter().map(|&i| tokens[i].word).collect();
    let word_pred: Vec<bool> = word_scores.iter().map(|&x| predict_label(x, thr)).collect();
    let word_row = metric_row_from_labels(&word_gold, &word_pred, &word_scores, meta(Task::Word))?;

    let decisions: Vec<TokenDecision> = shared
        .ciu_instances
        .iter()
        .map(|&i| TokenDecision::new(tokens[i].key(), "", word_scores[i], ciu_scores[i], thr))
        .collect();
    let ciu_gold: Vec<bool> = shared.ciu_instances.iter().map(|&i| tokens[i].ciu).collect();
    let ciu_pred: Vec<bool> = decisions.iter().map(|d| d.ciu_label).collect();
    let ciu_eff: Vec<f64> = decisions.iter().map(|d| d.ciu_score).collect();
    let ciu_row = metric_row_from_labels(&ciu_gold, &ciu_pred, &ciu_eff, meta(Task::Ciu))?;

    let seconds = started.elapsed().as_secs_f64();
    let record = |task,
                  seed,
                  row,
                  digest: &str,
                  instances: &[usize],
                  predictions,
                  scores,
                  token_scores,
                  model: &TrainedModel| RunRecord {
        task,
        config: data.arm,
        model: kind,
        fingerprint: fingerprint.clone(),
        seed,
        row,
        test_digest: digest.to_string(),
        instances: instances.to_vec(),
        predictions,
        scores,
        token_scores,
        warnings: model.warnings(),
        seconds,
    };
    Ok([
        record(
            Task::Word,
            word_seed,
            word_row,
            &shared.word_digest,
            &shared.word_instances,
            word_pred,
            word_scores.clone(),
            word_scores,
            &word_model,
        ),
        record(
            Task::Ciu,
            ciu_seed,
            ciu_row,
            &shared.ciu_digest,
            &shared.ciu_instances,
            ciu_pred,
            ciu_eff,
            ciu_scores,
            &ciu_model,
        ),
    ])
}

fn worker_count(jobs: usize) -> usize {
    let available = thread::available_parallelism().map_or(1, |n| n.get());
    available.min(jobs).max(1)
}

/// Trains and evaluates every (config, model) pair on the manifest's split.
/// Records come out in (config, model, task) report order regardless of
/// scheduling. The first failing cell, in that order, aborts the run.
pub fn run_grid(
    corpus: &LabeledCorpus,
    manifest: &SplitManifest,
    settings: &RunConfig,
    configs: &[Ablation],
    models: &[ModelKind],
) -> Result<GridRun> {
    settings.validate()?;
    manifest.check_covers(corpus)?;
    if manifest.train_ids.is_empty() {
        return Err(Error::EmptySplitSide("train"));
    }
    if manifest.test_ids.is_empty() {
        return Err(Error::EmptySplitSide("test"));
    }
    let train = corpus.subset(&manifest.train_ids);
    let test = corpus.subset(&manifest.test_ids);
    let base = settings.feature_config();

    let word_instances: Vec<usize> = (0..test.len()).collect();
    let ciu_instances: Vec<usize> = (0..test.len()).filter(|&i| test.tokens()[i].word).collect();
    let shared = Shared {
        settings,
        test: &test,
        word_digest: keys_digest(word_instances.iter().map(|&i| &test.tokens()[i])),
        ciu_digest: keys_digest(ciu_instances.iter().map(|&i| &test.tokens()[i])),
        word_instances,
        ciu_instances,
    };

    let data: Vec<ConfigData> = configs
        .iter()
        .map(|&arm| config_data(arm, &base, &train, &test))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, ModelKind)> = (0..data.len())
        .flat_map(|c| models.iter().map(move |&m| (c, m)))
        .collect();
    let results: Mutex<Vec<Option<Result<[RunRecord; 2]>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    thread::scope(|scope| {
        for _ in 0..worker_count(jobs.len()) {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(c, kind)) = jobs.get(j) else { break };
                let out = run_job(&shared, &data[c], kind);
                results.lock().expect("no worker panicked")[j] = Some(out);
            });
        }
    });

    let mut records = Vec::with_capacity(jobs.len() * 2);
    for (j, out) in results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .enumerate()
    {
        let (c, kind) = jobs[j];
        match out.expect("every job ran") {
            Ok(pair) => records.extend(pair),
            Err(e) => {
                return Err(Error::Cell {
                    cell: format!("{}/{}", data[c].arm.slug(), kind.slug()),
                    source: Box::new(e),
                })
            }
        }
    }
    let grid = GridRun {
        format: RUNS_FORMAT.into(),
        version: RUNS_VERSION,
        settings: settings.clone(),
        manifest: manifest.clone(),
        test_tokens: test.tokens().to_vec(),
        fingerprints: data.iter().map(|d| (d.arm, d.cfg.fingerprint())).collect(),
        records,
        stats: Vec::new(),
    };
    grid.check_test_items()?;
    Ok(grid)
}

/// The baseline configuration only, for the two baseline tables.
pub fn run_baseline(
    corpus: &LabeledCorpus,
    manifest: &SplitManifest,
    settings: &RunConfig,
) -> Result<GridRun> {
    run_grid(
        corpus,
        manifest,
        settings,
        &[Ablation::Baseline],
        &settings.models()?,
    )
}

/// The configured grid plus paired statistics against baseline.
pub fn run_ablation(
    corpus: &LabeledCorpus,
    manifest: &SplitManifest,
    settings: &RunConfig,
) -> Result<GridRun> {
    let mut grid = run_grid(
        corpus,
        manifest,
        settings,
        &settings.configs()?,
        &settings.models()?,
    )?;
    grid.stats = compute_stats(&grid, settings.bootstrap_b, settings.seed)?;
    Ok(grid)
}

/// Comparison id of `config` against baseline for one task and model.
pub fn comparison_id(task: Task, model: ModelKind, config: Ablation) -> String {
    format!("{}:{}:{}-vs-baseline", task.name(), model.slug(), config.slug())
}

impl GridRun {
    pub fn configs(&self) -> Vec<Ablation> {
        let mut v: Vec<Ablation> = self.records.iter().map(|r| r.config).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn models(&self) -> Vec<ModelKind> {
        let mut v: Vec<ModelKind> = self.records.iter().map(|r| r.model).collect();
        v.sort_by_key(|k| ModelKind::ALL.iter().position(|m| m == k));
        v.dedup();
        v
    }

    pub fn record(&self, task: Task, config: Ablation, model: ModelKind) -> Option<&RunRecord> {
        self.records
            .iter()
            .find(|r| r.task == task && r.config == config && r.model == model)
    }

    /// Every record of a task must evaluate the same ordered test items.
    pub fn check_test_items(&self) -> Result<()> {
        for task in Task::ALL {
            let mut recs = self.records.iter().filter(|r| r.task == task);
            let Some(first) = recs.next() else { continue };
            let digest = keys_digest(first.instances.iter().map(|&i| &self.test_tokens[i]));
            if digest != first.test_digest {
                return Err(Error::TestItemMismatch(format!(
                    "{task} digest does not match its keys"
                )));
            }
            for r in recs {
                if r.test_digest != first.test_digest || r.instances != first.instances {
                    return Err(Error::TestItemMismatch(format!(
                        "{task} {}/{} differs from {}/{}",
                        r.config, r.model, first.config, first.model
                    )));
                }
            }
        }
        Ok(())
    }

    fn gold(&self, r: &RunRecord) -> Vec<bool> {
        r.instances
            .iter()
            .map(|&i| match r.task {
                Task::Word => self.test_tokens[i].word,
                Task::Ciu => self.test_tokens[i].ciu,
            })
            .collect()
    }

    /// Paired view of two records of the same task.
    pub fn paired(&self, a: &RunRecord, b: &RunRecord) -> Result<PairedRun> {
        if a.task != b.task || a.test_digest != b.test_digest {
            return Err(Error::TestItemMismatch(format!(
                "cannot pair {}/{}/{} with {}/{}/{}",
                a.task, a.config, a.model, b.task, b.config, b.model
            )));
        }
        Ok(PairedRun {
            gold: self.gold(a),
            pred_a: a.predictions.clone(),
            pred_b: b.predictions.clone(),
            scores_a: a.scores.clone(),
            scores_b: b.scores.clone(),
            groups: a
                .instances
                .iter()
                .map(|&i| self.test_tokens[i].transcript_id.clone())
                .collect(),
        })
    }

    /// Gated decisions for every test token under one (config, model).
    pub fn decisions(&self, config: Ablation, model: ModelKind) -> Option<Vec<TokenDecision>> {
        let word = self.record(Task::Word, config, model)?;
        let ciu = self.record(Task::Ciu, config, model)?;
        Some(
            self.test_tokens
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    TokenDecision::new(
                        t.key(),
                        t.surface.clone(),
                        word.token_scores[i],
                        ciu.token_scores[i],
                        self.settings.threshold,
                    )
                })
                .collect(),
        )
    }

    pub fn routing(&self, model: ModelKind, band: &RoutingConfig) -> Option<RoutingReport> {
        Some(route_low_confidence(
            &self.decisions(Ablation::Baseline, model)?,
            band,
        ))
    }

    pub fn warnings(&self) -> Vec<String> {
        self.records
            .iter()
            .flat_map(|r| {
                r.warnings
                    .iter()
                    .map(move |w| format!("{} {}/{}: {w}", r.task, r.config, r.model))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("runs serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let grid: GridRun =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("runs file: {e}")))?;
        if grid.format != RUNS_FORMAT || grid.version != RUNS_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported runs file {} v{}",
                grid.format, grid.version
            )));
        }
        grid.check_test_items()?;
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Each non-baseline config against baseline, per task and model, as one
/// Holm family.
pub fn compute_stats(grid: &GridRun, b: usize, seed: u64) -> Result<Vec<StatsRow>> {
    let mut rows = Vec::new();
    let configs = grid.configs();
    if !configs.contains(&Ablation::Baseline) {
        return Ok(rows);
    }
    for task in Task::ALL {
        for model in grid.models() {
            let Some(base) = grid.record(task, Ablation::Baseline, model) else {
                continue;
            };
            for &config in configs.iter().filter(|c| **c != Ablation::Baseline) {
                let Some(rec) = grid.record(task, config, model) else {
                    continue;
                };
                let run = grid.paired(rec, base)?;
                rows.push(compare(&comparison_id(task, model, config), &run, b, seed)?);
            }
        }
    }
    adjust_family(&mut rows);
    Ok(rows)
}

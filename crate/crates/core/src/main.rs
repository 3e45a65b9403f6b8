use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use ciu_core::chat::{ingest_dir, tokenize_corpus, write_token_table, Cleaner};
use ciu_core::classifiers::{predict_label, train, ModelFile, ModelKind};
use ciu_core::features::{Ablation, ContextIndex};
use ciu_core::gate::{RoutingConfig, TokenDecision};
use ciu_core::harness::grid::{cell_seed, compute_stats, run_ablation, run_baseline, GridRun};
use ciu_core::harness::report::{emit_reports, stats_csv, RAW_HEADER};
use ciu_core::harness::{generate, make_kfold, make_split, RunConfig, SplitManifest, SynthParams};
use ciu_core::labels::{join_tokens_labels, load_labels, task_view, LabeledCorpus, Task};
use ciu_core::metrics::{metric_row_from_labels, RowMeta};
use ciu_core::Error;

#[derive(Parser)]
#[command(
    name = "ciu",
    version,
    about = "WORD and CIU token classification for CHAT transcripts"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Global seed (default 42)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Train share of transcripts (default 0.8)
    #[arg(long, global = true)]
    ratio: Option<f64>,
    /// Flat TOML settings file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Routing band as low:high (default 0.4:0.6)
    #[arg(long, global = true)]
    band: Option<String>,
    /// Decision threshold (default 0.5)
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Bootstrap resamples (default 2000)
    #[arg(long = "bootstrap-b", global = true)]
    bootstrap_b: Option<usize>,
    /// Output file or directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated filler words to strip (default uh,um,er,eh,hm,mhm)
    #[arg(long, global = true, value_delimiter = ',')]
    fillers: Option<Vec<String>>,
}

impl Common {
    fn cleaner(&self) -> Cleaner {
        match &self.fillers {
            Some(list) => Cleaner::with_fillers(list),
            None => Cleaner::default(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a directory of .cha files into a token table
    Ingest {
        #[arg(long)]
        cha_dir: PathBuf,
    },
    /// Check a label file, optionally against transcripts
    ValidateLabels {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        cha_dir: Option<PathBuf>,
    },
    /// Write a transcript-grouped split manifest
    Split {
        #[arg(long)]
        labels: PathBuf,
        /// Write k grouped folds instead of one split
        #[arg(long)]
        kfold: Option<usize>,
    },
    /// Train one model on the train side of a split
    Train {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// word or ciu
        #[arg(long)]
        task: String,
        /// knn, svm-rbf, rf, svm-linear or dt
        #[arg(long)]
        model: String,
        /// Ablation slug, e.g. baseline, -token_char or +ctx2
        #[arg(long, default_value = "baseline", allow_hyphen_values = true)]
        ablation: String,
    },
    /// Score a trained model on the test side of a split
    Evaluate {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        model_file: PathBuf,
        /// WORD model used to gate a CIU model's predictions
        #[arg(long)]
        word_model: Option<PathBuf>,
    },
    /// Run the ablation grid and write every report
    Ablate {
        #[arg(long)]
        labels: PathBuf,
        /// Reuse a saved split instead of drawing one
        #[arg(long)]
        split: Option<PathBuf>,
        /// Check the labels against these transcripts first
        #[arg(long)]
        cha_dir: Option<PathBuf>,
        /// Baseline configuration only
        #[arg(long)]
        baseline_only: bool,
    },
    /// Recompute paired statistics from a runs file
    Stats {
        #[arg(long)]
        runs: PathBuf,
    },
    /// Regenerate every report file from a runs file
    Report {
        #[arg(long)]
        runs: PathBuf,
    },
    /// Generate the synthetic corpus
    Synth {
        #[arg(long, default_value_t = SynthParams::default().transcripts)]
        transcripts: usize,
    },
}

fn settings(c: &Common) -> anyhow::Result<RunConfig> {
    let mut s = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = c.seed {
        s.seed = v;
    }
    if let Some(v) = c.ratio {
        s.ratio = v;
    }
    if let Some(v) = c.threshold {
        s.threshold = v;
    }
    if let Some(v) = c.bootstrap_b {
        s.bootstrap_b = v;
    }
    if let Some(band) = &c.band {
        let b = RoutingConfig::parse(band)?;
        s.band_low = b.band_low;
        s.band_high = b.band_high;
    }
    s.validate()?;
    Ok(s)
}

fn out_path(c: &Common, default: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn parse_task(s: &str) -> anyhow::Result<Task> {
    Task::parse(&s.to_ascii_uppercase())
        .ok_or_else(|| Error::InvalidConfig(format!("unknown task {s:?}")).into())
}

fn parse_model(s: &str) -> anyhow::Result<ModelKind> {
    ModelKind::parse(s).ok_or_else(|| Error::InvalidConfig(format!("unknown model {s:?}")).into())
}

fn parse_ablation(s: &str) -> anyhow::Result<Ablation> {
    Ablation::parse(s).ok_or_else(|| Error::InvalidConfig(format!("unknown ablation {s:?}")).into())
}

fn check_against_transcripts(
    labels: &LabeledCorpus,
    cha_dir: &Path,
    cleaner: &Cleaner,
) -> anyhow::Result<()> {
    let transcripts = ingest_dir(cha_dir, cleaner)?;
    join_tokens_labels(&tokenize_corpus(&transcripts), labels)?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn print_timings(grid: &GridRun, total: f64) {
    for r in grid.records.iter().filter(|r| r.task == Task::Word) {
        eprintln!(
            "  {:<16} {:<11} {:>7.2}s",
            r.config.slug(),
            r.model.slug(),
            r.seconds
        );
    }
    eprintln!("grid finished in {total:.1}s");
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let c = &cli.common;
    match &cli.command {
        Command::Ingest { cha_dir } => {
            let transcripts = ingest_dir(cha_dir, &c.cleaner())?;
            let rows = tokenize_corpus(&transcripts);
            let out = out_path(c, "tokens.tsv");
            write_token_table(&out, &rows)?;
            eprintln!(
                "{} transcripts, {} tokens -> {}",
                transcripts.len(),
                rows.len(),
                out.display()
            );
        }
        Command::ValidateLabels { labels, cha_dir } => {
            let corpus = load_labels(labels)?;
            if let Some(dir) = cha_dir {
                check_against_transcripts(&corpus, dir, &c.cleaner())?;
            }
            let words = corpus.tokens().iter().filter(|t| t.word).count();
            let cius = corpus.tokens().iter().filter(|t| t.ciu).count();
            println!(
                "ok: {} transcripts, {} tokens, {} words, {} CIUs",
                corpus.transcript_ids().len(),
                corpus.len(),
                words,
                cius
            );
        }
        Command::Split { labels, kfold } => {
            let s = settings(c)?;
            let corpus = load_labels(labels)?;
            match kfold {
                None => {
                    let m = make_split(&corpus, s.ratio, s.seed)?;
                    let out = out_path(c, "split.json");
                    write_file(&out, &m.to_json())?;
                    eprintln!(
                        "{} train / {} test transcripts -> {}",
                        m.train_ids.len(),
                        m.test_ids.len(),
                        out.display()
                    );
                }
                Some(k) => {
                    let dir = out_path(c, "folds");
                    for (f, m) in make_kfold(&corpus, *k, s.seed)?.iter().enumerate() {
                        write_file(&dir.join(format!("fold{f}.json")), &m.to_json())?;
                    }
                    eprintln!("{k} folds -> {}", dir.display());
                }
            }
        }
        Command::Train {
            labels,
            split,
            task,
            model,
            ablation,
        } => {
            let s = settings(c)?;
            let (task, kind, arm) = (parse_task(task)?, parse_model(model)?, parse_ablation(ablation)?);
            let corpus = load_labels(labels)?;
            let manifest = SplitManifest::load(split)?;
            manifest.check_covers(&corpus)?;
            let train_side = corpus.subset(&manifest.train_ids);
            if train_side.is_empty() {
                return Err(Error::EmptySplitSide("train").into());
            }
            let fc = arm.apply(&s.feature_config());
            fc.validate()?;
            let view = task_view(&train_side, task)?;
            let index = ContextIndex::new(&train_side);
            let rows: Vec<_> = view.instances.iter().map(|&i| index.featurize(i, &fc)).collect();
            let spec = s.model_spec(kind, cell_seed(s.seed, task, kind));
            let trained = train(&spec, &rows, &view.targets, fc.dim())?;
            for w in trained.warnings() {
                eprintln!("warning: {w}");
            }
            let out = out_path(c, &format!("{}-{}.json", task.name().to_lowercase(), kind.slug()));
            ModelFile::new(task, arm, fc, trained).save(&out)?;
            eprintln!(
                "trained {} {} on {} instances -> {}",
                task,
                kind,
                rows.len(),
                out.display()
            );
        }
        Command::Evaluate {
            labels,
            split,
            model_file,
            word_model,
        } => {
            let s = settings(c)?;
            let corpus = load_labels(labels)?;
            let manifest = SplitManifest::load(split)?;
            manifest.check_covers(&corpus)?;
            let test = corpus.subset(&manifest.test_ids);
            if test.is_empty() {
                return Err(Error::EmptySplitSide("test").into());
            }
            let file = ModelFile::load(model_file)?;
            let task = parse_task(&file.task)?;
            let view = task_view(&test, task)?;
            let index = ContextIndex::new(&test);
            let score = |f: &ModelFile, i: usize| f.model.score(&index.featurize(i, &f.feature_config));
            let scores = view
                .instances
                .iter()
                .map(|&i| score(&file, i))
                .collect::<Result<Vec<f64>, _>>()?;
            let (pred, scores) = match (task, word_model) {
                (Task::Ciu, Some(path)) => {
                    let wf = ModelFile::load(path)?;
                    if parse_task(&wf.task)? != Task::Word {
                        bail!(Error::InvalidConfig(format!(
                            "{} is not a WORD model",
                            path.display()
                        )));
                    }
                    let mut pred = Vec::new();
                    let mut eff = Vec::new();
                    for (&i, &raw) in view.instances.iter().zip(&scores) {
                        let d =
                            TokenDecision::new(test.tokens()[i].key(), "", score(&wf, i)?, raw, s.threshold);
                        pred.push(d.ciu_label);
                        eff.push(d.ciu_score);
                    }
                    (pred, eff)
                }
                (Task::Ciu, None) => {
                    eprintln!("note: no --word-model given, CIU predictions are ungated");
                    (
                        scores.iter().map(|&x| predict_label(x, s.threshold)).collect(),
                        scores,
                    )
                }
                (Task::Word, _) => (
                    scores.iter().map(|&x| predict_label(x, s.threshold)).collect(),
                    scores,
                ),
            };
            let meta = RowMeta {
                model: file.model.kind(),
                task,
                config: file.ablation,
                fingerprint: file.config_fingerprint.clone(),
            };
            let r = metric_row_from_labels(&view.targets, &pred, &scores, meta)?;
            let line = format!(
                "{RAW_HEADER}\n{},{},{},{},{},{},{},{},{}\n",
                r.task,
                r.config,
                r.fingerprint,
                r.model.slug(),
                r.accuracy,
                r.precision,
                r.recall,
                r.f1,
                r.auc
            );
            match &c.out {
                Some(out) => write_file(out, &line)?,
                None => print!("{line}"),
            }
        }
        Command::Ablate {
            labels,
            split,
            cha_dir,
            baseline_only,
        } => {
            let mut s = settings(c)?;
            if *baseline_only {
                s.configs = vec![Ablation::Baseline.slug().to_string()];
            }
            let corpus = load_labels(labels)?;
            if let Some(dir) = cha_dir {
                check_against_transcripts(&corpus, dir, &c.cleaner())?;
            }
            let out = out_path(c, "results");
            let manifest = match split {
                Some(path) => SplitManifest::load(path)?,
                None => make_split(&corpus, s.ratio, s.seed)?,
            };
            let started = Instant::now();
            let grid = if *baseline_only {
                let mut g = run_baseline(&corpus, &manifest, &s)?;
                g.stats = compute_stats(&g, s.bootstrap_b, s.seed)?;
                g
            } else {
                run_ablation(&corpus, &manifest, &s)?
            };
            print_timings(&grid, started.elapsed().as_secs_f64());
            let files = emit_reports(&grid, &out)?;
            write_file(&out.join("split.json"), &manifest.to_json())?;
            for w in grid.warnings() {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "{} records, {} files -> {}",
                grid.records.len(),
                files.len() + 1,
                out.display()
            );
        }
        Command::Stats { runs } => {
            let mut grid = GridRun::load(runs)?;
            let mut s = grid.settings.clone();
            if let Some(b) = c.bootstrap_b {
                s.bootstrap_b = b;
            }
            if let Some(seed) = c.seed {
                s.seed = seed;
            }
            grid.stats = compute_stats(&grid, s.bootstrap_b, s.seed)?;
            let out = out_path(c, "stats.csv");
            write_file(&out, &stats_csv(&grid))?;
            eprintln!("{} comparisons -> {}", grid.stats.len(), out.display());
        }
        Command::Report { runs } => {
            let grid = GridRun::load(runs)?;
            let out = out_path(c, "results");
            let files = emit_reports(&grid, &out)?;
            eprintln!("{} files -> {}", files.len(), out.display());
        }
        Command::Synth { transcripts } => {
            let s = settings(c)?;
            let params = SynthParams {
                seed: s.seed,
                transcripts: *transcripts,
                ..SynthParams::default()
            };
            let corpus = generate(&params)?;
            let out = out_path(c, "synth");
            corpus.write(&out)?;
            eprintln!(
                "{} transcripts, {} tokens -> {}",
                corpus.files.len(),
                corpus.labels.len(),
                out.display()
            );
        }
    }
    Ok(())
}

/// 1 for input or configuration problems, 2 for runtime failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli).context("ciu failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}

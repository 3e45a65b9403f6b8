//! Report files for a finished grid. Output depends only on the [`GridRun`],
//! so rerunning from a saved runs file reproduces every byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::grid::GridRun;
use super::svg::grouped_bar_chart;
use crate::classifiers::ModelKind;
use crate::error::{Error, Result};
use crate::features::Ablation;
use crate::labels::Task;
use crate::metrics::MetricRow;
use crate::stats::STATS_HEADER;

pub const BASELINE_HEADER: &str = "Model,Accuracy,Precision,Recall,F1,AUC";
pub const RAW_HEADER: &str = "task,config,fingerprint,model,accuracy,precision,recall,f1,auc";
pub const PREDICTIONS_HEADER: &str = "config\tmodel\ttranscript_id\tutterance_index\ttoken_index\tsurface\tgold_word\tgold_ciu\tword_score\tword_label\tciu_score\tciu_label";

fn model_rank(m: ModelKind) -> usize {
    ModelKind::ALL.iter().position(|k| *k == m).unwrap_or(usize::MAX)
}

/// F1 descending, then AUC descending, then report row order.
pub fn sorted_rows(grid: &GridRun, task: Task, config: Ablation) -> Vec<&MetricRow> {
    let mut rows: Vec<&MetricRow> = grid
        .records
        .iter()
        .filter(|r| r.task == task && r.config == config)
        .map(|r| &r.row)
        .collect();
    rows.sort_by(|a, b| {
        b.f1.total_cmp(&a.f1)
            .then(b.auc.total_cmp(&a.auc))
            .then(model_rank(a.model).cmp(&model_rank(b.model)))
    });
    rows
}

pub fn baseline_table(grid: &GridRun, task: Task) -> String {
    let mut out = format!("{BASELINE_HEADER}\n");
    for r in sorted_rows(grid, task, Ablation::Baseline) {
        let _ = writeln!(
            out,
            "{},{:.3},{:.3},{:.3},{:.3},{:.3}",
            r.model.title(),
            r.accuracy,
            r.precision,
            r.recall,
            r.f1,
            r.auc
        );
    }
    out
}

/// Models down, configs across, cells `a / b`.
pub fn ablation_table(grid: &GridRun, task: Task, cell: impl Fn(&MetricRow) -> (f64, f64)) -> String {
    let configs = grid.configs();
    let mut out = String::from("Model");
    for c in &configs {
        out.push(',');
        out.push_str(c.title());
    }
    out.push('\n');
    for m in grid.models() {
        out.push_str(m.title());
        for &c in &configs {
            match grid.record(task, c, m) {
                Some(r) => {
                    let (a, b) = cell(&r.row);
                    let _ = write!(out, ",{a:.3} / {b:.3}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

pub fn raw_runs_csv(grid: &GridRun) -> String {
    let mut out = format!("{RAW_HEADER}\n");
    for r in &grid.records {
        let m = &r.row;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.task,
            r.config,
            r.fingerprint,
            r.model.slug(),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            m.auc
        );
    }
    out
}

pub fn stats_csv(grid: &GridRun) -> String {
    let mut out = format!("{STATS_HEADER}\n");
    for s in &grid.stats {
        out.push_str(&s.csv_line());
        out.push('\n');
    }
    out
}

pub fn predictions_tsv(grid: &GridRun) -> String {
    let mut out = format!("{PREDICTIONS_HEADER}\n");
    for c in grid.configs() {
        for m in grid.models() {
            let Some(decisions) = grid.decisions(c, m) else {
                continue;
            };
            for (d, t) in decisions.iter().zip(&grid.test_tokens) {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    c,
                    m.slug(),
                    d.key.0,
                    d.key.1,
                    d.key.2,
                    d.surface,
                    u8::from(t.word),
                    u8::from(t.ciu),
                    d.word_score,
                    u8::from(d.word_label),
                    d.ciu_score,
                    u8::from(d.ciu_label)
                );
            }
        }
    }
    out
}

/// CIU F1 per config and model, long format, plus the chart.
pub fn figure_ciu_f1(grid: &GridRun) -> (String, String) {
    let configs = grid.configs();
    let models = grid.models();
    let mut csv = String::from("config,model,f1\n");
    let mut values = Vec::new();
    for &c in &configs {
        let mut group = Vec::new();
        for &m in &models {
            let f1 = grid.record(Task::Ciu, c, m).map_or(0.0, |r| r.row.f1);
            let _ = writeln!(csv, "{},{},{f1}", c.title(), m.title());
            group.push(f1);
        }
        values.push(group);
    }
    let svg = chart(
        "CIU F1 by feature configuration",
        "F1",
        &configs,
        &models,
        &values,
    );
    (csv, svg)
}

/// CIU F1 change from baseline per config and model.
pub fn figure_delta_f1(grid: &GridRun) -> (String, String) {
    let configs = grid.configs();
    let models = grid.models();
    let mut csv = String::from("config,model,delta_f1\n");
    let mut values = Vec::new();
    for &c in &configs {
        let mut group = Vec::new();
        for &m in &models {
            let base = grid.record(Task::Ciu, Ablation::Baseline, m);
            let cur = grid.record(Task::Ciu, c, m);
            let delta = match (cur, base) {
                (Some(a), Some(b)) => a.row.f1 - b.row.f1,
                _ => 0.0,
            };
            let _ = writeln!(csv, "{},{},{delta}", c.title(), m.title());
            group.push(delta);
        }
        values.push(group);
    }
    let svg = chart(
        "CIU F1 change from baseline",
        "delta F1",
        &configs,
        &models,
        &values,
    );
    (csv, svg)
}

fn chart(title: &str, y: &str, configs: &[Ablation], models: &[ModelKind], values: &[Vec<f64>]) -> String {
    let groups: Vec<&str> = configs.iter().map(|c| c.title()).collect();
    let series: Vec<&str> = models.iter().map(|m| m.title()).collect();
    grouped_bar_chart(title, y, &groups, &series, values)
}

fn markdown_table(csv: &str) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        let _ = writeln!(out, "| {} |", line.replace(',', " | "));
        if i == 0 {
            let cols = line.split(',').count();
            let _ = writeln!(out, "|{}", "---|".repeat(cols));
        }
    }
    out
}

pub fn report_markdown(grid: &GridRun) -> String {
    let s = &grid.settings;
    let n_ciu = grid.test_tokens.iter().filter(|t| t.word).count();
    let mut md = String::from("# WORD / CIU classification report\n\n");
    let _ = writeln!(md, "- seed: {}", s.seed);
    let _ = writeln!(
        md,
        "- split: ratio {}, {} train / {} test transcripts",
        grid.manifest.ratio,
        grid.manifest.train_ids.len(),
        grid.manifest.test_ids.len()
    );
    let _ = writeln!(
        md,
        "- test items: {} tokens (WORD), {} gold-word tokens (CIU, gated by predicted WORD)",
        grid.test_tokens.len(),
        n_ciu
    );
    let _ = writeln!(md, "- decision threshold: {}", s.threshold);
    let _ = writeln!(
        md,
        "- routing band: [{}, {}] inclusive, applied to uncalibrated scores",
        s.band_low, s.band_high
    );
    let _ = writeln!(md, "- bootstrap resamples: {}\n", s.bootstrap_b);

    md.push_str("## Feature configurations\n\n| config | fingerprint |\n|---|---|\n");
    for (a, fp) in &grid.fingerprints {
        let _ = writeln!(md, "| {} | {fp} |", a.title());
    }
    md.push('\n');

    if grid.configs().contains(&Ablation::Baseline) {
        md.push_str("## WORD vs NON-WORD, baseline\n\n");
        md.push_str(&markdown_table(&baseline_table(grid, Task::Word)));
        md.push_str("\n## CIU vs NON-CIU, baseline\n\n");
        md.push_str(&markdown_table(&baseline_table(grid, Task::Ciu)));
        md.push('\n');
    }
    md.push_str("## CIU ablation (F1 / AUC)\n\n");
    md.push_str(&markdown_table(&ablation_table(grid, Task::Ciu, |r| {
        (r.f1, r.auc)
    })));
    md.push_str("\n## WORD ablation (Accuracy / AUC)\n\n");
    md.push_str(&markdown_table(&ablation_table(grid, Task::Word, |r| {
        (r.accuracy, r.auc)
    })));

    let _ = writeln!(md, "\n## Comparisons against baseline\n");
    if grid.stats.is_empty() {
        md.push_str("No comparisons were run.\n");
    } else {
        let _ = writeln!(
            md,
            "Holm family: all {} comparisons below, adjusted together on the McNemar p-values.\n",
            grid.stats.len()
        );
        md.push_str("| comparison | dF1 | 95% CI | McNemar p | dAUC | DeLong p | Holm p |\n");
        md.push_str("|---|---|---|---|---|---|---|\n");
        for r in &grid.stats {
            let _ = writeln!(
                md,
                "| {} | {:.4} | [{:.4}, {:.4}] | {:.4} | {:.4} | {:.4} | {:.4} |",
                r.comparison,
                r.delta_f1,
                r.ci_low,
                r.ci_high,
                r.mcnemar_p,
                r.delta_auc,
                r.delong_p,
                r.holm_adjusted_p
            );
        }
    }

    md.push_str("\n## Routing\n\n");
    match s.routing() {
        Ok(band) => {
            for m in grid.models() {
                if let Some(r) = grid.routing(m, &band) {
                    let _ = writeln!(
                        md,
                        "- {}: {}/{} tokens routed ({:.4})",
                        m.title(),
                        r.routed,
                        r.decisions.len(),
                        r.routed_fraction()
                    );
                }
            }
        }
        Err(e) => {
            let _ = writeln!(md, "- routing skipped: {e}");
        }
    }

    md.push_str("\n## Warnings\n\n");
    let warnings = grid.warnings();
    if warnings.is_empty() {
        md.push_str("None.\n");
    }
    for w in warnings {
        let _ = writeln!(md, "- {w}");
    }
    md
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes every report file under `out` and returns their paths.
pub fn emit_reports(grid: &GridRun, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    if grid.configs().contains(&Ablation::Baseline) {
        write(
            out.join("table1_word_baseline.csv"),
            &baseline_table(grid, Task::Word),
            &mut written,
        )?;
        write(
            out.join("table2_ciu_baseline.csv"),
            &baseline_table(grid, Task::Ciu),
            &mut written,
        )?;
        let routing_dir = out.join("routing");
        fs::create_dir_all(&routing_dir).map_err(|e| Error::io(&routing_dir, e))?;
        let band = grid.settings.routing()?;
        for m in grid.models() {
            if let Some(r) = grid.routing(m, &band) {
                write(
                    routing_dir.join(format!("{}.csv", m.slug())),
                    &r.to_csv(),
                    &mut written,
                )?;
            }
        }
        let (csv, svg) = figure_delta_f1(grid);
        write(out.join("figure2_delta_f1.csv"), &csv, &mut written)?;
        write(out.join("figure2_delta_f1.svg"), &svg, &mut written)?;
    }
    write(
        out.join("table3_ciu_ablation_f1_auc.csv"),
        &ablation_table(grid, Task::Ciu, |r| (r.f1, r.auc)),
        &mut written,
    )?;
    write(
        out.join("table4_word_ablation_acc_auc.csv"),
        &ablation_table(grid, Task::Word, |r| (r.accuracy, r.auc)),
        &mut written,
    )?;
    write(out.join("runs_raw.csv"), &raw_runs_csv(grid), &mut written)?;
    write(out.join("stats.csv"), &stats_csv(grid), &mut written)?;
    write(out.join("predictions.tsv"), &predictions_tsv(grid), &mut written)?;
    let (csv, svg) = figure_ciu_f1(grid);
    write(out.join("figure1_ciu_f1.csv"), &csv, &mut written)?;
    write(out.join("figure1_ciu_f1.svg"), &svg, &mut written)?;
    write(out.join("report.md"), &report_markdown(grid), &mut written)?;
    write(out.join("runs.json"), &grid.to_json(), &mut written)?;
    Ok(written)
}

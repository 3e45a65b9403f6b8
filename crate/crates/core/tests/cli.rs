//! End-to-end runs of the `ciu` binary on a small synthetic corpus.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ciu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ciu"))
        .args(args)
        .output()
        .expect("spawn ciu")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_corpus(dir: &Path) {
    let out = ciu(&["synth", "--transcripts", "8", "--out", p(dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_and_evaluate_one_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_corpus(&data);
    let labels = data.join("labels.tsv");
    let split = tmp.path().join("split.json");

    let out = ciu(&[
        "validate-labels",
        "--labels",
        p(&labels),
        "--cha-dir",
        p(&data.join("cha")),
    ]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: 8 transcripts"));

    assert_eq!(
        code(&ciu(&["split", "--labels", p(&labels), "--out", p(&split)])),
        0
    );
    let word = tmp.path().join("word.json");
    let ciu_model = tmp.path().join("ciu.json");
    for (task, file) in [("word", &word), ("ciu", &ciu_model)] {
        let out = ciu(&[
            "train",
            "--labels",
            p(&labels),
            "--split",
            p(&split),
            "--task",
            task,
            "--model",
            "dt",
            "--out",
            p(file),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }

    let out = ciu(&[
        "evaluate",
        "--labels",
        p(&labels),
        "--split",
        p(&split),
        "--model-file",
        p(&ciu_model),
        "--word-model",
        p(&word),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("CIU,baseline,"));
    assert_eq!(lines[1].split(',').count(), lines[0].split(',').count());
}

#[test]
fn baseline_ablation_then_stats_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_corpus(&data);
    let labels = data.join("labels.tsv");
    let results = tmp.path().join("results");

    let out = ciu(&[
        "ablate",
        "--labels",
        p(&labels),
        "--baseline-only",
        "--bootstrap-b",
        "200",
        "--out",
        p(&results),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "table1_word_baseline.csv",
        "table2_ciu_baseline.csv",
        "stats.csv",
        "report.md",
        "runs.json",
        "split.json",
    ] {
        assert!(results.join(name).is_file(), "{name} missing");
    }
    let table = fs::read_to_string(results.join("table1_word_baseline.csv")).unwrap();
    assert_eq!(table.lines().count(), 6);

    let stats = tmp.path().join("stats.csv");
    let out = ciu(&[
        "stats",
        "--runs",
        p(&results.join("runs.json")),
        "--bootstrap-b",
        "200",
        "--out",
        p(&stats),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(&stats).unwrap(),
        fs::read(results.join("stats.csv")).unwrap()
    );

    let again = tmp.path().join("again");
    let out = ciu(&[
        "report",
        "--runs",
        p(&results.join("runs.json")),
        "--out",
        p(&again),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["table2_ciu_baseline.csv", "report.md", "predictions.tsv"] {
        assert_eq!(
            fs::read(again.join(name)).unwrap(),
            fs::read(results.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.tsv");
    fs::write(
        &bad,
        "transcript_id\tutterance_index\ttoken_index\tsurface\tword\tciu\nt1\t0\t0\tbog\t0\t1\n",
    )
    .unwrap();

    assert_eq!(code(&ciu(&["--help"])), 0);
    assert_eq!(code(&ciu(&["--version"])), 0);
    assert_eq!(code(&ciu(&["no-such-command"])), 1);
    assert_eq!(code(&ciu(&["validate-labels", "--labels", p(&bad)])), 1);
    assert_eq!(
        code(&ciu(&["split", "--labels", p(&bad), "--band", "0.7:0.2"])),
        1
    );
    let missing = tmp.path().join("missing.tsv");
    assert_eq!(code(&ciu(&["validate-labels", "--labels", p(&missing)])), 2);
}

use std::path::Path;
use std::process::{Command, Output};

fn searchcast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_searchcast"))
        .current_dir(dir)
        .env_remove("SEARCHCAST_OUTPUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = searchcast(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path) {
    ok(dir, &["synth", "--seed", "7", "--regions", "20", "--terms", "60", "--out", "fx"]);
}

#[test]
fn stages_chain_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d);
    let truth = "--truth=fx/ground_truth.csv";
    ok(d, &["correlate", truth, "--target", "Gen", "--year", "2015", "--corpus", "fx/corpus.csv", "-k", "50"]);
    let ranked = std::fs::read_to_string(d.join("ranked.csv")).unwrap();
    assert_eq!(ranked.lines().count(), 51);
    assert!(ranked.starts_with("term,r,R01,"));

    let picked = ok(d, &["select", "--lexicon", "fx/lexicon.txt", "--max-terms", "5"]);
    assert!(!picked.is_empty());
    let selected = std::fs::read_to_string(d.join("selected.csv")).unwrap();
    assert!(selected.lines().count() >= 2 && selected.lines().count() <= 6);

    let design = [truth, "--target", "Gen", "--year", "2015", "--selected", "selected.csv", "--grid-size", "30"];
    let mut fit = vec!["fit", "--family", "lasso"];
    fit.extend(design);
    let printed = ok(d, &fit);
    assert!(printed.contains("family=lasso"));
    assert!(std::fs::read_to_string(d.join("model.txt")).unwrap().starts_with("family=lasso"));

    let mut evaluate = vec!["evaluate", "--loocv"];
    evaluate.extend(design);
    let printed = ok(d, &evaluate);
    assert!(printed.contains("chosen:"));
    let table = std::fs::read_to_string(d.join("evaluation.csv")).unwrap();
    assert!(table.starts_with("variable,family,r,rmse,smape_pct,detail\n"));
    assert_eq!(table.lines().count(), 5);

    let printed = ok(d, &["transfer", "--trends", "fx/trends.csv", truth, "--model", "model.txt", "--years", "2010..2015"]);
    assert!(printed.contains("trend r"));
    let plot = std::fs::read_to_string(d.join("plot.csv")).unwrap();
    assert_eq!(plot.lines().count(), 7);
    assert!(d.join("trend.csv").is_file());
}

#[test]
fn run_is_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d);
    ok(d, &["--threads", "1", "run", "--config", "fx/pipeline.conf"]);
    let one = std::fs::read(d.join("fx/out/Gen/evaluation.csv")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_searchcast"))
        .current_dir(d)
        .env("SEARCHCAST_OUTPUT_DIR", d.join("again"))
        .args(["--threads", "3", "run", "--config", "fx/pipeline.conf"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let three = std::fs::read(d.join("again/Gen/evaluation.csv")).unwrap();
    assert_eq!(one, three);
    assert_eq!(
        std::fs::read(d.join("fx/out/table3.csv")).unwrap(),
        std::fs::read(d.join("again/table3.csv")).unwrap()
    );
}

#[test]
fn failures_exit_nonzero_with_cause() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d);
    let out = searchcast(d, &["correlate", "--truth", "fx/ground_truth.csv", "--target", "Nope", "--year", "2015", "--corpus", "fx/corpus.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Nope"));

    std::fs::write(d.join("bad.conf"), "corpus=missing.csv\nground_truth=fx/ground_truth.csv\n").unwrap();
    let out = searchcast(d, &["run", "--config", "bad.conf"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest"));

    let out = searchcast(d, &["synth", "--terms", "2", "--out", "tiny"]);
    assert!(!out.status.success());
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIAS: [i64; 6] = [35, 18, 42, 25, 30, 22];

fn attlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attlab"))
        .args(args)
        .env_remove("ATTLAB_OUT")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthesize the catalog into `dir/passes` and return the five CSVs in order.
fn synth(dir: &Path, extra: &[&str]) -> Vec<PathBuf> {
    let out = dir.join("passes");
    let mut args = vec!["synth", "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&attlab(&args));
    (1..=5).map(|k| out.join(format!("P{k}.csv"))).collect()
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p
}

/// Short schedule so command tests stay fast.
const QUICK: &str = r#"{"train": {"max_epochs": 12}}"#;

fn with_passes<'a>(mut args: Vec<&'a str>, passes: &'a [PathBuf]) -> Vec<&'a str> {
    args.extend(passes.iter().map(|p| s(p)));
    args
}

fn data_rows(csv: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn version_lists_formats() {
    let out = ok(&attlab(&["--version"]));
    assert!(out.contains(env!("CARGO_PKG_VERSION")));
    assert!(out.contains("model format 1"));
    assert!(out.contains("pass log format 1"));
}

#[test]
fn synth_writes_catalog_and_manifest() {
    let dir = TempDir::new().unwrap();
    let passes = synth(dir.path(), &[]);
    for p in &passes {
        assert_eq!(data_rows(p).len(), 362);
        assert!(p.with_file_name(format!("{}.manifest.json", p.file_stem().unwrap().to_str().unwrap())).exists());
    }
    let man: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("passes/manifest.json")).unwrap()).unwrap();
    assert_eq!(man["subcommand"], "synth");
    assert_eq!(man["outputs"].as_array().unwrap().len(), 10);
    assert_eq!(man["seeds"], serde_json::json!([1, 2, 3, 4, 5]));
    assert!(man["started_utc"].is_string());
}

#[test]
fn synth_is_deterministic_and_seed_sensitive() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir.path().join("a"), &[]);
    let b = synth(&dir.path().join("b"), &[]);
    let c = synth(&dir.path().join("c"), &["--seed", "7"]);
    for k in 0..5 {
        let bytes = |p: &PathBuf| std::fs::read(p).unwrap();
        assert_eq!(bytes(&a[k]), bytes(&b[k]));
        assert_ne!(bytes(&a[k]), bytes(&c[k]));
    }
}

#[test]
fn eclipse_css_reads_bias() {
    let dir = TempDir::new().unwrap();
    for p in synth(dir.path(), &["--eclipse"]) {
        for row in data_rows(&p) {
            for (ch, bias) in BIAS.iter().enumerate() {
                let v: i64 = row[1 + ch].parse().unwrap();
                assert!((v - bias).abs() <= 10, "css{ch} = {v}");
            }
        }
    }
}

#[test]
fn invalid_config_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"seed": 3, "eclipes": true}"#);
    let out = attlab(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("eclipes"));

    let cfg = write_config(dir.path(), r#"{"errors": {"css": {"noise": -1.0}}}"#);
    let out = attlab(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise"));
}

#[test]
fn triad_reports_both_priorities() {
    let dir = TempDir::new().unwrap();
    let passes = synth(dir.path(), &[]);
    let out_dir = dir.path().join("triad");
    let stdout = ok(&attlab(&with_passes(vec!["triad", "--out", s(&out_dir)], &passes)));
    assert!(stdout.contains("| sun |") && stdout.contains("| mag |"));
    assert_eq!(data_rows(&out_dir.join("triad.csv")).len(), 2);
    assert!(out_dir.join("manifest.json").exists());

    let one = dir.path().join("one");
    ok(&attlab(&["triad", "--priority", "mag", "--out", s(&one), s(&passes[2])]));
    let rows = data_rows(&one.join("triad.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "mag");
}

#[test]
fn triad_on_error_free_passes_is_near_zero() {
    let dir = TempDir::new().unwrap();
    let passes = synth(dir.path(), &["--zero-errors"]);
    let out_dir = dir.path().join("triad");
    ok(&attlab(&with_passes(vec!["triad", "--out", s(&out_dir)], &passes)));
    // integer counts on a ~1000-count full scale leave ~0.06 deg per vector
    for row in data_rows(&out_dir.join("triad.csv")) {
        let rms: f64 = row[1].parse().unwrap();
        assert!(rms < 0.1, "{} priority RMS {rms}", row[0]);
    }
}

#[test]
fn triad_rejects_missing_columns() {
    let dir = TempDir::new().unwrap();
    let passes = synth(dir.path(), &[]);
    let text = std::fs::read_to_string(&passes[0]).unwrap();
    let cut: String = text
        .lines()
        .map(|l| l.rsplitn(2, ',').nth(1).unwrap().to_string() + "\n")
        .collect();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, cut).unwrap();
    let out = attlab(&["triad", "--out", s(&dir.path().join("t")), s(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("qw"));
}

#[test]
fn train_window_bounds_and_pass_count() {
    let dir = TempDir::new().unwrap();
    let passes = synth(dir.path(), &[]);
    let o = dir.path().join("t");
    let out = attlab(&with_passes(vec!["train", "--case", "C1e", "--window", "12", "--out", s(&o)], &passes));
    assert_eq!(code(&out), 2);
    let out = attlab(&with_passes(vec!["train", "--case", "C1e", "--out", s(&o)], &passes[..4]));
    assert_eq!(code(&out), 2);
    let out = attlab(&with_passes(vec!["train", "--case", "C9z", "--out", s(&o)], &passes));
    assert_eq!(code(&out), 2);
}

#[test]
fn train_then_export() {
    let dir = TempDir::new().unwrap();
    let passes = synth(dir.path(), &[]);
    let cfg = write_config(dir.path(), QUICK);
    let o = dir.path().join("train");
    let stdout = ok(&attlab(&with_passes(
        vec!["train", "--case", "C1e", "--seed", "R1", "--window", "11", "--config", s(&cfg), "--out", s(&o)],
        &passes,
    )));
    assert!(stdout.contains("windows per pass: 352"), "{stdout}");
    assert!(stdout.contains("train RMS") && stdout.contains("test RMS"));
    for f in ["model.bin", "history.csv", "result.json", "manifest.json"] {
        assert!(o.join(f).exists(), "{f}");
    }
    let man: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(man["inputs"].as_array().unwrap().len(), 6);
    assert_eq!(man["config"]["run"]["n"], 11);
    assert_eq!(man["config"]["run"]["train"]["max_epochs"], 12);

    // same inputs, same seed: same model bytes
    let again = dir.path().join("again");
    ok(&attlab(&with_passes(
        vec!["train", "--case", "C1e", "--seed", "1", "--window", "11", "--config", s(&cfg), "--out", s(&again)],
        &passes,
    )));
    assert_eq!(std::fs::read(o.join("model.bin")).unwrap(), std::fs::read(again.join("model.bin")).unwrap());
    assert_eq!(std::fs::read(o.join("history.csv")).unwrap(), std::fs::read(again.join("history.csv")).unwrap());

    let e = dir.path().join("export");
    ok(&attlab(&["export", "--model", s(&o.join("model.bin")), "--out", s(&e), s(&passes[0]), s(&passes[4])]));
    let header = |p: &str| std::fs::read_to_string(e.join(p)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header("P1_series.csv"), header("P5_series.csv"));
    for p in ["P1", "P5"] {
        let text = std::fs::read_to_string(e.join(format!("{p}_series.csv"))).unwrap();
        assert!(!text.contains("NaN") && !text.contains("inf"));
        let rows = data_rows(&e.join(format!("{p}_series.csv")));
        assert_eq!(rows.len(), 352);
        assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() >= 0.0));
        assert_eq!(data_rows(&e.join(format!("{p}_raw.csv"))).len(), 362);
    }
}

#[test]
fn infeasible_case_exits_3() {
    let dir = TempDir::new().unwrap();
    let passes = synth(dir.path(), &["--eclipse"]);
    let out = attlab(&with_passes(vec!["train", "--case", "C1a", "--out", s(&dir.path().join("t"))], &passes));
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("uS_c"));
}

#[test]
fn ablate_two_cases_two_rows() {
    let dir = TempDir::new().unwrap();
    let passes = synth(dir.path(), &[]);
    let cfg = write_config(dir.path(), QUICK);
    let o = dir.path().join("ablate");
    ok(&attlab(&with_passes(
        vec!["ablate", "--cases", "C1a,C4f", "--seeds", "1", "--config", s(&cfg), "--out", s(&o)],
        &passes,
    )));
    let rows = data_rows(&o.join("report.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "C1a");
    assert_eq!(rows[1][0], "C4f");
    let md = std::fs::read_to_string(o.join("report.md")).unwrap();
    assert!(md.contains("| C1a |") && md.contains("| C4f |"));
    assert!(o.join("report.json").exists() && o.join("C4f/R1/model.bin").exists());
}

#[test]
fn resume_reproduces_uninterrupted_report() {
    let dir = TempDir::new().unwrap();
    let passes = synth(dir.path(), &[]);
    let cfg = write_config(dir.path(), QUICK);
    let run = |o: &Path, resume: bool| {
        let mut args = vec!["ablate", "--cases", "C1c", "--seeds", "2", "--jobs", "1", "--config", s(&cfg), "--out", s(o)];
        if resume {
            args.push("--resume");
        }
        ok(&attlab(&with_passes(args, &passes)));
    };
    let full = dir.path().join("full");
    run(&full, false);
    let cut = dir.path().join("cut");
    run(&cut, false);
    // simulate an interruption that lost the second cell
    std::fs::remove_dir_all(cut.join("C1c/R2")).unwrap();
    let kept = std::fs::read(cut.join("C1c/R1/model.bin")).unwrap();
    run(&cut, true);
    assert_eq!(std::fs::read(cut.join("C1c/R1/model.bin")).unwrap(), kept);
    for f in ["report.md", "report.csv"] {
        assert_eq!(std::fs::read(full.join(f)).unwrap(), std::fs::read(cut.join(f)).unwrap(), "{f}");
    }
    assert_eq!(
        std::fs::read(full.join("C1c/R2/model.bin")).unwrap(),
        std::fs::read(cut.join("C1c/R2/model.bin")).unwrap()
    );
}

#[test]
fn default_output_root_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_attlab"))
        .args(["synth", "--seed", "2"])
        .env("ATTLAB_OUT", dir.path())
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("synth/P1.csv").exists());
    assert!(dir.path().join("synth/manifest.json").exists());
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/config");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sectorscope"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn sectorscope")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Copies the shipped config into a fresh directory.
fn workdir() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    for f in ["defaults.cfg", "synth.spec"] {
        fs::copy(Path::new(CONFIG_DIR).join(f), d.path().join(f)).unwrap();
    }
    d
}

/// A one-week hourly variant of the defaults, for tests that only need
/// something to chew on.
fn small_workdir() -> tempfile::TempDir {
    let d = workdir();
    let cfg = fs::read_to_string(d.path().join("defaults.cfg")).unwrap();
    let cfg = cfg
        .replace("days = 13", "days = 15")
        .replace("resolution = minute", "resolution = hour")
        .replace("start = 2011-08-16 00:00", "start = 2011-08-15 00:00");
    fs::write(d.path().join("small.cfg"), cfg).unwrap();
    d
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in fs::read_dir(&p).unwrap() {
            let e = e.unwrap().path();
            if e.is_dir() {
                stack.push(e);
            } else {
                out.insert(e.strip_prefix(root).unwrap().to_path_buf(), fs::read(&e).unwrap());
            }
        }
    }
    out
}

fn csv_field(text: &str, row_key: &[(usize, &str)], col: usize) -> Option<String> {
    text.lines()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| row_key.iter().all(|(i, v)| f.get(*i) == Some(v)))
        .and_then(|f| f.get(col).map(|s| s.to_string()))
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn version_succeeds() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn unknown_subcommand_fails() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["frobnicate"]).status.code(), Some(1));
}

#[test]
fn bad_config_reports_line_and_exits_one() {
    let d = workdir();
    let cfg = fs::read_to_string(d.path().join("defaults.cfg"))
        .unwrap()
        .replace("nw = 4", "nw = four");
    fs::write(d.path().join("bad.cfg"), &cfg).unwrap();
    let line = cfg.lines().position(|l| l.starts_with("nw = ")).unwrap() + 1;
    let out = run(d.path(), &["spectrum", "--config", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!(":{line}")), "{err}");
}

#[test]
fn missing_input_exits_one() {
    let d = workdir();
    let out = run(d.path(), &["tessellate", "--config", "defaults.cfg"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn quake_onset_matches_generated_arrival() {
    let d = workdir();
    ok(d.path(), &["synth", "--config", "defaults.cfg"]);
    ok(d.path(), &["quake", "--config", "defaults.cfg"]);
    let truth = fs::read_to_string(d.path().join("out/ground_truth.csv")).unwrap();
    let arrival = csv_field(&truth, &[(0, "quake"), (2, "arrival")], 3).unwrap();
    let timing = fs::read_to_string(d.path().join("out/quake_timing.csv")).unwrap();
    for ch in ["calls", "texts"] {
        assert_eq!(
            csv_field(&timing, &[(0, ch)], 1).as_deref(),
            Some(arrival.as_str()),
            "{ch}"
        );
    }
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let pipeline = [
        "synth",
        "tessellate",
        "aggregate",
        "stats",
        "spectrum",
        "corr",
        "tsmap",
        "storm",
    ];
    let mut results = Vec::new();
    for threads in ["1", "3"] {
        let d = small_workdir();
        for cmd in pipeline {
            ok(d.path(), &["--threads", threads, cmd, "--config", "small.cfg"]);
        }
        results.push((files_under(&d.path().join("data")), files_under(&d.path().join("out"))));
    }
    assert!(!results[0].1.is_empty());
    assert_eq!(results[0].0, results[1].0);
    assert_eq!(
        results[0].1.keys().collect::<Vec<_>>(),
        results[1].1.keys().collect::<Vec<_>>()
    );
    for (k, v) in &results[0].1 {
        assert!(v == &results[1].1[k], "{} differs", k.display());
    }
}

#[test]
fn analysis_leaves_inputs_untouched() {
    let d = small_workdir();
    ok(d.path(), &["synth", "--config", "small.cfg"]);
    let before = files_under(&d.path().join("data"));
    for cmd in [
        "tessellate",
        "aggregate",
        "anomaly",
        "stats",
        "spectrum",
        "corr",
        "grid",
        "tsmap",
        "storm",
    ] {
        ok(d.path(), &[cmd, "--config", "small.cfg"]);
    }
    assert_eq!(before, files_under(&d.path().join("data")));
}

#[test]
fn seed_flag_changes_volumes() {
    let a = small_workdir();
    let b = small_workdir();
    ok(a.path(), &["synth", "--config", "small.cfg"]);
    ok(b.path(), &["--seed", "7", "synth", "--config", "small.cfg"]);
    let va = fs::read(a.path().join("data/volumes.csv")).unwrap();
    let vb = fs::read(b.path().join("data/volumes.csv")).unwrap();
    assert_ne!(va, vb);
}

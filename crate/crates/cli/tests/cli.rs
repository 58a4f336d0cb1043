use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fst-forge"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

/// Plural-marking normalization data: append `s` after a final `t`.
fn dataset(dir: &Path) -> PathBuf {
    let words = [
        "cat", "tac", "coat", "taco", "toast", "atoll", "cot", "oat", "act", "cocoa", "tot", "toco",
    ];
    let row = |w: &str| {
        if w.ends_with('t') {
            format!("{w}\t{w}s\n")
        } else {
            format!("{w}\t{w}\n")
        }
    };
    let base = dir.join("plural");
    let (train, rest) = words.split_at(8);
    fs::write(
        base.with_extension("trn"),
        train.iter().map(|w| row(w)).collect::<String>(),
    )
    .unwrap();
    fs::write(
        base.with_extension("dev"),
        rest[..2].iter().map(|w| row(w)).collect::<String>(),
    )
    .unwrap();
    fs::write(
        base.with_extension("tst"),
        rest[2..].iter().map(|w| row(w)).collect::<String>(),
    )
    .unwrap();
    base
}

#[test]
fn nochange_reports_identity_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let o = run(
        &[
            "nochange",
            data.to_str().unwrap(),
            "--task",
            "normalization",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["system"], "nochange");
    // test words: tot -> tots, toco -> toco
    assert_eq!(r["test_accuracy"], 0.5);
}

#[test]
fn ostia_then_eval_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let d = data.to_str().unwrap();
    let o = run(
        &["ostia", d, "--task", "normalization", "--out", "o.fst"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert!(r["states"].as_u64().unwrap() >= 1);
    assert!(r["flags"].as_array().unwrap().is_empty());

    let o = run(&["eval", "o.fst", d, "--task", "normalization"], dir.path());
    assert_eq!(code(&o), 0);
    let e = json(&o);
    assert_eq!(e["total"], 2);
    let parts = e["correct"].as_u64().unwrap()
        + e["wrong_output"].as_u64().unwrap()
        + e["no_path"].as_u64().unwrap();
    assert_eq!(parts, 2);

    let o = run(
        &["export", "o.fst", "--format", "dot", "--out", "o.dot"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(dir.path().join("o.dot"))
        .unwrap()
        .starts_with("digraph"));
    let o = run(&["export", "o.fst", "--format", "att"], dir.path());
    assert_eq!(
        String::from_utf8_lossy(&o.stdout),
        fs::read_to_string(dir.path().join("o.fst")).unwrap()
    );
}

#[test]
fn align_prints_one_line_per_training_pair() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let o = run(
        &[
            "align",
            data.to_str().unwrap(),
            "--task",
            "normalization",
            "--align",
            "med",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().next().unwrap().starts_with("c:c a:a t:t"));
}

#[test]
fn train_extract_and_sweep_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let d = data.to_str().unwrap();
    let small = [
        "--task",
        "normalization",
        "--dim",
        "8",
        "--epochs",
        "5",
        "--seed",
        "3",
    ];

    let mut args = vec!["train", d, "--out", "m.json"];
    args.extend(small);
    let o = run(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("m.json").is_file());

    let mut args = vec![
        "extract", d, "--model", "m.json", "--k", "4", "--out", "x.fst",
    ];
    args.extend(small);
    let o = run(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(json(&o)["dev_accuracy"].is_number());

    fs::write(
        dir.path().join("sweep.toml"),
        "[sweep]\ndims = [8]\nepochs = [5]\nk_min = 2\nk_cap = 6\n",
    )
    .unwrap();
    let o = run(
        &[
            "sweep",
            d,
            "--task",
            "normalization",
            "--budget",
            "2",
            "--out",
            "run",
            "--config",
            "sweep.toml",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/report.json")).unwrap())
            .unwrap();
    for key in [
        "dataset",
        "system",
        "config",
        "dev_accuracy",
        "test_accuracy",
        "states",
        "transitions",
        "wall_clock_s",
        "flags",
    ] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert!(dir.path().join("run/best.fst").is_file());
}

#[test]
fn exit_codes_distinguish_usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let d = data.to_str().unwrap();
    assert_eq!(
        code(&run(&["nochange", d, "--task", "poetry"], dir.path())),
        1
    );
    assert_eq!(code(&run(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&run(&["--help"], dir.path())), 0);

    fs::write(dir.path().join("bad.toml"), "[train]\ndimension = 3\n").unwrap();
    let o = run(
        &[
            "train",
            d,
            "--task",
            "normalization",
            "--config",
            "bad.toml",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1);

    assert_eq!(
        code(&run(&["nochange", "missing", "--task", "g2p"], dir.path())),
        2
    );
    fs::write(data.with_extension("dev"), "only-one-field\n").unwrap();
    let o = run(&["nochange", d, "--task", "normalization"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":1:"));
}

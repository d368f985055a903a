use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn unimom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unimom"))
        .args(args)
        .env_remove("UNIMOM_JOBS")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = unimom(&[
            "synth",
            "--seed",
            "7",
            "--assets",
            "8",
            "--years",
            "15",
            "--out",
            path(p),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    assert!(text.starts_with(b"date,asset,settle\n"));
}

#[test]
fn usage_errors_exit_2() {
    let out = unimom(&["backtest", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--panel"));
    assert_eq!(unimom(&["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(unimom(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn failures_give_one_line_diagnostic() {
    let out = unimom(&["features", "--panel", "/no/such/panel.csv", "--out", "/tmp/f.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.starts_with("unimom: error:"));
}

#[test]
fn gradcheck_passes() {
    let out = unimom(&["gradcheck"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let last = text.lines().last().unwrap();
    let err: f64 = last.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(err < 1e-4, "{last}");
}

#[test]
fn ingest_features_targets_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let raw = d.join("raw.csv");
    assert!(unimom(&[
        "synth",
        "--seed",
        "1",
        "--assets",
        "3",
        "--years",
        "2",
        "--out",
        path(&raw)
    ])
    .status
    .success());
    let panel = d.join("panel.csv");
    assert!(unimom(&["ingest", "--input", path(&raw), "--out", path(&panel)])
        .status
        .success());
    assert_eq!(fs::read(&raw).unwrap(), fs::read(&panel).unwrap());
    let feats = d.join("f.csv");
    assert!(unimom(&["features", "--panel", path(&panel), "--out", path(&feats)])
        .status
        .success());
    assert!(fs::read_to_string(&feats)
        .unwrap()
        .starts_with("date,asset,f3,f5,f10,f21,f63,f126,f252\n"));
    let targets = d.join("t.csv");
    assert!(unimom(&[
        "targets",
        "--panel",
        path(&panel),
        "--horizon",
        "60",
        "--out",
        path(&targets)
    ])
    .status
    .success());
    assert!(fs::read_to_string(&targets).unwrap().starts_with("date,asset,target\n"));
    assert_eq!(
        unimom(&[
            "targets",
            "--panel",
            path(&panel),
            "--horizon",
            "30",
            "--out",
            path(&targets)
        ])
        .status
        .code(),
        Some(2)
    );
}

const TINY_CONFIG: &str = "\
seed = 3
first_train_years = 4
sequence_length = 5
budget = 2
batch_len = 63
max_epochs = 3
patience = 2

[grid]
lstm_layers = [1]
lstm_hidden = [4]
n_experts = [2]
task_layers = [2]
task_hidden = [4, 6]
";

#[test]
fn backtest_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let panel = d.join("panel.csv");
    assert!(unimom(&[
        "synth",
        "--seed",
        "2",
        "--assets",
        "4",
        "--years",
        "5",
        "--start-year",
        "2000",
        "--out",
        path(&panel)
    ])
    .status
    .success());
    let cfg = d.join("run.toml");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let out = d.join("out");
    let res = unimom(&[
        "backtest",
        "--panel",
        path(&panel),
        "--config",
        path(&cfg),
        "--out",
        path(&out),
        "--loss",
        "both",
        "--jobs",
        "2",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 15);
    assert!(summary.starts_with("Portfolios,Ann. Return (%),Ann. vol (%),Sharpe,Sortino,Max DD (%)\n"));
    assert_eq!(
        fs::read_to_string(out.join("ablation.csv")).unwrap().lines().count(),
        13
    );
    assert!(out.join("cumret_deepunifiedmom_can.csv").exists());
    assert!(out.join("runs/softcap/models").read_dir().unwrap().count() == 1);

    let names = [
        "summary.csv",
        "ablation.csv",
        "allocations.csv",
        "cumret_tsmom_1_12.csv",
    ];
    let before: Vec<Vec<u8>> = names.iter().map(|n| fs::read(out.join(n)).unwrap()).collect();
    for n in names {
        fs::remove_file(out.join(n)).unwrap();
    }
    assert!(unimom(&["report", "--in", path(&out)]).status.success());
    let after: Vec<Vec<u8>> = names.iter().map(|n| fs::read(out.join(n)).unwrap()).collect();
    assert_eq!(before, after);

    // same seed, same run, regardless of job count
    let again = d.join("again");
    let res = unimom(&[
        "backtest",
        "--panel",
        path(&panel),
        "--config",
        path(&cfg),
        "--out",
        path(&again),
        "--loss",
        "softcap",
    ]);
    assert!(res.status.success());
    assert_eq!(
        fs::read(out.join("runs/softcap/run.json")).unwrap(),
        fs::read(again.join("runs/softcap/run.json")).unwrap()
    );
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("p.csv");
    assert!(
        unimom(&["synth", "--assets", "2", "--years", "2", "--out", path(&panel)])
            .status
            .success()
    );
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "learning_rat = 0.1\n").unwrap();
    let out = unimom(&[
        "backtest",
        "--panel",
        path(&panel),
        "--config",
        path(&cfg),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
}

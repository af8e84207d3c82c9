use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hadl::cli::{cmd_ablate, cmd_export_weights, cmd_robustness, cmd_train, read_weight_csv, trend_violations, ExperimentConfig, KEYS};
use hadl::model::load_checkpoint;

fn sine(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: "synth:sine_mix".into(),
        lookback: 64,
        horizons: vec![16],
        out_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn quick(out: &Path) -> ExperimentConfig {
    ExperimentConfig { max_epochs: 1, patience: 1, ..sine(out) }
}

#[test]
fn train_sine_mix() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let outcome = cmd_train(&sine(dir.path())).unwrap();
    assert!(start.elapsed() < Duration::from_secs(10));
    let report = &outcome[0].runs[0].report;
    assert!(report.mse < 0.05, "test mse {}", report.mse);

    let run_dir = dir.path().join("synth_sine_mix/haar-dct-lowrank50-bias/16");
    for f in ["checkpoint.bin", "trace.csv", "trace.json", "report.csv", "report.json"] {
        assert!(run_dir.join(f).is_file(), "{f} missing");
    }
    let csv = fs::read_to_string(run_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("# config_fingerprint="));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["lookback"], 64);
    assert_eq!(json["config_fingerprint"].as_str().unwrap().len(), 64);

    let model = load_checkpoint(&run_dir.join("checkpoint.bin")).unwrap();
    assert_eq!(&model, &outcome[0].runs[0].model);
}

#[test]
fn export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = cmd_train(&quick(dir.path())).unwrap();
    let ckpt = outcome[0].dir.join("checkpoint.bin");
    let out = dir.path().join("weights.csv");
    let w = cmd_export_weights(&ckpt, &out).unwrap();
    assert_eq!(w.shape(), (32, 16));
    let back = read_weight_csv(&out).unwrap();
    let expected = outcome[0].runs[0].model.effective_weight().unwrap();
    assert_eq!(back.shape(), expected.shape());
    for (a, b) in back.as_slice().iter().zip(expected.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn several_seeds_get_their_own_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { seeds: vec![1, 2], ..quick(dir.path()) };
    let outcome = cmd_train(&cfg).unwrap();
    let files: Vec<String> = fs::read_dir(&outcome[0].dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(files.iter().filter(|f| f.starts_with("checkpoint_seed")).count(), 2);
    let csv = fs::read_to_string(outcome[0].dir.join("report.csv")).unwrap();
    assert!(csv.contains("# mse_std="));
    assert_eq!(csv.lines().filter(|l| l.starts_with("synth:sine_mix")).count(), 2);
}

#[test]
fn ablate_rank_and_head_param_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { lookback: 512, horizons: vec![96], ..quick(dir.path()) };
    let table = cmd_ablate(&cfg, "rank").unwrap();
    let params: Vec<u64> = table.rows.iter().map(|r| r.cells[0].params).collect();
    assert_eq!(params, vec![5376, 12416, 19456, 26496]);
    let csv = fs::read_to_string(dir.path().join("synth_sine_mix/ablation_rank.csv")).unwrap();
    assert!(csv.contains("setting,variant,lookback,mse_h96,mae_h96,params_h96"));

    let cfg = ExperimentConfig { horizons: vec![192], ..cfg };
    let table = cmd_ablate(&cfg, "head").unwrap();
    let params: Vec<u64> = table.rows.iter().map(|r| r.cells[0].params).collect();
    assert_eq!(params, vec![17920, 49152]);
}

#[test]
fn ablate_lookback_has_one_row_per_l() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { lookbacks: vec![48, 512], ..quick(dir.path()) };
    let table = cmd_ablate(&cfg, "lookback").unwrap();
    let ls: Vec<usize> = table.rows.iter().map(|r| r.lookback).collect();
    assert_eq!(ls, vec![48, 512]);
}

#[test]
fn robustness_with_only_clean_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { etas: vec![0.0], ..quick(dir.path()) };
    let rep = cmd_robustness(&cfg).unwrap().remove(0);
    assert!(rep.nrr_per_eta.is_empty());
    assert_eq!(rep.mav, None);
    let csv = fs::read_to_string(dir.path().join("synth_sine_mix/haar-dct-lowrank50-bias/16/robustness.csv")).unwrap();
    assert!(csv.contains("# mav=undefined"));
}

#[test]
fn robustness_on_realizable_task() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        dataset: "synth:low_rank_target".into(),
        rank: 2,
        etas: vec![0.0, 0.3, 0.7],
        ..sine(dir.path())
    };
    let rep = cmd_robustness(&cfg).unwrap().remove(0);
    assert_eq!(rep.nrr_per_eta.len(), 2);
    assert!(rep.mav.is_some());
    for (eta, r) in trend_violations(&rep, 0.01) {
        println!("warning: NRR falls to {r} at eta={eta}");
    }
}

fn hadl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hadl"))
}

#[test]
fn binary_params() {
    let cases: [(&[&str], &str); 3] = [
        (&["-H", "720"], "total 49520 "),
        (&["-H", "336", "--rank", "40"], "total 24016 "),
        (&["-H", "96", "--rank", "1", "--no-bias"], "total 352 "),
    ];
    for (args, expected) in cases {
        let out = hadl().arg("params").args(args).output().unwrap();
        assert!(out.status.success());
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert!(stdout.starts_with(expected), "{stdout}");
    }
}

#[test]
fn binary_help_lists_keys() {
    let out = hadl().args(["train", "--help"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for (key, _) in KEYS {
        assert!(text.contains(&format!("--{key}")));
    }
}

#[test]
fn binary_missing_dataset_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = hadl()
        .args(["train", "--dataset", "ETTh1", "--path"])
        .arg(dir.path().join("nope.csv"))
        .arg("--out_dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error:"));
    assert!(!out_dir.exists());
}

#[test]
fn binary_config_file_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, format!("dataset = synth:sine_mix\nlookback = 32\nhorizons = 8\nmax_epochs = 2\npatience = 1\nout_dir = {}\n", dir.path().join("runs").display())).unwrap();
    let out = hadl().args(["train", "--config"]).arg(&cfg).args(["--rank", "3"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = dir.path().join("runs/synth_sine_mix/haar-dct-lowrank3-bias/8/checkpoint.bin");
    let weights = dir.path().join("w.csv");
    let out = hadl().args(["export-weights", "--checkpoint"]).arg(&ckpt).arg("--out").arg(&weights).output().unwrap();
    assert!(out.status.success());
    assert_eq!(read_weight_csv(&weights).unwrap().shape(), (16, 8));
}

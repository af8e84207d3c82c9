//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints its `ACCEPTANCE` line (PASS, FAIL, SKIP or WARN); the
//! process exits non-zero if any criterion fails.
//!
//! Criteria 6 and 7 need the ETTh1 CSV. Point `HADL_ETTH1` at it, or place it
//! at `data/ETTh1.csv` in the workspace root.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hadl::cli::{cmd_ablate, cmd_robustness, cmd_train, ExperimentConfig};
use hadl::data::{synth, SynthParams, Synthetic};
use hadl::metrics::{improvement, mav, nrr};
use hadl::model::{format_thousands, param_count, HeadKind, Rounding};
use hadl::optim::{gradcheck, train, TrainConfig};
use hadl::transforms::{dct2_orthonormal, dct2_raw, energy, haar_forward};
use hadl::{HadlModel, Tensor3, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: u32,
    name: &'static str,
    status: &'static str,
    detail: String,
}

fn report(id: u32, name: &'static str, status: &'static str, detail: &str) -> Outcome {
    Outcome { id, name, status, detail: detail.to_string() }
}

fn verdict(id: u32, name: &'static str, ok: bool, detail: &str) -> Outcome {
    report(id, name, if ok { "PASS" } else { "FAIL" }, detail)
}

fn etth1_path() -> Option<PathBuf> {
    let path = std::env::var_os("HADL_ETTH1")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ETTh1.csv"));
    path.is_file().then_some(path)
}

fn oracle(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let mut s = 0.0;
            for (i, v) in x.iter().enumerate() {
                s += v * (PI * (i as f64 + 0.5) * k as f64 / n).cos();
            }
            s
        })
        .collect()
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn criterion_1_transform_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut dct_err, mut recon_err, mut haar_energy, mut ortho_energy) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for n in 1..=64 {
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let fast = dct2_raw(&x).unwrap();
            let slow = oracle(&x);
            let diff: Vec<f64> = fast.iter().zip(&slow).map(|(a, b)| a - b).collect();
            dct_err = dct_err.max(max_abs(&diff) / max_abs(&slow).max(f64::MIN_POSITIVE));

            let e = energy(&x);
            let ortho = dct2_orthonormal(&x).unwrap();
            ortho_energy = ortho_energy.max((energy(&ortho) - e).abs() / e);

            if n % 2 == 0 {
                let pair = haar_forward(&x).unwrap();
                let back = pair.reconstruct();
                let d: Vec<f64> = back.iter().zip(&x).map(|(a, b)| a - b).collect();
                recon_err = recon_err.max(max_abs(&d));
                let split = energy(&pair.approx) + energy(&pair.detail);
                haar_energy = haar_energy.max((split - e).abs() / e);
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = dct_err < 1e-9 && recon_err < 1e-12 && haar_energy < 1e-9 && ortho_energy < 1e-9 && elapsed < Duration::from_secs(5);
    verdict(
        1,
        "transform oracles",
        ok,
        &format!(
            "dct rel {dct_err:.2e}, haar recon {recon_err:.2e}, haar energy {haar_energy:.2e}, orthonormal energy {ortho_energy:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2_gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let use_haar = i % 4 != 3;
        let d_in = rng.random_range(1..=8usize);
        let lookback = if use_haar { 2 * d_in } else { d_in };
        let horizon = rng.random_range(1..=5usize);
        let head = if i % 5 == 4 { HeadKind::Dense } else { HeadKind::LowRank(rng.random_range(1..=3)) };
        let variant = Variant { use_haar, use_dct: i % 3 != 2, head, bias: i % 2 == 0 };
        let model = HadlModel::init(lookback, horizon, variant, i).unwrap();
        let batch = rng.random_range(1..=4usize);
        let channels = rng.random_range(1..=3usize);
        let x = Tensor3::from_vec(batch, channels, lookback, (0..batch * channels * lookback).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let y = Tensor3::from_vec(batch, channels, horizon, (0..batch * channels * horizon).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let rep = gradcheck(&model, &x, &y, 0.0, 1e-3, 1e-5).unwrap();
        worst = worst.max(rep.max_rel_error);
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        "gradient check",
        worst < 1e-5 && elapsed < Duration::from_secs(10),
        &format!("max relative error {worst:.2e} over 100 instances, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn criterion_3_parameter_counts() -> Outcome {
    // (label, horizon, head, bias, haar, decimals, rounding, printed) at L = 512
    let lr50 = HeadKind::LowRank(50);
    let lr40 = HeadKind::LowRank(40);
    let mut cells: Vec<(&str, usize, HeadKind, bool, bool, usize, Rounding, &str)> = Vec::new();
    for (h, s) in [(96, "17.6"), (192, "22.5"), (336, "29.9"), (720, "49.5")] {
        cells.push(("r=50 bias", h, lr50, true, true, 1, Rounding::Truncate, s));
    }
    for (h, s) in [(96, "14.18"), (192, "18.11"), (336, "24.02"), (720, "39.76")] {
        cells.push(("r=40 haar", h, lr40, true, true, 2, Rounding::Nearest, s));
    }
    for (h, s) in [(96, "24.42"), (192, "26.35"), (336, "34.26"), (720, "50.00")] {
        cells.push(("r=40 no haar", h, lr40, true, false, 2, Rounding::Nearest, s));
    }
    for (h, s) in [(96, "14.08"), (192, "17.92"), (336, "23.68"), (720, "39.04")] {
        cells.push(("r=40 no bias", h, lr40, false, true, 2, Rounding::Nearest, s));
    }
    for (h, s) in [(96, "24.58"), (192, "49.15"), (336, "86.02"), (720, "184.32")] {
        cells.push(("dense no bias", h, HeadKind::Dense, false, true, 2, Rounding::Nearest, s));
    }

    let mut mismatches = Vec::new();
    for (label, h, head, bias, haar, decimals, rounding, printed) in &cells {
        let count = param_count(512, *h, *head, *bias, *haar).unwrap();
        let shown = format_thousands(count.total, *decimals, *rounding);
        let ok = shown == *printed;
        println!(
            "  {label} H={h}: {} -> {shown}K vs printed {printed}K {}",
            count.total,
            if ok { "ok" } else { "MISMATCH" }
        );
        if !ok {
            mismatches.push(format!("{label} H={h}: {} ({shown}K) vs {printed}K", count.total));
        }
    }
    let detail = if mismatches.is_empty() {
        format!("{} cells match", cells.len())
    } else {
        format!(
            "{}/{} cells match; unmatched: {}",
            cells.len() - mismatches.len(),
            cells.len(),
            mismatches.join("; ")
        )
    };
    verdict(3, "parameter counts", mismatches.is_empty(), &detail)
}

fn criterion_4_metric_arithmetic() -> Outcome {
    let round3 = |v: f64| (v * 1000.0).round() / 1000.0;
    let ettm2 = [(0.164, 0.163), (0.221, 0.218), (0.274, 0.271), (0.360, 0.359)];
    let traffic = [(0.367, 0.412), (0.390, 0.433), (0.397, 0.445), (0.433, 0.481)];
    let got_ettm2: Vec<f64> = ettm2.iter().map(|(b, o)| round3(improvement(*b, *o))).collect();
    let got_traffic: Vec<f64> = traffic.iter().map(|(b, o)| round3(improvement(*b, *o))).collect();
    let m = mav(&[1.002, 1.007, 1.028, 1.044]).unwrap();
    let ratio = nrr(0.428, 0.427).unwrap();
    let ok = got_ettm2 == [0.001, 0.003, 0.003, 0.001]
        && got_traffic == [-0.045, -0.043, -0.048, -0.048]
        && (m - 0.020).abs() <= 0.0005
        && (ratio - 1.002).abs() < 0.0005;
    verdict(
        4,
        "metric arithmetic",
        ok,
        &format!("ETTm2 Imp. {got_ettm2:?}, Traffic Imp. {got_traffic:?}, MAV {m:.5}, NRR {ratio:.4}"),
    )
}

fn criterion_5_realizable_convergence() -> Outcome {
    let params = SynthParams { channels: 3, lookback: 64, horizon: 16, rank: 2, ..SynthParams::default() };
    let Synthetic::Task(task) = synth("low_rank_target", &params, 0).unwrap() else {
        unreachable!()
    };
    let start = Instant::now();
    let variant = Variant { head: HeadKind::LowRank(2), ..Variant::default() };
    let model = HadlModel::init(64, 16, variant, 42).unwrap();
    let cfg = TrainConfig { max_epochs: 200, ..TrainConfig::default() };
    let (_, trace) = train(model, &task.train, &task.val, &cfg).unwrap();
    let elapsed = start.elapsed();
    let best = trace.best_val_mse.unwrap();
    let reached = trace.epochs.iter().find(|e| e.val_mse < 1e-4).map(|e| e.epoch);
    verdict(
        5,
        "realizable convergence",
        best < 1e-4 && elapsed < Duration::from_secs(30),
        &format!(
            "best val MSE {best:.3e}, below 1e-4 from epoch {reached:?}, {} epochs, {:.2}s",
            trace.epochs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn etth1_config(path: &Path, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: "ETTh1".into(),
        path: Some(path.display().to_string()),
        out_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn criterion_6_etth1_reproduction() -> Outcome {
    let Some(path) = etth1_path() else {
        return report(6, "ETTh1 reproduction", "SKIP", "ETTh1.csv not found; set HADL_ETTH1");
    };
    let out = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { horizons: vec![96], ..etth1_config(&path, out.path()) };
    let start = Instant::now();
    let outcome = cmd_train(&cfg).unwrap();
    let elapsed = start.elapsed();
    let mse = outcome[0].runs[0].report.mse;
    verdict(
        6,
        "ETTh1 reproduction",
        (0.34..=0.40).contains(&mse) && elapsed < Duration::from_secs(300),
        &format!("test MSE {mse:.4} (target 0.34..0.40), {:.1}s", elapsed.as_secs_f64()),
    )
}

fn criterion_7_robustness_trend() -> Outcome {
    let Some(path) = etth1_path() else {
        return report(7, "robustness trend", "WARN", "ETTh1.csv not found; set HADL_ETTH1");
    };
    let out = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { horizons: vec![192], ..etth1_config(&path, out.path()) };
    let rep = cmd_robustness(&cfg).unwrap().remove(0);
    let first = rep.nrr_per_eta[0];
    let m = rep.mav.unwrap();
    let ok = (0.99..=1.01).contains(&first) && m <= 0.03;
    report(
        7,
        "robustness trend",
        if ok { "PASS" } else { "WARN" },
        &format!("NRR at eta=0.3 {first:.4}, MAV {m:.4}, NRRs {:?}", rep.nrr_per_eta),
    )
}

fn read_csvs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_8_determinism() -> Outcome {
    let run = |out: &Path, parallel: bool| {
        let base = ExperimentConfig {
            dataset: "synth:sine_mix".into(),
            lookback: 48,
            horizons: vec![8, 16],
            rank: 6,
            max_epochs: 4,
            patience: 2,
            robust_max_epochs: 3,
            robust_patience: 2,
            etas: vec![0.0, 0.5],
            ranks: vec![2, 4],
            synth_length: 600,
            synth_noise: 0.1,
            out_dir: out.to_path_buf(),
            parallel,
            ..ExperimentConfig::default()
        };
        cmd_train(&base).unwrap();
        cmd_robustness(&base).unwrap();
        cmd_ablate(&base, "rank").unwrap();
        read_csvs(out)
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let first = run(a.path(), false);
    let second = run(b.path(), false);
    let threaded = run(c.path(), true);
    let ok = !first.is_empty() && first == second && first == threaded;
    verdict(
        8,
        "determinism",
        ok,
        &format!("{} CSV files compared across two sequential runs and one threaded run", first.len()),
    )
}

fn main() {
    let criteria: [fn() -> Outcome; 8] = [
        criterion_1_transform_oracles,
        criterion_2_gradient_check,
        criterion_3_parameter_counts,
        criterion_4_metric_arithmetic,
        criterion_5_realizable_convergence,
        criterion_6_etth1_reproduction,
        criterion_7_robustness_trend,
        criterion_8_determinism,
    ];
    let mut failed = 0;
    for (i, run) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            report(i as u32 + 1, "panicked", "FAIL", &msg)
        });
        println!("ACCEPTANCE {} {}: {} ({})", outcome.id, outcome.name, outcome.status, outcome.detail);
        if outcome.status == "FAIL" {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria failed", failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

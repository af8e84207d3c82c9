use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::{derive_seed, ExperimentConfig};
use crate::data::{
    inject_noise, load_csv, prepare_splits, synth, Convention, CsvSchema, Registry, Splits, SynthKind, SynthParams,
    Synthetic, WindowBatch,
};
use crate::error::{HadlError, Result};
use crate::metrics::{mean_std, write_reports, EvalReport, RobustnessReport};
use crate::model::{load_checkpoint, param_count, save_checkpoint, FeaturePipeline, HadlModel, HeadKind, ParamCount, Rounding, Variant};
use crate::optim::{evaluate, train_prepared, Prepared, TrainConfig, TrainTrace};
use crate::tensor::Matrix;

/// Where experiment windows come from.
pub enum DataSource {
    Series(Splits),
    /// Realizable windows regenerated for each `(L, H)`.
    Task { params: SynthParams, seed: u64 },
}

impl DataSource {
    pub fn open(cfg: &ExperimentConfig) -> Result<Self> {
        if let Some(kind) = cfg.dataset.strip_prefix("synth:") {
            let params = SynthParams {
                channels: cfg.synth_channels,
                length: cfg.synth_length,
                noise_std: cfg.synth_noise,
                rank: cfg.synth_rank,
                ..SynthParams::default()
            };
            if kind.parse::<SynthKind>()? == SynthKind::LowRankTarget {
                return Ok(DataSource::Task { params, seed: cfg.synth_seed });
            }
            let Synthetic::Series(ds) = synth(kind, &params, cfg.synth_seed)? else {
                unreachable!("only low_rank_target yields windows")
            };
            let convention = match &cfg.convention {
                Some(c) => c.parse()?,
                None => Convention::DEFAULT_RATIO,
            };
            return prepare_splits(&ds, convention, cfg.standardize).map(DataSource::Series);
        }

        let (dataset, mut convention) = match (&cfg.path, &cfg.registry) {
            (Some(path), _) => {
                let ds = load_csv(Path::new(path), &CsvSchema::for_name(&cfg.dataset))?;
                (ds, Convention::for_dataset(&cfg.dataset))
            }
            (None, Some(reg)) => Registry::load(Path::new(reg))?.open(&cfg.dataset)?,
            (None, None) => {
                return Err(HadlError::Config(format!(
                    "dataset '{}' needs a path or a registry",
                    cfg.dataset
                )))
            }
        };
        if let Some(c) = &cfg.convention {
            convention = c.parse()?;
        }
        prepare_splits(&dataset, convention, cfg.standardize).map(DataSource::Series)
    }

    /// Train, validation and test features for one run. Noise of std `eta`
    /// touches the training data only.
    pub fn prepare(
        &self,
        pipeline: &FeaturePipeline,
        horizon: usize,
        stride: usize,
        eta: f64,
        noise_seed: u64,
    ) -> Result<(Prepared, Prepared, Prepared)> {
        let lookback = pipeline.lookback();
        match self {
            DataSource::Series(s) => {
                let train_seg = inject_noise(&s.train, eta, noise_seed)?;
                let train = train_seg.windows(lookback, horizon, stride)?;
                let val = s.val.windows(lookback, horizon, stride)?;
                let test = s.test.windows(lookback, horizon, stride)?;
                Ok((
                    Prepared::from_source(pipeline, &train)?,
                    Prepared::from_source(pipeline, &val)?,
                    Prepared::from_source(pipeline, &test)?,
                ))
            }
            DataSource::Task { params, seed } => {
                let params = SynthParams { lookback, horizon, ..params.clone() };
                let Synthetic::Task(task) = synth("low_rank_target", &params, *seed)? else {
                    unreachable!("low_rank_target yields windows")
                };
                let mut train = task.train;
                if eta > 0.0 {
                    add_noise(&mut train, eta, noise_seed);
                }
                Ok((
                    Prepared::from_source(pipeline, &train)?,
                    Prepared::from_source(pipeline, &task.val)?,
                    Prepared::from_source(pipeline, &task.test)?,
                ))
            }
        }
    }
}

fn add_noise(batch: &mut WindowBatch, eta: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in batch.inputs.as_mut_slice().iter_mut().chain(batch.targets.as_mut_slice()) {
        let z: f64 = rng.sample(StandardNormal);
        *v += eta * z;
    }
}

/// Result of training and testing one model.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub model: HadlModel,
    pub trace: TrainTrace,
    pub report: EvalReport,
}

/// Seed of the run for horizon `h`; every variant and noise level at that
/// horizon shares it so comparisons are matched.
pub fn run_seed(base: u64, horizon: usize) -> u64 {
    derive_seed(base, horizon as u64)
}

/// Seed of the noise draw at level `eta` for a run seeded with `seed`.
pub fn noise_seed(seed: u64, eta: f64) -> u64 {
    derive_seed(seed, eta.to_bits())
}

#[allow(clippy::too_many_arguments)]
pub fn run_one(
    source: &DataSource,
    cfg: &ExperimentConfig,
    variant: Variant,
    lookback: usize,
    horizon: usize,
    seed: u64,
    eta: f64,
    train_cfg: &TrainConfig,
) -> Result<RunResult> {
    let model = HadlModel::init(lookback, horizon, variant, seed)?;
    let pipeline = model.pipeline()?;
    let (train, val, test) = source.prepare(&pipeline, horizon, cfg.stride, eta, noise_seed(seed, eta))?;
    let train_cfg = TrainConfig { seed, noise_eta: eta, ..train_cfg.clone() };
    let (model, trace) = train_prepared(model, &train, &val, &train_cfg)?;
    let (mse, mae) = evaluate(&model, &test)?;
    let report = EvalReport {
        dataset: cfg.dataset.clone(),
        horizon,
        variant,
        seed,
        eta,
        mse,
        mae,
        params: model.param_count().total,
    };
    Ok(RunResult { model, trace, report })
}

/// Runs `f` over `jobs`, on scoped threads when `parallel` is set. Results
/// keep the order of `jobs` either way.
fn map_runs<J: Sync, T: Send>(jobs: &[J], parallel: bool, f: impl Fn(&J) -> Result<T> + Sync) -> Result<Vec<T>> {
    if !parallel {
        return jobs.iter().map(&f).collect();
    }
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs.iter().map(|j| s.spawn(move || f(j))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Bundle<'a, T: Serialize> {
    config_fingerprint: String,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: T,
}

fn bundle<'a, T: Serialize>(cfg: &'a ExperimentConfig, body: T) -> Result<Bundle<'a, T>> {
    Ok(Bundle {
        config_fingerprint: cfg.fingerprint()?,
        config: cfg,
        body,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub horizon: usize,
    pub dir: PathBuf,
    pub runs: Vec<RunResult>,
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    reports: Vec<&'a EvalReport>,
    mse_mean: f64,
    mse_std: f64,
    mae_mean: f64,
    mae_std: f64,
}

/// Trains one model per horizon and base seed, then writes
/// `<out>/<dataset>/<variant>/<H>/{checkpoint.bin, trace.csv, trace.json, report.csv, report.json}`.
/// With several seeds the checkpoint and trace names gain a `_seed<s>` suffix.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<TrainOutcome>> {
    cfg.validate()?;
    let variant = cfg.variant()?;
    let source = DataSource::open(cfg)?;
    let jobs: Vec<(usize, u64)> = cfg
        .horizons
        .iter()
        .flat_map(|&h| cfg.seeds.iter().map(move |&s| (h, s)))
        .collect();
    let mut results = map_runs(&jobs, cfg.parallel, |&(h, base)| {
        let seed = run_seed(base, h);
        run_one(&source, cfg, variant, cfg.lookback, h, seed, 0.0, &cfg.train_config(seed))
    })?
    .into_iter();

    let mut outcomes = Vec::new();
    for &h in &cfg.horizons {
        let runs: Vec<RunResult> = results.by_ref().take(cfg.seeds.len()).collect();
        let dir = cfg.out_dir.join(cfg.dataset_dir()).join(variant.label()).join(h.to_string());
        fs::create_dir_all(&dir)?;
        let multi = runs.len() > 1;
        for run in &runs {
            let suffix = if multi { format!("_seed{}", run.report.seed) } else { String::new() };
            save_checkpoint(&run.model, &dir.join(format!("checkpoint{suffix}.bin")))?;
            let mut w = create(&dir.join(format!("trace{suffix}.csv")))?;
            run.trace.write_csv(&mut w, &cfg.csv_header(run.report.seed)?)?;
            w.flush()?;
            write_json(&dir.join(format!("trace{suffix}.json")), &bundle(cfg, &run.trace)?)?;
        }

        let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
        let mses: Vec<f64> = reports.iter().map(|r| r.mse).collect();
        let maes: Vec<f64> = reports.iter().map(|r| r.mae).collect();
        let (mse_mean, mse_std) = mean_std(&mses)?;
        let (mae_mean, mae_std) = mean_std(&maes)?;
        let mut header = cfg.csv_header(reports[0].seed)?;
        if multi {
            header.push(("mse_mean".into(), mse_mean.to_string()));
            header.push(("mse_std".into(), mse_std.to_string()));
        }
        let mut w = create(&dir.join("report.csv"))?;
        write_reports(&mut w, &header, &reports)?;
        w.flush()?;
        let summary = TrainSummary {
            reports: reports.iter().collect(),
            mse_mean,
            mse_std,
            mae_mean,
            mae_std,
        };
        write_json(&dir.join("report.json"), &bundle(cfg, summary)?)?;
        outcomes.push(TrainOutcome { horizon: h, dir, runs });
    }
    Ok(outcomes)
}

/// NRR values that fall by more than `tolerance` as η grows.
pub fn trend_violations(report: &RobustnessReport, tolerance: f64) -> Vec<(f64, f64)> {
    let noisy: Vec<f64> = report.eta_list.iter().copied().filter(|&e| e > 0.0).collect();
    let mut prev = 1.0;
    let mut out = Vec::new();
    for (eta, &r) in noisy.iter().zip(&report.nrr_per_eta) {
        if r < prev - tolerance {
            out.push((*eta, r));
        }
        prev = prev.max(r);
    }
    out
}

/// Trains one model per `(H, η)` with the robustness epoch budget and
/// writes `robustness.csv` / `robustness.json` next to the train outputs.
/// Only the first base seed is used.
pub fn cmd_robustness(cfg: &ExperimentConfig) -> Result<Vec<RobustnessReport>> {
    cfg.validate()?;
    if !cfg.etas.contains(&0.0) {
        return Err(HadlError::MissingZeroEta);
    }
    if cfg.etas.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(HadlError::Config("noise levels must be finite and non-negative".into()));
    }
    let variant = cfg.variant()?;
    let source = DataSource::open(cfg)?;
    let base = cfg.seeds[0];
    let jobs: Vec<(usize, f64)> = cfg
        .horizons
        .iter()
        .flat_map(|&h| cfg.etas.iter().map(move |&e| (h, e)))
        .collect();
    let mut results = map_runs(&jobs, cfg.parallel, |&(h, eta)| {
        let seed = run_seed(base, h);
        let tc = TrainConfig {
            max_epochs: cfg.robust_max_epochs,
            patience: cfg.robust_patience,
            ..cfg.train_config(seed)
        };
        run_one(&source, cfg, variant, cfg.lookback, h, seed, eta, &tc).map(|r| r.report)
    })?
    .into_iter();

    let mut out = Vec::new();
    for &h in &cfg.horizons {
        let runs: Vec<EvalReport> = results.by_ref().take(cfg.etas.len()).collect();
        let report = RobustnessReport::from_runs(runs)?;
        for (eta, r) in trend_violations(&report, 0.01) {
            eprintln!("warning: H={h} NRR drops to {r:.4} at eta={eta}");
        }
        let dir = cfg.out_dir.join(cfg.dataset_dir()).join(variant.label()).join(h.to_string());
        fs::create_dir_all(&dir)?;
        let mut w = create(&dir.join("robustness.csv"))?;
        report.write_csv(&mut w, &cfg.csv_header(run_seed(base, h))?)?;
        w.flush()?;
        write_json(&dir.join("robustness.json"), &bundle(cfg, &report)?)?;
        out.push(report);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Haar,
    Head,
    Dct,
    Rank,
    Lookback,
}

impl std::str::FromStr for Axis {
    type Err = HadlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(Axis::Haar),
            "head" => Ok(Axis::Head),
            "dct" => Ok(Axis::Dct),
            "rank" => Ok(Axis::Rank),
            "lookback" => Ok(Axis::Lookback),
            _ => Err(HadlError::UnknownAxis(s.to_string())),
        }
    }
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Haar => "haar",
            Axis::Head => "head",
            Axis::Dct => "dct",
            Axis::Rank => "rank",
            Axis::Lookback => "lookback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationCell {
    pub mse: f64,
    pub mae: f64,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub setting: String,
    pub variant: String,
    pub lookback: usize,
    /// One cell per horizon, in config order.
    pub cells: Vec<AblationCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub axis: String,
    pub horizons: Vec<usize>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Columns `setting,variant,lookback` then `mse_h<H>,mae_h<H>,params_h<H>`
    /// for each horizon.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[(String, String)]) -> Result<()> {
        for (k, v) in header {
            writeln!(w, "# {k}={v}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        let mut cols = vec!["setting".to_string(), "variant".into(), "lookback".into()];
        for h in &self.horizons {
            cols.extend([format!("mse_h{h}"), format!("mae_h{h}"), format!("params_h{h}")]);
        }
        out.write_record(&cols)?;
        for row in &self.rows {
            let mut rec = vec![row.setting.clone(), row.variant.clone(), row.lookback.to_string()];
            for c in &row.cells {
                rec.extend([c.mse.to_string(), c.mae.to_string(), c.params.to_string()]);
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn ablation_grid(cfg: &ExperimentConfig, axis: Axis) -> Result<Vec<(String, Variant, usize)>> {
    let base = cfg.variant()?;
    let at_rank = |r| -> Result<Variant> {
        Ok(Variant { head: cfg.head_kind(r)?, ..base })
    };
    let l = cfg.lookback;
    Ok(match axis {
        Axis::Haar => {
            let v = at_rank(cfg.ablation_rank)?;
            vec![
                ("with_haar".into(), Variant { use_haar: true, ..v }, l),
                ("without_haar".into(), Variant { use_haar: false, ..v }, l),
            ]
        }
        Axis::Dct => vec![
            ("with_dct".into(), Variant { use_dct: true, ..base }, l),
            ("without_dct".into(), Variant { use_dct: false, ..base }, l),
        ],
        Axis::Head => {
            let v = Variant { bias: false, ..base };
            vec![
                (format!("lowrank_r{}", cfg.ablation_rank), Variant { head: HeadKind::LowRank(cfg.ablation_rank), ..v }, l),
                ("dense".into(), Variant { head: HeadKind::Dense, ..v }, l),
            ]
        }
        Axis::Rank => cfg
            .ranks
            .iter()
            .map(|&r| Ok((format!("r{r}"), Variant { head: HeadKind::LowRank(r), ..base }, l)))
            .collect::<Result<_>>()?,
        Axis::Lookback => cfg.lookbacks.iter().map(|&lb| (format!("L{lb}"), base, lb)).collect(),
    })
}

/// Trains the matched variant grid of one ablation axis and writes
/// `<out>/<dataset>/ablation_<axis>.csv` and `.json`.
pub fn cmd_ablate(cfg: &ExperimentConfig, axis: &str) -> Result<AblationTable> {
    let axis: Axis = axis.parse()?;
    cfg.validate()?;
    let grid = ablation_grid(cfg, axis)?;
    for (_, v, lb) in &grid {
        v.input_dim(*lb)?;
    }
    let source = DataSource::open(cfg)?;
    let base = cfg.seeds[0];
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| cfg.horizons.iter().map(move |&h| (g, h)))
        .collect();
    let mut cells = map_runs(&jobs, cfg.parallel, |&(g, h)| {
        let (_, variant, lookback) = &grid[g];
        let seed = run_seed(base, h);
        let r = run_one(&source, cfg, *variant, *lookback, h, seed, 0.0, &cfg.train_config(seed))?;
        Ok(AblationCell { mse: r.report.mse, mae: r.report.mae, params: r.report.params })
    })?
    .into_iter();

    let rows = grid
        .iter()
        .map(|(setting, variant, lookback)| AblationRow {
            setting: setting.clone(),
            variant: variant.label(),
            lookback: *lookback,
            cells: cells.by_ref().take(cfg.horizons.len()).collect(),
        })
        .collect();
    let table = AblationTable {
        axis: axis.name().to_string(),
        horizons: cfg.horizons.clone(),
        rows,
    };
    let dir = cfg.out_dir.join(cfg.dataset_dir());
    fs::create_dir_all(&dir)?;
    let mut w = create(&dir.join(format!("ablation_{}.csv", axis.name())))?;
    table.write_csv(&mut w, &cfg.csv_header(base)?)?;
    w.flush()?;
    write_json(&dir.join(format!("ablation_{}.json", axis.name())), &bundle(cfg, &table)?)?;
    Ok(table)
}

pub fn cmd_params(lookback: usize, horizon: usize, head: HeadKind, bias: bool, use_haar: bool) -> Result<ParamCount> {
    param_count(lookback, horizon, head, bias, use_haar)
}

/// Human-readable parameter count, e.g. `total 49520 (49.52K)` followed by
/// one line per tensor.
pub fn format_params(count: &ParamCount) -> String {
    let mut s = format!("total {} ({}K)\n", count.total, count.thousands(2, Rounding::Nearest));
    for (name, n) in &count.breakdown {
        s.push_str(&format!("  {name} {n}\n"));
    }
    s
}

/// Writes the effective `P·Q` matrix (`d_in × H`) of a low-rank checkpoint as
/// headerless CSV and returns it.
pub fn cmd_export_weights(checkpoint: &Path, out: &Path) -> Result<Matrix> {
    let model = load_checkpoint(checkpoint)?;
    let w = model.effective_weight()?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(out)?;
    for i in 0..w.rows() {
        writer.write_record(w.row(i).iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(w)
}

/// Parses a CSV written by [`cmd_export_weights`].
pub fn read_weight_csv(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        cols = rec.len();
        for (j, field) in rec.iter().enumerate() {
            data.push(field.parse::<f64>().map_err(|e| HadlError::Parse {
                row: i + 1,
                column: j.to_string(),
                message: e.to_string(),
            })?);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data)
}

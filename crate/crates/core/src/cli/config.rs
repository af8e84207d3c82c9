use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{HadlError, Result};
use crate::model::{HeadKind, Variant};
use crate::optim::TrainConfig;

/// Every recognised key with a one-line description, in `--help` order.
pub const KEYS: &[(&str, &str)] = &[
    ("dataset", "dataset name, or synth:<sine_mix|random_walk|low_rank_target>"),
    ("path", "CSV file for the dataset"),
    ("registry", "registry file mapping dataset names to paths"),
    ("convention", "split convention: ett_hour, ett_minute or ratio"),
    ("standardize", "z-score every channel with training statistics"),
    ("stride", "step between consecutive windows"),
    ("lookback", "lookback window L"),
    ("horizons", "comma-separated forecast horizons"),
    ("rank", "inner rank of the low-rank head"),
    ("use_haar", "apply the Haar approximation"),
    ("use_dct", "apply the scaled DCT-II"),
    ("head", "lowrank or dense"),
    ("bias", "learn a bias vector"),
    ("learning_rate", "ADAM step size"),
    ("beta1", "ADAM first-moment decay"),
    ("beta2", "ADAM second-moment decay"),
    ("epsilon", "ADAM denominator offset"),
    ("l1_lambda", "L1 weight on the head weights"),
    ("max_epochs", "epoch budget"),
    ("patience", "epochs without validation improvement before stopping"),
    ("batch_size", "windows per mini-batch"),
    ("seed", "single base seed (replaces seeds)"),
    ("seeds", "comma-separated base seeds"),
    ("etas", "comma-separated noise levels for robustness runs"),
    ("robust_max_epochs", "epoch budget of robustness runs"),
    ("robust_patience", "patience of robustness runs"),
    ("ablation_rank", "rank used by the haar and head ablations"),
    ("ranks", "ranks swept by the rank ablation"),
    ("lookbacks", "lookbacks swept by the lookback ablation"),
    ("synth_channels", "channels of synthetic data"),
    ("synth_length", "length of synthetic series"),
    ("synth_rank", "inner rank of the low_rank_target generator"),
    ("synth_noise", "white-noise std added to sine_mix"),
    ("synth_seed", "seed of the synthetic generator"),
    ("out_dir", "output directory"),
    ("parallel", "run independent grid cells on separate threads"),
];

/// Resolved settings of one experiment.
///
/// `out_dir` and `parallel` do not influence any number and are left out of
/// the serialized form, so the fingerprint only tracks result-relevant keys.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub path: Option<String>,
    pub registry: Option<String>,
    pub convention: Option<String>,
    pub standardize: bool,
    pub stride: usize,
    pub lookback: usize,
    pub horizons: Vec<usize>,
    pub rank: usize,
    pub use_haar: bool,
    pub use_dct: bool,
    pub head: String,
    pub bias: bool,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l1_lambda: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub etas: Vec<f64>,
    pub robust_max_epochs: usize,
    pub robust_patience: usize,
    pub ablation_rank: usize,
    pub ranks: Vec<usize>,
    pub lookbacks: Vec<usize>,
    pub synth_channels: usize,
    pub synth_length: usize,
    pub synth_rank: usize,
    pub synth_noise: f64,
    pub synth_seed: u64,
    #[serde(skip)]
    pub out_dir: PathBuf,
    #[serde(skip)]
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            dataset: "ETTh1".into(),
            path: None,
            registry: None,
            convention: None,
            standardize: true,
            stride: 1,
            lookback: 512,
            horizons: vec![96, 192, 336, 720],
            rank: 50,
            use_haar: true,
            use_dct: true,
            head: "lowrank".into(),
            bias: true,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            l1_lambda: t.l1_lambda,
            max_epochs: t.max_epochs,
            patience: t.patience,
            batch_size: t.batch_size,
            seeds: vec![t.seed],
            etas: vec![0.0, 0.3, 0.7, 1.3, 1.7, 2.3],
            robust_max_epochs: 50,
            robust_patience: 10,
            ablation_rank: 40,
            ranks: vec![15, 35, 55, 75],
            lookbacks: vec![48, 96, 192, 336, 512, 720],
            synth_channels: 3,
            synth_length: 2000,
            synth_rank: 2,
            synth_noise: 0.0,
            synth_seed: 0,
            out_dir: PathBuf::from("runs"),
            parallel: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| HadlError::Config(format!("{key} = {value}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(HadlError::Config(format!("{key} = {value}: expected true or false"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    let inner = value.trim().trim_start_matches('[').trim_end_matches(']');
    let items: Vec<T> = inner
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(HadlError::Config(format!("{key} needs at least one value")));
    }
    Ok(items)
}

fn optional(value: &str) -> Option<String> {
    let v = value.trim();
    (!v.is_empty()).then(|| v.to_string())
}

impl ExperimentConfig {
    /// Reads a flat `key = value` file; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HadlError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = value.trim().to_string(),
            "path" => self.path = optional(value),
            "registry" => self.registry = optional(value),
            "convention" => self.convention = optional(value),
            "standardize" => self.standardize = parse_bool(key, value)?,
            "stride" => self.stride = parse(key, value)?,
            "lookback" => self.lookback = parse(key, value)?,
            "horizons" => self.horizons = parse_list(key, value)?,
            "rank" => self.rank = parse(key, value)?,
            "use_haar" => self.use_haar = parse_bool(key, value)?,
            "use_dct" => self.use_dct = parse_bool(key, value)?,
            "head" => self.head = value.trim().to_ascii_lowercase(),
            "bias" => self.bias = parse_bool(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "l1_lambda" => self.l1_lambda = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seeds = vec![parse(key, value)?],
            "seeds" => self.seeds = parse_list(key, value)?,
            "etas" => self.etas = parse_list(key, value)?,
            "robust_max_epochs" => self.robust_max_epochs = parse(key, value)?,
            "robust_patience" => self.robust_patience = parse(key, value)?,
            "ablation_rank" => self.ablation_rank = parse(key, value)?,
            "ranks" => self.ranks = parse_list(key, value)?,
            "lookbacks" => self.lookbacks = parse_list(key, value)?,
            "synth_channels" => self.synth_channels = parse(key, value)?,
            "synth_length" => self.synth_length = parse(key, value)?,
            "synth_rank" => self.synth_rank = parse(key, value)?,
            "synth_noise" => self.synth_noise = parse(key, value)?,
            "synth_seed" => self.synth_seed = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value.trim()),
            "parallel" => self.parallel = parse_bool(key, value)?,
            _ => return Err(HadlError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn head_kind(&self, rank: usize) -> Result<HeadKind> {
        match self.head.as_str() {
            "lowrank" | "low_rank" => Ok(HeadKind::LowRank(rank)),
            "dense" | "linear" => Ok(HeadKind::Dense),
            other => Err(HadlError::Config(format!("unknown head '{other}'"))),
        }
    }

    pub fn variant(&self) -> Result<Variant> {
        Ok(Variant {
            use_haar: self.use_haar,
            use_dct: self.use_dct,
            head: self.head_kind(self.rank)?,
            bias: self.bias,
        })
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            l1_lambda: self.l1_lambda,
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            seed,
            noise_eta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.seeds.is_empty() {
            return Err(HadlError::Config("horizons and seeds must be non-empty".into()));
        }
        if self.stride == 0 {
            return Err(HadlError::Config("stride must be positive".into()));
        }
        self.variant()?.input_dim(self.lookback)?;
        self.train_config(0).validate()
    }

    /// Hex SHA-256 of the serialized config.
    pub fn fingerprint(&self) -> Result<String> {
        let json = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(json.as_bytes())))
    }

    /// `# key=value` lines written at the top of every CSV.
    pub fn csv_header(&self, seed: u64) -> Result<Vec<(String, String)>> {
        Ok(vec![
            ("config_fingerprint".into(), self.fingerprint()?),
            ("seed".into(), seed.to_string()),
            ("learning_rate".into(), self.learning_rate.to_string()),
            ("l1_lambda".into(), self.l1_lambda.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("rank".into(), self.rank.to_string()),
        ])
    }

    /// Directory-safe dataset name.
    pub fn dataset_dir(&self) -> String {
        self.dataset
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect()
    }
}

/// splitmix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the run identified by `key` under `base`:
/// `splitmix64(base ^ splitmix64(key))`.
pub fn derive_seed(base: u64, key: u64) -> u64 {
    splitmix64(base ^ splitmix64(key))
}

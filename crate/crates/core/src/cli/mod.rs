//! Command-line front end: `train`, `robustness`, `ablate`, `params` and
//! `export-weights`.
//!
//! Experiment commands read an optional `--config` file of `key = value`
//! lines; every key can also be given as `--<key> <value>`, which wins over
//! the file.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};

use crate::error::Result;
use crate::model::HeadKind;

pub use commands::{
    cmd_ablate, cmd_export_weights, cmd_params, cmd_robustness, cmd_train, format_params, noise_seed,
    read_weight_csv, run_one, run_seed, trend_violations, AblationCell, AblationRow, AblationTable, Axis,
    DataSource, RunResult, TrainOutcome,
};
pub use config::{derive_seed, splitmix64, ExperimentConfig, KEYS};

fn experiment_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .value_parser(value_parser!(PathBuf))
            .help("key = value config file"),
    );
    KEYS.iter().fold(cmd, |cmd, (key, help)| {
        cmd.arg(Arg::new(*key).long(*key).value_name("VALUE").help(*help))
    })
}

pub fn command() -> Command {
    Command::new("hadl")
        .about("Haar + DCT + low-rank linear forecaster")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(experiment_args(
            Command::new("train").about("Train and test one model per horizon"),
        ))
        .subcommand(experiment_args(
            Command::new("robustness").about("Train under Gaussian training noise and report NRR and MAV"),
        ))
        .subcommand(experiment_args(
            Command::new("ablate").about("Run a matched variant grid along one axis").arg(
                Arg::new("axis")
                    .long("axis")
                    .required(true)
                    .value_name("AXIS")
                    .help("haar, head, dct, rank or lookback"),
            ),
        ))
        .subcommand(
            Command::new("params")
                .about("Print the parameter count of a configuration")
                .arg(Arg::new("lookback").long("lookback").short('L').default_value("512").value_parser(value_parser!(usize)))
                .arg(Arg::new("horizon").long("horizon").short('H').required(true).value_parser(value_parser!(usize)))
                .arg(Arg::new("rank").long("rank").short('r').default_value("50").value_parser(value_parser!(usize)))
                .arg(Arg::new("dense").long("dense").action(ArgAction::SetTrue).help("dense head instead of low-rank"))
                .arg(Arg::new("no-bias").long("no-bias").action(ArgAction::SetTrue))
                .arg(Arg::new("no-haar").long("no-haar").action(ArgAction::SetTrue)),
        )
        .subcommand(
            Command::new("export-weights")
                .about("Write the effective P·Q matrix of a low-rank checkpoint as CSV")
                .arg(Arg::new("checkpoint").long("checkpoint").required(true).value_parser(value_parser!(PathBuf)))
                .arg(Arg::new("out").long("out").required(true).value_parser(value_parser!(PathBuf))),
        )
}

/// Config file first, then flag overrides.
pub fn resolve_config(m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    for (key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

/// Parses `args` and runs the chosen command, printing a summary to stdout.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command().get_matches_from(args);
    match matches.subcommand() {
        Some(("train", m)) => {
            for o in cmd_train(&resolve_config(m)?)? {
                for r in &o.runs {
                    println!(
                        "H={} seed={} test mse={:.6} mae={:.6} best_epoch={} -> {}",
                        o.horizon,
                        r.report.seed,
                        r.report.mse,
                        r.report.mae,
                        r.trace.best_epoch.unwrap_or(0),
                        o.dir.display()
                    );
                }
            }
        }
        Some(("robustness", m)) => {
            let cfg = resolve_config(m)?;
            for (h, rep) in cfg.horizons.iter().zip(cmd_robustness(&cfg)?) {
                for (eta, mse) in rep.eta_list.iter().zip(&rep.mse_per_eta) {
                    println!("H={h} eta={eta} test mse={mse:.6}");
                }
                println!("H={h} mav={}", rep.mav_text());
            }
        }
        Some(("ablate", m)) => {
            let cfg = resolve_config(m)?;
            let axis = m.get_one::<String>("axis").expect("required");
            let table = cmd_ablate(&cfg, axis)?;
            for row in &table.rows {
                for (h, c) in table.horizons.iter().zip(&row.cells) {
                    println!("{} H={h} mse={:.6} mae={:.6} params={}", row.setting, c.mse, c.mae, c.params);
                }
            }
        }
        Some(("params", m)) => {
            let head = if m.get_flag("dense") {
                HeadKind::Dense
            } else {
                HeadKind::LowRank(*m.get_one::<usize>("rank").expect("defaulted"))
            };
            let count = cmd_params(
                *m.get_one::<usize>("lookback").expect("defaulted"),
                *m.get_one::<usize>("horizon").expect("required"),
                head,
                !m.get_flag("no-bias"),
                !m.get_flag("no-haar"),
            )?;
            print!("{}", format_params(&count));
        }
        Some(("export-weights", m)) => {
            let out = m.get_one::<PathBuf>("out").expect("required");
            let w = cmd_export_weights(m.get_one::<PathBuf>("checkpoint").expect("required"), out)?;
            println!("wrote {}x{} matrix to {}", w.rows(), w.cols(), out.display());
        }
        _ => unreachable!("subcommand_required"),
    }
    Ok(())
}

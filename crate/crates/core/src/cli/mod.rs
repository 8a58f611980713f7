//! Command-line front end: `overhead`, `mse-sweep` and `validate`.
//!
//! Exit codes: 0 success, 1 validation or estimation failure, 2 configuration
//! error. Every successful run leaves a `manifest.json` in the output
//! directory listing the files it wrote.

mod args;
mod plot;
pub mod validate;

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;
use thiserror::Error;

pub use args::{parse_range, Cli, Command, Common};

use crate::config::{SystemConfig, DEFAULT_POWERS_DBM};
use crate::evaluation::{
    run_sweep, write_csv, EvaluationError, Family, Scheme, SweepOptions, SweepResult,
};
use crate::training::{overhead_benchmark, overhead_proposed};
use plot::{Chart, Series};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid range `{0}`")]
    InvalidRange(String),
    #[error("{0}")]
    Failure(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::InvalidRange(_) => 2,
            CliError::Failure(_) | CliError::Io { .. } => 1,
        }
    }
}

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        match e {
            EvaluationError::Config(c) => CliError::Config(c.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: SystemConfig,
    pub out_dir: PathBuf,
    /// Where the power grid came from (`tool default`, `config` or `command line`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_grid: Option<&'static str>,
    pub files: Vec<String>,
    pub timings_s: BTreeMap<String, f64>,
    pub exit_status: u8,
}

/// Output directory plus the files written into it.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Config file plus command-line overrides, validated.
pub fn resolve_config(common: &Common) -> Result<SystemConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => SystemConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => SystemConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(mode) = common.nmse_mode {
        cfg.nmse_mode = mode;
    }
    cfg.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    if common.workers == Some(0) {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    Ok(cfg)
}

fn cmd_overhead(
    cfg: &SystemConfig,
    out: &mut Outputs,
    n_range: &str,
    k_range: &str,
    plot: bool,
) -> Result<(), CliError> {
    let ns = parse_range(n_range).ok_or_else(|| CliError::InvalidRange(n_range.into()))?;
    let ks = parse_range(k_range).ok_or_else(|| CliError::InvalidRange(k_range.into()))?;
    let (m1, m2) = (cfg.irs1_subsurfaces, cfg.irs2_subsurfaces);
    let mut csv = String::from("N,K,M1,M2,proposed,benchmark\n");
    for &k in &ks {
        for &n in &ns {
            let p = overhead_proposed(n, m1, m2, k);
            let b = overhead_benchmark(m1, m2, k);
            csv.push_str(&format!("{n},{k},{m1},{m2},{p},{b}\n"));
        }
    }
    out.write("overhead.csv", csv.as_bytes())?;
    if plot {
        let k_fixed = if ks.contains(&cfg.users) {
            cfg.users
        } else {
            ks[0]
        };
        let n_fixed = if ns.contains(&cfg.bs_antennas) {
            cfg.bs_antennas
        } else {
            ns[0]
        };
        let series = |x: &[usize], f: &dyn Fn(usize) -> (usize, usize)| {
            let pts: Vec<_> = x.iter().map(|&v| (v as f64, f(v))).collect();
            vec![
                Series {
                    name: "proposed".into(),
                    points: pts.iter().map(|&(x, (p, _))| (x, p as f64)).collect(),
                },
                Series {
                    name: "benchmark".into(),
                    points: pts.iter().map(|&(x, (_, b))| (x, b as f64)).collect(),
                },
            ]
        };
        let by_n = Chart {
            title: &format!("Training overhead vs N (K={k_fixed}, M1={m1}, M2={m2})"),
            x_label: "BS antennas N",
            y_label: "pilot slots",
            log_y: false,
            series: series(&ns, &|n| {
                (
                    overhead_proposed(n, m1, m2, k_fixed),
                    overhead_benchmark(m1, m2, k_fixed),
                )
            }),
        };
        out.write("overhead_vs_n.svg", by_n.render().as_bytes())?;
        let by_k = Chart {
            title: &format!("Training overhead vs K (N={n_fixed}, M1={m1}, M2={m2})"),
            x_label: "users K",
            y_label: "pilot slots",
            log_y: false,
            series: series(&ks, &|k| {
                (
                    overhead_proposed(n_fixed, m1, m2, k),
                    overhead_benchmark(m1, m2, k),
                )
            }),
        };
        out.write("overhead_vs_k.svg", by_k.render().as_bytes())?;
    }
    Ok(())
}

fn sweep_outputs(
    label: &str,
    res: &SweepResult,
    out: &mut Outputs,
    plot: bool,
) -> Result<(), CliError> {
    let mut csv = Vec::new();
    write_csv(res, &mut csv).map_err(|e| CliError::Failure(e.to_string()))?;
    out.write(&format!("nmse_{label}.csv"), &csv)?;
    let json = serde_json::to_vec_pretty(res).map_err(|e| CliError::Failure(e.to_string()))?;
    out.write(&format!("sweep_{label}.json"), &json)?;
    if plot {
        for family in Family::ALL {
            let series = Scheme::ALL
                .iter()
                .map(|&s| Series {
                    name: s.name().into(),
                    points: res
                        .points
                        .iter()
                        .map(|p| (p.p_dbm, p.stat(s, family).nmse))
                        .collect(),
                })
                .collect();
            let chart = Chart {
                title: &format!("NMSE of {} ({label} overhead)", family.name()),
                x_label: "transmit power P (dBm)",
                y_label: "NMSE",
                log_y: true,
                series,
            };
            out.write(
                &format!("nmse_{label}_{}.svg", family.name()),
                chart.render().as_bytes(),
            )?;
        }
    }
    Ok(())
}

fn execute(
    cli: &Cli,
    cfg: &SystemConfig,
    out: &mut Outputs,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    match &cli.command {
        Command::Overhead {
            n_range,
            k_range,
            no_plot,
        } => cmd_overhead(cfg, out, n_range, k_range, !no_plot),
        Command::MseSweep {
            equal_overhead,
            powers,
            joint_phase3,
            no_plot,
        } => {
            let (powers, source) = match powers {
                Some(p) => (p.clone(), "command line"),
                None if cfg.powers_dbm == DEFAULT_POWERS_DBM => {
                    (cfg.powers_dbm.clone(), "tool default")
                }
                None => (cfg.powers_dbm.clone(), "config"),
            };
            if powers.is_empty() {
                return Err(CliError::Config("no transmit powers given".into()));
            }
            manifest.power_grid = Some(source);
            let modes: &[(bool, &str)] = if *equal_overhead {
                &[(true, "equal")]
            } else {
                &[(false, "free"), (true, "equal")]
            };
            for &(equal, label) in modes {
                let t = Instant::now();
                let opts = SweepOptions {
                    equal_overhead: equal,
                    genie_cancel: cli.common.genie_cancel,
                    joint_phase3: *joint_phase3,
                    workers: cli.common.workers,
                };
                let res = run_sweep(cfg, &powers, opts)?;
                sweep_outputs(label, &res, out, !no_plot)?;
                let secs = t.elapsed().as_secs_f64();
                manifest.timings_s.insert(format!("sweep_{label}"), secs);
                eprintln!(
                    "mse-sweep: {label} overhead, {} points x {} trials in {secs:.1} s",
                    powers.len(),
                    cfg.trials
                );
            }
            Ok(())
        }
        Command::Validate { .. } => {
            let checks = validate::run_checks(cfg);
            let text = validate::report(&checks);
            print!("{text}");
            out.write("validate.txt", text.as_bytes())?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                Err(CliError::Failure(format!(
                    "{failed} validation checks failed"
                )))
            } else {
                Ok(())
            }
        }
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Overhead { .. } => "overhead",
        Command::MseSweep { .. } => "mse-sweep",
        Command::Validate { .. } => "validate",
    }
}

/// Runs a parsed command line and returns the manifest that was written.
pub fn run(cli: &Cli) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let mut cfg = resolve_config(&cli.common)?;
    if let Command::Validate {
        corrupt_alpha: Some(alpha),
    } = cli.command
    {
        cfg.alpha_near = alpha;
        cfg.alpha_far = alpha;
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut out = Outputs::new(&cli.common.out)?;
    let mut manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command_name(&cli.command).into(),
        config: cfg.clone(),
        out_dir: cli.common.out.clone(),
        power_grid: None,
        files: Vec::new(),
        timings_s: BTreeMap::new(),
        exit_status: 0,
    };
    let result = execute(cli, &cfg, &mut out, &mut manifest);
    manifest.exit_status = match &result {
        Ok(()) => 0,
        Err(e) => e.exit_code(),
    };
    manifest.files = out.files.clone();
    manifest
        .timings_s
        .insert("total".into(), start.elapsed().as_secs_f64());
    let path = out.dir.join("manifest.json");
    let file = fs::File::create(&path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    result.map(|()| manifest)
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

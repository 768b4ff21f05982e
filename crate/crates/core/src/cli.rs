//! Configuration loading, sweep orchestration and result files.
//!
//! A sweep writes three files into the output directory:
//!
//! * `outage.csv`: `g, scheme, net_outage, user1_outage, …, ci_halfwidth,
//!   evaluated, failures, config_hash`
//! * `throughput.csv`: `g, scheme, effective_throughput_bps, mean_power_w,
//!   config_hash`
//! * `manifest.json`: the resolved configuration, version, timestamps and
//!   failure counts.
//!
//! `config_hash` is the SHA-256 of the tool version and the canonical TOML
//! form of the configuration. It does not cover the timestamps, so repeated
//! runs of one configuration produce byte-identical CSV files.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{self, ChannelError};
use crate::linalg::condition_number;
use crate::metrics;
use crate::montecarlo::{self, ExperimentResult, ScenarioConfig, PURPOSE_DESIGN, PURPOSE_GEOMETRY, PURPOSE_ORACLE};
use crate::oracle::{self, OracleOptions};
use crate::robust::{self, RobustError, RobustProblem};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Infeasible(_) => 4,
            CliError::Solver(_) => 5,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

impl From<RobustError> for CliError {
    fn from(e: RobustError) -> Self {
        match e {
            RobustError::Infeasible(_) => CliError::Infeasible(e.to_string()),
            RobustError::InvalidArgument(_) => CliError::Config(e.to_string()),
            RobustError::SolverFailure(_) | RobustError::Rank1ExtractionFailure(_) => CliError::Solver(e.to_string()),
        }
    }
}

impl From<ChannelError> for CliError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::InvalidArgument(_) => CliError::Config(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

/// Parses and validates a TOML configuration. Missing keys take defaults,
/// unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Canonical TOML form; `parse_config` of the output yields the same config.
pub fn config_to_toml(cfg: &ScenarioConfig) -> String {
    toml::to_string(cfg).expect("config is always representable in TOML")
}

pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let mut h = Sha256::new();
    h.update(VERSION.as_bytes());
    h.update([0u8]);
    h.update(config_to_toml(cfg).as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: ScenarioConfig,
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    /// Trials per scheme that produced no design, summed over `g`.
    pub failures: BTreeMap<String, usize>,
    pub files: Vec<String>,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

pub fn outage_csv(result: &ExperimentResult, n_users: usize, hash: &str) -> String {
    let mut s = String::from("g,scheme,net_outage");
    for u in 1..=n_users {
        write!(s, ",user{u}_outage").unwrap();
    }
    s.push_str(",ci_halfwidth,evaluated,failures,config_hash\n");
    for c in &result.cells {
        write!(s, "{},{},{}", c.g, c.scheme.as_str(), c.net_outage).unwrap();
        for p in &c.user_outage {
            write!(s, ",{p}").unwrap();
        }
        writeln!(s, ",{},{},{},{hash}", c.ci_halfwidth, c.evaluated, c.failures).unwrap();
    }
    s
}

pub fn throughput_csv(result: &ExperimentResult, hash: &str) -> String {
    let mut s = String::from("g,scheme,effective_throughput_bps,mean_power_w,config_hash\n");
    for c in &result.cells {
        writeln!(s, "{},{},{},{},{hash}", c.g, c.scheme.as_str(), c.effective_throughput, c.mean_power).unwrap();
    }
    s
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

/// Fails early if `dir` cannot be created or written.
pub fn ensure_writable(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let probe = dir.join(".mibeam-write-probe");
    fs::write(&probe, b"").map_err(|e| CliError::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| CliError::io(&probe, e))
}

/// Runs the sweep and writes `outage.csv`, `throughput.csv` and `manifest.json`.
pub fn cmd_sweep(cfg: &ScenarioConfig, out: &Path) -> Result<(ExperimentResult, RunManifest), CliError> {
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    ensure_writable(out)?;
    let started = now_ms();
    let result = montecarlo::run_experiment(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let hash = config_hash(cfg);
    let files = vec!["outage.csv".to_string(), "throughput.csv".to_string()];
    write_file(out, &files[0], &outage_csv(&result, cfg.n_users, &hash))?;
    write_file(out, &files[1], &throughput_csv(&result, &hash))?;
    let manifest = RunManifest {
        config: cfg.clone(),
        tool_version: VERSION.to_string(),
        seed: cfg.seed,
        config_hash: hash,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        failures: result.failure_counts().into_iter().map(|(s, n)| (s.as_str().to_string(), n)).collect(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(out, "manifest.json", &json)?;
    Ok((result, manifest))
}

/// Inspection of a single robust design.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub g: f64,
    pub seed: u64,
    pub cond_h: f64,
    pub cond_q: f64,
    pub kappa: Vec<f64>,
    pub sdr_objective: f64,
    /// Worst-case power bound of the extracted beamformers (W).
    pub power: f64,
    pub rank1_gap: f64,
    pub estimated_sinr: Vec<f64>,
    pub worst_case_sinr: Vec<f64>,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "g = {}, seed = {}", self.g, self.seed)?;
        writeln!(f, "cond(H) = {:.4e}", self.cond_h)?;
        writeln!(f, "cond(Q) = {:.4e}", self.cond_q)?;
        writeln!(f, "SDR objective = {:.6e} W", self.sdr_objective)?;
        writeln!(f, "extracted power bound = {:.6e} W", self.power)?;
        writeln!(f, "rank-one gap = {:.3e}", self.rank1_gap)?;
        writeln!(f, "user  kappa      estimated SINR  worst-case SINR")?;
        for n in 0..self.kappa.len() {
            writeln!(
                f,
                "{:<5} {:<10.4} {:<15.6} {:.6}",
                n + 1,
                self.kappa[n],
                self.estimated_sinr[n],
                self.worst_case_sinr[n]
            )?;
        }
        Ok(())
    }
}

/// Designs robust beamformers for the geometry drawn from `seed` at error
/// level `g` and probes each user's worst case with the gradient oracle.
pub fn cmd_solve_once(cfg: &ScenarioConfig, g: f64, seed: u64) -> Result<SolveReport, CliError> {
    if !(g.is_finite() && g >= 0.0) {
        return Err(CliError::Usage(format!("--g must be a finite non-negative number, got {g}")));
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut rng = montecarlo::stream(seed, PURPOSE_GEOMETRY, 0, 0);
    let geometry = montecarlo::sample_geometry(cfg, &mut rng)?;
    let ch = channel::assemble_channel(&geometry)?;
    let th = cfg.thresholds();
    let prob = RobustProblem::with_relative_error(ch.clone(), g, th.gamma_th, th.c_th, th.bandwidth, th.noise_power);
    let mut design_rng = montecarlo::stream(seed, PURPOSE_DESIGN, 0, 0);
    let beams = robust::robust_beamform(&prob, &cfg.extract_options(), &mut design_rng)?;
    if beams.sdr_objective > beams.power_upper * (1.0 + 1e-6) {
        return Err(CliError::Solver(format!(
            "relaxation bound {:.6e} W exceeds extracted power {:.6e} W",
            beams.sdr_objective, beams.power_upper
        )));
    }
    let n0 = th.noise_power;
    let estimated_sinr = metrics::sinr(&ch.h, &beams.vectors, n0);
    let mut oracle_rng = montecarlo::stream(seed, PURPOSE_ORACLE, 0, 0);
    let worst_case_sinr = (0..ch.n())
        .map(|n| {
            oracle::worst_case_sinr(&ch.h_row(n), prob.xi_h[n], &beams.vectors, n, n0, &OracleOptions::default(), &mut oracle_rng)
                .sinr
        })
        .collect();
    Ok(SolveReport {
        g,
        seed,
        cond_h: condition_number(&ch.h),
        cond_q: condition_number(&ch.q),
        kappa: prob.kappas(),
        sdr_objective: beams.sdr_objective,
        power: beams.power_upper,
        rank1_gap: beams.rank1_gap,
        estimated_sinr,
        worst_case_sinr,
    })
}

/// One line per cell, for terminal output after a sweep.
pub fn summary_table(result: &ExperimentResult) -> String {
    let mut s = String::from("g      scheme      outage   thr (bit/s)  power (W)    failures\n");
    for c in &result.cells {
        writeln!(
            s,
            "{:<6} {:<11} {:<8.4} {:<12.2} {:<12.4e} {}",
            c.g,
            c.scheme.as_str(),
            c.net_outage,
            c.effective_throughput,
            c.mean_power,
            c.failures
        )
        .unwrap();
    }
    s
}

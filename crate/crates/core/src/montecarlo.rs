//! Monte Carlo outage and throughput experiments.
//!
//! Each trial draws a fresh geometry, designs beamformers for every scheme on
//! the estimated channel and evaluates them on a perturbed "true" channel.
//! The geometry of trial `t` is shared by every error level `g`, and the
//! perfect-CSI designs, which do not depend on `g`, are computed once per trial.
//! Every random stream is derived from `(seed, purpose, g index, trial)`, so
//! results do not depend on thread scheduling.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, Thresholds};
use crate::channel::{self, ChannelError, ChannelMatrices, CoilSpec, Medium, NetworkGeometry, Pose};
use crate::linalg::{c64, CMatrix, CVector};
use crate::metrics;
use crate::robust::{self, BeamformerSet, ExtractOptions, RobustError, RobustProblem};

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Thermal noise at 290 K over `bandwidth` with a 10 dB noise figure.
pub fn thermal_noise(bandwidth: f64) -> f64 {
    BOLTZMANN * 290.0 * bandwidth * 10.0
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Gaussian randomization candidates per extraction.
    pub randomization_candidates: usize,
    pub bisection_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let e = ExtractOptions::default();
        Self { randomization_candidates: e.n_candidates, bisection_steps: e.bisection_steps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub k_coils: usize,
    pub n_users: usize,
    /// Carrier (Hz).
    pub f_c: f64,
    /// Bandwidth (Hz).
    pub bandwidth: f64,
    /// Radius of the access-point coil ring (m).
    pub eap_ring_radius: f64,
    /// Users are placed uniformly in a disk of this radius (m) below the access point.
    pub tu_placement_radius: f64,
    /// Depth interval (m) of the users, sampled uniformly.
    pub tu_depth_range: [f64; 2],
    /// Relative error levels to sweep.
    pub error_g: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Linear SINR thresholds; a single entry applies to every user.
    pub gamma_th: Vec<f64>,
    /// Sum-rate threshold (bit/s).
    pub c_th: f64,
    /// Noise power (W); thermal noise for the bandwidth when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_power: Option<f64>,
    pub medium: Medium,
    #[serde(default = "CoilSpec::access_point")]
    pub eap_coil: CoilSpec,
    #[serde(default = "CoilSpec::user")]
    pub tu_coil: CoilSpec,
    pub solver: SolverConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            k_coils: 5,
            n_users: 2,
            f_c: 1e6,
            bandwidth: 100.0,
            eap_ring_radius: 2.0,
            tu_placement_radius: 15.0,
            tu_depth_range: [2.0, 15.0],
            error_g: vec![0.0, 0.02, 0.05, 0.10, 0.15, 0.20, 0.25],
            trials: 2000,
            seed: 1,
            gamma_th: vec![10f64.powf(0.3)],
            c_th: 400.0,
            noise_power: None,
            medium: Medium::default(),
            eap_coil: CoilSpec::access_point(),
            tu_coil: CoilSpec::user(),
            solver: SolverConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |field: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be finite and > 0, got {v}")))
            }
        };
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.n_users == 0 || self.k_coils < self.n_users {
            return Err(invalid("n_users", format!("need 1 <= n_users <= k_coils, got {} and {}", self.n_users, self.k_coils)));
        }
        pos("f_c", self.f_c)?;
        pos("bandwidth", self.bandwidth)?;
        pos("eap_ring_radius", self.eap_ring_radius)?;
        pos("tu_placement_radius", self.tu_placement_radius)?;
        let [d0, d1] = self.tu_depth_range;
        if !(d0.is_finite() && d1.is_finite() && d0 > 0.0 && d0 <= d1) {
            return Err(invalid("tu_depth_range", format!("need 0 < min <= max, got [{d0}, {d1}]")));
        }
        if self.error_g.is_empty() || self.error_g.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(invalid("error_g", "must be a non-empty list of values >= 0"));
        }
        if self.gamma_th.len() != 1 && self.gamma_th.len() != self.n_users {
            return Err(invalid("gamma_th", format!("needs 1 or {} entries", self.n_users)));
        }
        for g in &self.gamma_th {
            pos("gamma_th", *g)?;
        }
        if !(self.c_th.is_finite() && self.c_th >= 0.0) {
            return Err(invalid("c_th", "must be >= 0"));
        }
        if let Some(n0) = self.noise_power {
            pos("noise_power", n0)?;
        }
        if self.solver.randomization_candidates == 0 {
            return Err(invalid("solver.randomization_candidates", "must be at least 1"));
        }
        if self.solver.bisection_steps == 0 {
            return Err(invalid("solver.bisection_steps", "must be at least 1"));
        }
        self.medium.validate().map_err(|e| invalid("medium", e.to_string()))?;
        self.eap_coil.validate().map_err(|e| invalid("eap_coil", e.to_string()))?;
        self.tu_coil.validate().map_err(|e| invalid("tu_coil", e.to_string()))?;
        // Adjacent ring coils must not overlap.
        if self.k_coils > 1 {
            let chord = 2.0 * self.eap_ring_radius * (PI / self.k_coils as f64).sin();
            if chord <= 2.0 * self.eap_coil.radius {
                return Err(invalid("eap_ring_radius", "adjacent access-point coils overlap"));
            }
        }
        Ok(())
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power.unwrap_or_else(|| thermal_noise(self.bandwidth))
    }

    pub fn gamma_th_per_user(&self) -> Vec<f64> {
        if self.gamma_th.len() == 1 {
            vec![self.gamma_th[0]; self.n_users]
        } else {
            self.gamma_th.clone()
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            gamma_th: self.gamma_th_per_user(),
            c_th: self.c_th,
            bandwidth: self.bandwidth,
            noise_power: self.noise_power(),
        }
    }

    pub fn extract_options(&self) -> ExtractOptions {
        ExtractOptions {
            n_candidates: self.solver.randomization_candidates,
            bisection_steps: self.solver.bisection_steps,
            ..ExtractOptions::default()
        }
    }

    pub fn kappas(&self) -> Vec<f64> {
        self.gamma_th_per_user()
            .iter()
            .map(|&g| robust::kappa(g, self.c_th, self.bandwidth, self.n_users))
            .collect()
    }
}

/// A ChaCha stream keyed by the seed and a position in the experiment.
pub fn stream(seed: u64, purpose: u64, g_index: u64, trial: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    key[16..24].copy_from_slice(&g_index.to_le_bytes());
    key[24..].copy_from_slice(&trial.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub const PURPOSE_GEOMETRY: u64 = 1;
pub const PURPOSE_ERRORS: u64 = 2;
pub const PURPOSE_DESIGN: u64 = 3;
/// Diagnostic draws that never feed a design.
pub const PURPOSE_ORACLE: u64 = 4;

const MAX_PLACEMENT_RETRIES: usize = 10_000;

/// Draws a network: the access-point ring at the surface and users uniform
/// in a disk below it, at a uniform depth, with isotropic coil axes.
pub fn sample_geometry<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<NetworkGeometry, ChannelError> {
    let eap_coils = NetworkGeometry::eap_ring(cfg.k_coils, cfg.eap_ring_radius, cfg.eap_coil);
    let mut tu_coils: Vec<(CoilSpec, Pose)> = Vec::with_capacity(cfg.n_users);
    let [d0, d1] = cfg.tu_depth_range;
    for _ in 0..cfg.n_users {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_RETRIES {
            let r = cfg.tu_placement_radius * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            let depth = d0 + (d1 - d0) * rng.random::<f64>();
            let position = Vector3::new(r * phi.cos(), r * phi.sin(), -depth);
            let axis = loop {
                let a = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                if a.norm() > 1e-9 {
                    break a;
                }
            };
            let pose = Pose::with_axis(position, axis);
            let clear = eap_coils
                .iter()
                .chain(tu_coils.iter())
                .all(|(c, p)| (p.position - position).norm() > c.radius + cfg.tu_coil.radius);
            if clear {
                tu_coils.push((cfg.tu_coil, pose));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(ChannelError::Geometry("could not place a user without coil overlap".into()));
        }
    }
    Ok(NetworkGeometry { eap_coils, tu_coils, medium: cfg.medium, f_c: cfg.f_c, bandwidth: cfg.bandwidth })
}

/// Uniform draw from the ball `‖z‖ ≤ radius` in `C^dim`.
pub fn uniform_complex_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> CVector {
    let mut z = CVector::from_fn(dim, |_, _| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let r = radius * rng.random::<f64>().powf(1.0 / (2 * dim) as f64);
    let norm = z.norm();
    if norm > 0.0 {
        z *= c64(r / norm, 0.0);
    }
    z
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelErrors {
    /// N×K, row `n` is `ΔH_n`.
    pub delta_h: CMatrix,
    /// K×K.
    pub delta_q: CMatrix,
}

/// Errors uniform in the balls `‖ΔH_n‖ ≤ g‖h̄_n‖` and `‖ΔQ‖_F ≤ g‖Q̄‖_F`.
pub fn sample_errors<R: Rng + ?Sized>(channel: &ChannelMatrices, g: f64, rng: &mut R) -> ChannelErrors {
    let (n, k) = (channel.n(), channel.k());
    let mut delta_h = CMatrix::zeros(n, k);
    for u in 0..n {
        let xi = g * channel.h.row(u).norm();
        let row = uniform_complex_ball(k, xi, rng);
        delta_h.row_mut(u).copy_from(&row.transpose());
    }
    let xi_q = g * channel.q.norm();
    let flat = uniform_complex_ball(k * k, xi_q, rng);
    let delta_q = CMatrix::from_column_slice(k, k, flat.as_slice());
    ChannelErrors { delta_h, delta_q }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Robust,
    Nonrobust,
    Mmse,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Robust, Scheme::Nonrobust, Scheme::Mmse];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Robust => "robust",
            Scheme::Nonrobust => "nonrobust",
            Scheme::Mmse => "mmse",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scheme: Scheme,
    /// Realized SINR per user on the true channel.
    pub sinr: Vec<f64>,
    pub user_outage: Vec<bool>,
    pub network_outage: bool,
    /// `Σ B log₂(1 + γ_n)` (bit/s).
    pub sum_rate: f64,
    /// Transmit power on the true `Q` (W).
    pub power: f64,
    /// Transmit power on the estimate `Q̄` (W).
    pub nominal_power: f64,
}

/// Evaluates a design on `h_true`, `q_true`; `q_est` is the matrix it was
/// designed on. A user is in outage when its SINR falls below its threshold;
/// the network is in outage when any user is.
pub fn evaluate_trial(
    scheme: Scheme,
    beams: &BeamformerSet,
    q_est: &CMatrix,
    h_true: &CMatrix,
    q_true: &CMatrix,
    cfg: &ScenarioConfig,
) -> TrialRecord {
    let sinr = metrics::sinr(h_true, &beams.vectors, cfg.noise_power());
    let gamma_th = cfg.gamma_th_per_user();
    let user_outage: Vec<bool> = sinr.iter().zip(&gamma_th).map(|(g, t)| g < t).collect();
    TrialRecord {
        scheme,
        network_outage: user_outage.iter().any(|&o| o),
        sum_rate: metrics::sum_rate(&sinr, cfg.bandwidth),
        power: metrics::transmit_power(q_true, &beams.vectors, cfg.bandwidth),
        nominal_power: metrics::transmit_power(q_est, &beams.vectors, cfg.bandwidth),
        sinr,
        user_outage,
    }
}

/// Why a trial produced no record for a scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialFailure {
    Channel(ChannelError),
    Design(RobustError),
}

impl std::fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrialFailure::Channel(e) => write!(f, "{e}"),
            TrialFailure::Design(e) => write!(f, "{e}"),
        }
    }
}

/// Designs of one trial at one error level, before evaluation.
#[derive(Debug, Clone)]
pub struct TrialDesign {
    pub geometry: NetworkGeometry,
    pub channel: ChannelMatrices,
    /// The robust problem at this error level.
    pub problem: RobustProblem,
    pub designs: Vec<(Scheme, Result<BeamformerSet, RobustError>)>,
    pub errors: ChannelErrors,
}

/// Per-trial state that does not depend on `g`.
struct TrialBase {
    geometry: NetworkGeometry,
    channel: ChannelMatrices,
    nonrobust: Result<BeamformerSet, RobustError>,
    mmse: Result<BeamformerSet, RobustError>,
}

fn trial_base(cfg: &ScenarioConfig, trial: usize) -> Result<TrialBase, ChannelError> {
    let mut rng = stream(cfg.seed, PURPOSE_GEOMETRY, 0, trial as u64);
    let geometry = sample_geometry(cfg, &mut rng)?;
    let channel = channel::assemble_channel(&geometry)?;
    let th = cfg.thresholds();
    let mut design_rng = stream(cfg.seed, PURPOSE_DESIGN, u64::MAX, trial as u64);
    let nonrobust = baselines::nonrobust_beamform(&channel, &th, &cfg.extract_options(), &mut design_rng);
    let mmse = baselines::mmse_beamform(&channel, &th).map(|(b, _)| b);
    Ok(TrialBase { geometry, channel, nonrobust, mmse })
}

fn robust_problem(cfg: &ScenarioConfig, channel: &ChannelMatrices, g: f64) -> RobustProblem {
    let th = cfg.thresholds();
    RobustProblem::with_relative_error(channel.clone(), g, th.gamma_th, th.c_th, th.bandwidth, th.noise_power)
}

fn design_at(cfg: &ScenarioConfig, base: &TrialBase, g_index: usize, trial: usize) -> TrialDesign {
    let g = cfg.error_g[g_index];
    let problem = robust_problem(cfg, &base.channel, g);
    let robust = if g == 0.0 {
        base.nonrobust.clone()
    } else {
        let mut rng = stream(cfg.seed, PURPOSE_DESIGN, g_index as u64, trial as u64);
        robust::robust_beamform(&problem, &cfg.extract_options(), &mut rng)
    };
    let mut rng = stream(cfg.seed, PURPOSE_ERRORS, g_index as u64, trial as u64);
    let errors = sample_errors(&base.channel, g, &mut rng);
    TrialDesign {
        geometry: base.geometry.clone(),
        channel: base.channel.clone(),
        problem,
        designs: vec![
            (Scheme::Robust, robust),
            (Scheme::Nonrobust, base.nonrobust.clone()),
            (Scheme::Mmse, base.mmse.clone()),
        ],
        errors,
    }
}

/// Regenerates the designs of trial `trial` at error level `error_g[g_index]`
/// exactly as [`run_experiment`] computes them.
pub fn design_trial(cfg: &ScenarioConfig, trial: usize, g_index: usize) -> Result<TrialDesign, ChannelError> {
    let base = trial_base(cfg, trial)?;
    Ok(design_at(cfg, &base, g_index, trial))
}

type TrialOutcome = Result<TrialRecord, TrialFailure>;

/// Outcomes of one trial, indexed `[g][scheme]`.
fn run_trial(cfg: &ScenarioConfig, trial: usize) -> Vec<Vec<TrialOutcome>> {
    let base = match trial_base(cfg, trial) {
        Ok(b) => b,
        Err(e) => {
            return vec![vec![Err(TrialFailure::Channel(e)); Scheme::ALL.len()]; cfg.error_g.len()];
        }
    };
    (0..cfg.error_g.len())
        .map(|gi| {
            let d = design_at(cfg, &base, gi, trial);
            let h_true = &d.channel.h + &d.errors.delta_h;
            let q_true = &d.channel.q + &d.errors.delta_q;
            d.designs
                .iter()
                .map(|(scheme, design)| match design {
                    Ok(beams) => Ok(evaluate_trial(*scheme, beams, &d.channel.q, &h_true, &q_true, cfg)),
                    Err(e) => Err(TrialFailure::Design(e.clone())),
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub g: f64,
    pub scheme: Scheme,
    /// Fraction of evaluated trials in network outage.
    pub net_outage: f64,
    pub user_outage: Vec<f64>,
    /// Wilson 95% half-width of `net_outage`.
    pub ci_halfwidth: f64,
    /// Mean sum rate over evaluated trials without network outage (0 if none).
    pub effective_throughput: f64,
    /// Mean transmit power on the estimated `Q̄` over evaluated trials.
    pub mean_power: f64,
    pub evaluated: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// One cell per `(g, scheme)`, ordered by the g grid then [`Scheme::ALL`].
    pub cells: Vec<CellSummary>,
    /// Every record, indexed `[trial][g][scheme]`.
    pub records: Vec<Vec<Vec<Result<TrialRecord, String>>>>,
}

impl ExperimentResult {
    pub fn cell(&self, g_index: usize, scheme: Scheme) -> &CellSummary {
        let s = Scheme::ALL.iter().position(|&x| x == scheme).expect("known scheme");
        &self.cells[g_index * Scheme::ALL.len() + s]
    }

    pub fn failure_counts(&self) -> Vec<(Scheme, usize)> {
        Scheme::ALL
            .iter()
            .map(|&s| (s, self.cells.iter().filter(|c| c.scheme == s).map(|c| c.failures).sum()))
            .collect()
    }
}

/// Wilson score interval half-width at 95%.
pub fn wilson_halfwidth(successes: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = successes as f64 / nf;
    z / (1.0 + z * z / nf) * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt()
}

fn summarize(g: f64, scheme: Scheme, outcomes: &[&TrialOutcome], n_users: usize) -> CellSummary {
    let ok: Vec<&TrialRecord> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let evaluated = ok.len();
    let failures = outcomes.len() - evaluated;
    let n_out = ok.iter().filter(|r| r.network_outage).count();
    let frac = |c: usize| if evaluated == 0 { 0.0 } else { c as f64 / evaluated as f64 };
    let user_outage = (0..n_users).map(|u| frac(ok.iter().filter(|r| r.user_outage[u]).count())).collect();
    let good: Vec<f64> = ok.iter().filter(|r| !r.network_outage).map(|r| r.sum_rate).collect();
    let effective_throughput = if good.is_empty() { 0.0 } else { good.iter().sum::<f64>() / good.len() as f64 };
    let mean_power = if evaluated == 0 { 0.0 } else { ok.iter().map(|r| r.nominal_power).sum::<f64>() / evaluated as f64 };
    CellSummary {
        g,
        scheme,
        net_outage: frac(n_out),
        user_outage,
        ci_halfwidth: wilson_halfwidth(n_out, evaluated),
        effective_throughput,
        mean_power,
        evaluated,
        failures,
    }
}

/// Runs the full sweep. Trials execute in parallel; aggregation is in trial order.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentResult, ConfigError> {
    cfg.validate()?;
    let outcomes: Vec<Vec<Vec<TrialOutcome>>> = (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect();
    let mut cells = Vec::with_capacity(cfg.error_g.len() * Scheme::ALL.len());
    for (gi, &g) in cfg.error_g.iter().enumerate() {
        for (si, &scheme) in Scheme::ALL.iter().enumerate() {
            let column: Vec<&TrialOutcome> = outcomes.iter().map(|t| &t[gi][si]).collect();
            cells.push(summarize(g, scheme, &column, cfg.n_users));
        }
    }
    let records = outcomes
        .into_iter()
        .map(|t| t.into_iter().map(|row| row.into_iter().map(|o| o.map_err(|e| e.to_string())).collect()).collect())
        .collect();
    Ok(ExperimentResult { cells, records })
}

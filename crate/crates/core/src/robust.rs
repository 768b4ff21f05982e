//! Worst-case robust beamforming by semidefinite relaxation.
//!
//! For user `n` with estimated channel row `h̄_n` and error ball
//! `‖ΔH_n‖_F ≤ ξ_n`, the requirement `γ_n ≥ κ_n` for every error in the ball
//! is, by the S-lemma, equivalent to the existence of `a_n ≥ 0` with
//!
//! ```text
//! Γ_n = ⎡ D_n + a_n I        D_n h̄_nᴴ                  ⎤ ⪰ 0,
//!       ⎣ h̄_n D_n            h̄_n D_n h̄_nᴴ − a_n ξ_n² − κ_n N₀ ⎦
//! D_n = X_n − κ_n Σ_{u≠n} X_u,     X_n = Ĩ_n Ĩ_nᴴ.
//! ```
//!
//! Dropping `rank X_n = 1` gives a semidefinite program whose objective is the
//! power upper bound `B Σ tr((Herm Q̄ + ξ_q I) X_n)`. A rank-one design is then
//! recovered from the relaxed solution by eigen-extraction or Gaussian
//! randomization followed by a joint power rescaling.
//!
//! Internally every problem is rescaled so that the weakest user's channel has
//! unit norm and the noise floor is one; the channel gains of different users
//! can differ by many orders of magnitude.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::channel::ChannelMatrices;
use crate::linalg::{c64, hermitian_part, outer, principal_eigenpair, quad_form, realify, CMatrix, CVector};
use crate::metrics::weighted_power;
use crate::sdp::{self, AffineLmi, SdpProblem, SdpSettings, SdpStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobustError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("thresholds unattainable for this geometry/error level: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("rank-one extraction failure: {0}")]
    Rank1ExtractionFailure(String),
}

/// Per-user SINR target combining the user's own threshold with its share of
/// the sum-rate requirement: `max(γ_th, 2^{C_th/(B·N)} − 1)`.
pub fn kappa(gamma_th_n: f64, c_th: f64, bandwidth: f64, n_users: usize) -> f64 {
    gamma_th_n.max((c_th / (bandwidth * n_users as f64)).exp2() - 1.0)
}

/// Weight of the power upper bound: `(Q̄ + Q̄ᴴ)/2 + ξ_q I`.
///
/// For any `‖ΔQ‖_F ≤ ξ_q`, `vᴴ(ΔQ + ΔQᴴ)v ≤ 2ξ_q vᴴv`, so
/// `B Σ vᴴ P v` bounds the true transmit power from above.
pub fn power_upper_matrix(q_bar: &CMatrix, xi_q: f64) -> CMatrix {
    let k = q_bar.nrows();
    hermitian_part(q_bar) + CMatrix::identity(k, k) * c64(xi_q, 0.0)
}

/// Assembles `Γ_n` for the given (not necessarily rank-one) `X` set.
pub fn build_gamma_lmi(
    x_all: &[CMatrix],
    n: usize,
    a_n: f64,
    kappa_n: f64,
    h_bar_n: &CVector,
    xi_n: f64,
    n0: f64,
) -> Result<CMatrix, RobustError> {
    let k = h_bar_n.len();
    if n >= x_all.len() {
        return Err(RobustError::InvalidArgument(format!("user {n} out of range for {} users", x_all.len())));
    }
    if x_all.iter().any(|x| x.shape() != (k, k)) {
        return Err(RobustError::InvalidArgument(format!("every X must be {k}×{k}")));
    }
    let mut d = x_all[n].clone();
    for (u, x) in x_all.iter().enumerate() {
        if u != n {
            d -= x * c64(kappa_n, 0.0);
        }
    }
    Ok(gamma_from_d(&d, a_n, kappa_n, h_bar_n, xi_n, n0))
}

fn gamma_from_d(d: &CMatrix, a: f64, kappa_n: f64, h: &CVector, xi: f64, n0: f64) -> CMatrix {
    let k = h.len();
    let dh = d * h.map(|z| z.conj());
    let br: f64 = h.iter().zip(dh.iter()).map(|(hi, di)| hi * di).sum::<crate::linalg::C64>().re;
    let mut g = CMatrix::zeros(k + 1, k + 1);
    g.view_mut((0, 0), (k, k)).copy_from(d);
    for i in 0..k {
        g[(i, i)] += c64(a, 0.0);
        g[(i, k)] = dh[i];
        g[(k, i)] = dh[i].conj();
    }
    g[(k, k)] = c64(br - a * xi * xi - kappa_n * n0, 0.0);
    g
}

#[derive(Debug, Clone)]
pub struct RobustProblem {
    /// Estimated channel (`H̄`, `Q̄`).
    pub channel: ChannelMatrices,
    /// Per-user radius `ξ_n` of `‖ΔH_n‖_F`.
    pub xi_h: Vec<f64>,
    /// Radius `ξ_q` of `‖ΔQ‖_F`.
    pub xi_q: f64,
    /// Per-user SINR thresholds (linear).
    pub gamma_th: Vec<f64>,
    /// Sum-rate threshold in bit/s.
    pub c_th: f64,
    pub bandwidth: f64,
    pub noise_power: f64,
}

impl RobustProblem {
    /// Error radii relative to the estimate: `ξ_n = g‖h̄_n‖`, `ξ_q = g‖Q̄‖_F`.
    pub fn with_relative_error(
        channel: ChannelMatrices,
        g: f64,
        gamma_th: Vec<f64>,
        c_th: f64,
        bandwidth: f64,
        noise_power: f64,
    ) -> Self {
        let xi_h = (0..channel.n()).map(|n| g * channel.h.row(n).norm()).collect();
        let xi_q = g * channel.q.norm();
        Self { channel, xi_h, xi_q, gamma_th, c_th, bandwidth, noise_power }
    }

    pub fn n_users(&self) -> usize {
        self.channel.n()
    }

    pub fn validate(&self) -> Result<(), RobustError> {
        let n = self.n_users();
        let bad = |m: &str| Err(RobustError::InvalidArgument(m.to_string()));
        if self.xi_h.len() != n || self.gamma_th.len() != n {
            return bad("xi_h and gamma_th need one entry per user");
        }
        if self.xi_h.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(self.xi_q.is_finite() && self.xi_q >= 0.0) {
            return bad("error radii must be finite and non-negative");
        }
        if self.gamma_th.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return bad("gamma_th must be positive");
        }
        if !(self.c_th.is_finite() && self.c_th >= 0.0) {
            return bad("c_th must be non-negative");
        }
        if !(self.bandwidth > 0.0 && self.noise_power > 0.0) {
            return bad("bandwidth and noise_power must be positive");
        }
        if self.channel.h.ncols() != self.channel.q.nrows() || self.channel.q.nrows() != self.channel.q.ncols() {
            return bad("channel dimensions disagree");
        }
        Ok(())
    }

    pub fn kappas(&self) -> Vec<f64> {
        let n = self.n_users();
        self.gamma_th.iter().map(|&g| kappa(g, self.c_th, self.bandwidth, n)).collect()
    }

    pub fn power_matrix(&self) -> CMatrix {
        power_upper_matrix(&self.channel.q, self.xi_q)
    }
}

/// The problem in normalized units: `X = scale_x · X'`, channels divided by
/// their norms and the objective weight divided by its norm.
#[derive(Debug, Clone)]
struct Normalized {
    k: usize,
    scale_x: f64,
    p_hat: CMatrix,
    p_norm: f64,
    h_hat: Vec<CVector>,
    xi_hat: Vec<f64>,
    n0_hat: Vec<f64>,
    kappa: Vec<f64>,
}

impl Normalized {
    fn new(prob: &RobustProblem) -> Result<Self, RobustError> {
        prob.validate()?;
        let n = prob.n_users();
        let norms: Vec<f64> = (0..n).map(|u| prob.channel.h.row(u).norm()).collect();
        if let Some(u) = norms.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(RobustError::Infeasible(format!("user {u} has a zero channel")));
        }
        let s_ref = norms.iter().copied().fold(f64::INFINITY, f64::min);
        let p = prob.power_matrix();
        let p_norm = p.norm();
        if !(p_norm > 0.0) {
            return Err(RobustError::InvalidArgument("power weight is zero".into()));
        }
        Ok(Self {
            k: prob.channel.k(),
            scale_x: prob.noise_power / (s_ref * s_ref),
            p_hat: &p / c64(p_norm, 0.0),
            p_norm,
            h_hat: (0..n).map(|u| prob.channel.h_row(u) / c64(norms[u], 0.0)).collect(),
            xi_hat: (0..n).map(|u| prob.xi_h[u] / norms[u]).collect(),
            n0_hat: norms.iter().map(|s| (s_ref / s).powi(2)).collect(),
            kappa: prob.kappas(),
        })
    }

    fn n(&self) -> usize {
        self.h_hat.len()
    }

    fn gamma(&self, x: &[CMatrix], n: usize, a: f64) -> CMatrix {
        build_gamma_lmi(x, n, a, self.kappa[n], &self.h_hat[n], self.xi_hat[n], self.n0_hat[n])
            .expect("dimensions checked at construction")
    }

    /// `Γ_n` without the noise term, i.e. its part linear in `X`.
    fn gamma_noise_free(&self, x: &[CMatrix], n: usize) -> CMatrix {
        build_gamma_lmi(x, n, 0.0, self.kappa[n], &self.h_hat[n], self.xi_hat[n], 0.0)
            .expect("dimensions checked at construction")
    }

    /// Objective in watts for normalized `X'` with cost `Σ tr(P̂ X')`.
    fn watts(&self, normalized_cost: f64, bandwidth: f64) -> f64 {
        bandwidth * self.scale_x * self.p_norm * normalized_cost
    }

    /// Independent LMI check of user `n` via [`sdp::min_eig_feasibility`].
    fn lmi_holds(&self, x: &[CMatrix], n: usize, tol: f64) -> bool {
        let base = self.gamma(x, n, 0.0);
        let scale = base.iter().map(|z| z.norm()).fold(0.0, f64::max).max(self.kappa[n] * self.n0_hat[n]);
        let xi = self.xi_hat[n];
        if xi == 0.0 {
            let k = self.k;
            return base[(k, k)].re >= -tol * scale;
        }
        let d = base.view((0, 0), (self.k, self.k)).into_owned();
        let lo = (-crate::linalg::min_eigenvalue(&d)).max(0.0);
        let hi = base[(self.k, self.k)].re / (xi * xi);
        if hi < lo - tol * scale / (xi * xi) {
            return false;
        }
        let mut slope = CMatrix::identity(self.k + 1, self.k + 1);
        slope[(self.k, self.k)] = c64(-xi * xi, 0.0);
        let lmi = AffineLmi { base, slope };
        sdp::min_eig_feasibility(&lmi, (lo, hi.max(lo)), tol * scale).is_some()
    }
}

/// Number of real parameters of a `k×k` Hermitian matrix.
fn herm_dim(k: usize) -> usize {
    k * k
}

/// Basis element `p` of the Hermitian `k×k` matrices: diagonal units, then
/// symmetric real pairs, then antisymmetric imaginary pairs.
fn herm_basis(k: usize, p: usize) -> CMatrix {
    let mut b = CMatrix::zeros(k, k);
    if p < k {
        b[(p, p)] = c64(1.0, 0.0);
        return b;
    }
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let q = p - k;
    if q < pairs.len() {
        let (i, j) = pairs[q];
        b[(i, j)] = c64(1.0, 0.0);
        b[(j, i)] = c64(1.0, 0.0);
    } else {
        let (i, j) = pairs[q - pairs.len()];
        b[(i, j)] = c64(0.0, 1.0);
        b[(j, i)] = c64(0.0, -1.0);
    }
    b
}

fn herm_from_coords(k: usize, y: &[f64]) -> CMatrix {
    let mut x = CMatrix::zeros(k, k);
    for (p, v) in y.iter().enumerate() {
        x += herm_basis(k, p) * c64(*v, 0.0);
    }
    x
}

/// Relaxed solution in physical units.
#[derive(Debug, Clone)]
pub struct SdrSolution {
    /// `X_n*` in A².
    pub x: Vec<CMatrix>,
    /// S-lemma multipliers (zero for users with `ξ_n = 0`).
    pub a: Vec<f64>,
    /// `B Σ tr(P X_n*)` in watts.
    pub objective: f64,
    pub iterations: usize,
    x_normalized: Vec<CMatrix>,
}

impl SdrSolution {
    /// Wraps an externally supplied `X` set, e.g. a known rank-one solution.
    pub fn from_x(prob: &RobustProblem, x: Vec<CMatrix>) -> Result<Self, RobustError> {
        let norm = Normalized::new(prob)?;
        let x_normalized: Vec<CMatrix> = x.iter().map(|m| m / c64(norm.scale_x, 0.0)).collect();
        let cost: f64 = x_normalized.iter().map(|m| (&norm.p_hat * m).trace().re).sum();
        Ok(Self {
            objective: norm.watts(cost, prob.bandwidth),
            a: vec![0.0; x.len()],
            x,
            iterations: 0,
            x_normalized,
        })
    }
}

/// Adds `−F` (upper triangle) as the coefficient of constraint `con`, so that
/// the dual slack of `block` is `F0 + Σ y_i F_i`.
fn add_dense(p: &mut SdpProblem, con: usize, block: usize, f: &DMatrix<f64>) {
    for j in 0..f.ncols() {
        for i in 0..=j {
            let v = f[(i, j)];
            if v != 0.0 {
                p.add_coefficient(con, block, i, j, -v);
            }
        }
    }
}

/// Solves the relaxed problem.
///
/// The relaxation is posed in LMI form: the free variables are the real
/// coordinates of each `X_n` and the multipliers `a_n`; the cone blocks are the
/// realified `Γ_n` (or the scalar nominal constraint when `ξ_n = 0`), the
/// realified `X_n` and `a_n ≥ 0`.
pub fn solve_sdr(prob: &RobustProblem) -> Result<SdrSolution, RobustError> {
    let norm = Normalized::new(prob)?;
    let k = norm.k;
    let n_users = norm.n();
    let hd = herm_dim(k);
    let robust: Vec<bool> = norm.xi_hat.iter().map(|&x| x > 0.0).collect();

    // Block layout.
    let mut blocks = Vec::new();
    let gamma_block: Vec<usize> = (0..n_users)
        .map(|n| {
            blocks.push(if robust[n] { 2 * (k + 1) } else { 1 });
            blocks.len() - 1
        })
        .collect();
    let x_block: Vec<usize> = (0..n_users)
        .map(|_| {
            blocks.push(2 * k);
            blocks.len() - 1
        })
        .collect();
    let mut a_block = vec![usize::MAX; n_users];
    let mut a_var = vec![usize::MAX; n_users];
    let mut n_vars = n_users * hd;
    for n in 0..n_users {
        if robust[n] {
            blocks.push(1);
            a_block[n] = blocks.len() - 1;
            a_var[n] = n_vars;
            n_vars += 1;
        }
    }

    let mut p = SdpProblem::new(blocks);
    // Constant terms F0 enter as the objective C.
    for n in 0..n_users {
        let c0 = -norm.kappa[n] * norm.n0_hat[n];
        if robust[n] {
            p.add_objective(gamma_block[n], k, k, c0);
            p.add_objective(gamma_block[n], 2 * k + 1, 2 * k + 1, c0);
        } else {
            p.add_objective(gamma_block[n], 0, 0, c0);
        }
    }

    let zeros: Vec<CMatrix> = vec![CMatrix::zeros(k, k); n_users];
    for u in 0..n_users {
        for q in 0..hd {
            let b = herm_basis(k, q);
            let cost = (&norm.p_hat * &b).trace().re;
            let con = p.add_constraint(-cost);
            let mut xs = zeros.clone();
            xs[u] = b.clone();
            for n in 0..n_users {
                let g = build_gamma_lmi(&xs, n, 0.0, norm.kappa[n], &norm.h_hat[n], norm.xi_hat[n], 0.0)?;
                if robust[n] {
                    add_dense(&mut p, con, gamma_block[n], &realify(&g));
                } else {
                    let v = g[(k, k)].re;
                    if v != 0.0 {
                        p.add_coefficient(con, gamma_block[n], 0, 0, -v);
                    }
                }
            }
            add_dense(&mut p, con, x_block[u], &realify(&b));
        }
    }
    for n in 0..n_users {
        if robust[n] {
            let con = p.add_constraint(0.0);
            let mut f = CMatrix::identity(k + 1, k + 1);
            f[(k, k)] = c64(-norm.xi_hat[n].powi(2), 0.0);
            add_dense(&mut p, con, gamma_block[n], &realify(&f));
            p.add_coefficient(con, a_block[n], 0, 0, -1.0);
        }
    }

    let sol = sdp::solve_with(&p, &SdpSettings::default()).map_err(|e| RobustError::SolverFailure(e.to_string()))?;
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::DualInfeasible => {
            return Err(RobustError::Infeasible(format!("relaxation is infeasible ({})", sol.message)))
        }
        _ if sol.nearly_optimal(1e-5) => {}
        _ => {
            return Err(RobustError::SolverFailure(format!(
                "{:?} after {} iterations: {} (pinf {:.1e}, dinf {:.1e})",
                sol.status, sol.iterations, sol.message, sol.primal_residual, sol.dual_residual
            )))
        }
    }

    let y: Vec<f64> = sol.y.iter().copied().collect();
    let x_normalized: Vec<CMatrix> =
        (0..n_users).map(|u| hermitian_part(&herm_from_coords(k, &y[u * hd..(u + 1) * hd]))).collect();
    let cost: f64 = x_normalized.iter().map(|x| (&norm.p_hat * x).trace().re).sum();
    let a = (0..n_users).map(|n| if robust[n] { y[a_var[n]].max(0.0) * norm.scale_x } else { 0.0 }).collect();
    Ok(SdrSolution {
        x: x_normalized.iter().map(|x| x * c64(norm.scale_x, 0.0)).collect(),
        a,
        objective: norm.watts(cost, prob.bandwidth),
        iterations: sol.iterations,
        x_normalized,
    })
}

#[derive(Debug, Clone)]
pub struct BeamformerSet {
    /// Current vectors `Ĩ_{a,n}` in amperes.
    pub vectors: Vec<CVector>,
    /// `P_t^U = B Σ Ĩᴴ P Ĩ` in watts.
    pub power_upper: f64,
    /// Objective of the relaxation (a lower bound on `power_upper`).
    pub sdr_objective: f64,
    /// `(power_upper − sdr_objective) / sdr_objective`.
    pub rank1_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub n_candidates: usize,
    pub bisection_steps: usize,
    /// Relative eigenvalue ratio below which `X_n` counts as rank one.
    pub rank_tol: f64,
    /// Relative tolerance of the LMI checks.
    pub lmi_tol: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { n_candidates: 1000, bisection_steps: 40, rank_tol: 1e-6, lmi_tol: 1e-9 }
    }
}

/// Spectral data of one user's `Γ_n` for a fixed direction set.
///
/// With `D = U Λ Uᴴ` and `c = |Uᴴ D h̄ᴴ|²`, scaling every current by `√t`
/// turns the LMI into the scalar condition
/// `max_a  t·br − κN₀ − aξ² − Σ t²c_i/(tλ_i + a) ≥ 0`.
struct UserSpectrum {
    lambda: Vec<f64>,
    c: Vec<f64>,
    br: f64,
    xi2: f64,
    kn0: f64,
    scale: f64,
}

impl UserSpectrum {
    fn new(norm: &Normalized, x: &[CMatrix], n: usize) -> Self {
        let g = build_gamma_lmi(x, n, 0.0, norm.kappa[n], &norm.h_hat[n], norm.xi_hat[n], 0.0)
            .expect("dimensions checked at construction");
        let k = norm.k;
        let d = g.view((0, 0), (k, k)).into_owned();
        let dh = g.view((0, k), (k, 1)).into_owned();
        let eig = nalgebra::SymmetricEigen::new(d);
        let proj = eig.eigenvectors.adjoint() * dh;
        let br = g[(k, k)].re;
        let lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let scale = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Self {
            lambda,
            c: proj.iter().map(|z| z.norm_sqr()).collect(),
            br,
            xi2: norm.xi_hat[n].powi(2),
            kn0: norm.kappa[n] * norm.n0_hat[n],
            scale,
        }
    }

    /// Noise-free nominal margin `h̄ D h̄ᴴ`: positive is necessary for feasibility.
    fn nominal(&self) -> f64 {
        self.br
    }

    fn feasible(&self, t: f64, tol: f64) -> bool {
        let slack = tol * (t * self.scale + self.kn0);
        if self.xi2 == 0.0 {
            return t * self.br - self.kn0 >= -slack;
        }
        let lam_min = self.lambda.iter().copied().fold(f64::INFINITY, f64::min);
        let a0 = (-t * lam_min).max(0.0);
        let psi = |a: f64| {
            let mut v = t * self.br - self.kn0 - a * self.xi2;
            for (l, c) in self.lambda.iter().zip(&self.c) {
                let den = t * l + a;
                if *c > 0.0 {
                    if den <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    v -= t * t * c / den;
                }
            }
            v
        };
        let dpsi = |a: f64| {
            let mut v = -self.xi2;
            for (l, c) in self.lambda.iter().zip(&self.c) {
                let den = t * l + a;
                if *c > 0.0 {
                    v += t * t * c / (den * den);
                }
            }
            v
        };
        // ψ is concave on (a0, ∞); walk to its maximizer by bisection on ψ'.
        let mut lo = a0;
        if dpsi(lo) <= 0.0 {
            return psi(lo) >= -slack;
        }
        let sum_c: f64 = self.c.iter().sum();
        let mut hi = a0 + t * (sum_c / self.xi2).sqrt();
        if hi <= lo {
            hi = lo + 1e-12 * lo.max(1.0);
        }
        while dpsi(hi) > 0.0 {
            hi = lo + 2.0 * (hi - lo);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if psi(mid) >= -slack {
                return true;
            }
            if mid <= lo || mid >= hi {
                break;
            }
            if dpsi(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        false
    }
}

/// A candidate direction set in normalized units with its joint scale.
struct Candidate {
    v: Vec<CVector>,
    t: f64,
    cost: f64,
}

fn rank_one_x(v: &[CVector]) -> Vec<CMatrix> {
    v.iter().map(outer).collect()
}

/// Smallest joint scale making every user's LMI hold, if it lies below `t_cap`.
fn min_joint_scale(norm: &Normalized, v: &[CVector], t_cap: f64, opts: &ExtractOptions) -> Option<f64> {
    let x = rank_one_x(v);
    let spectra: Vec<UserSpectrum> = (0..norm.n()).map(|n| UserSpectrum::new(norm, &x, n)).collect();
    let mut t_lb: f64 = 0.0;
    for s in &spectra {
        if s.nominal() <= 0.0 {
            return None;
        }
        t_lb = t_lb.max(s.kn0 / s.br);
    }
    if !(t_lb > 0.0) {
        t_lb = f64::MIN_POSITIVE;
    }
    if t_lb > t_cap {
        return None;
    }
    let ok = |t: f64| spectra.iter().all(|s| s.feasible(t, opts.lmi_tol));
    if ok(t_lb) {
        return Some(t_lb);
    }
    let (mut lo, mut hi) = (t_lb, t_lb);
    let mut found = false;
    for _ in 0..200 {
        hi = (hi * 2.0).min(t_cap);
        if ok(hi) {
            found = true;
            break;
        }
        if hi >= t_cap {
            break;
        }
        lo = hi;
    }
    if !found {
        return None;
    }
    for _ in 0..opts.bisection_steps {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Minimum-cost powers `p_u` for fixed directions: `X_u = p_u v_u v_uᴴ` with
/// every `Γ_n` built for the target `κ_n(1 + margin)`. A small LMI in
/// `(p, a)`; the result is returned with unit joint scale.
fn reallocate_powers(norm: &Normalized, v: &[CVector], margin: f64) -> Option<Candidate> {
    let (k, n_users) = (norm.k, norm.n());
    let mut tight = norm.clone();
    for kap in &mut tight.kappa {
        *kap *= 1.0 + margin;
    }
    let robust: Vec<bool> = tight.xi_hat.iter().map(|&x| x > 0.0).collect();
    let mut blocks: Vec<usize> = robust.iter().map(|&r| if r { 2 * (k + 1) } else { 1 }).collect();
    let p_block: Vec<usize> = (0..n_users).map(|u| blocks.len() + u).collect();
    blocks.extend(std::iter::repeat_n(1, n_users));
    let mut a_block = vec![usize::MAX; n_users];
    for n in 0..n_users {
        if robust[n] {
            a_block[n] = blocks.len();
            blocks.push(1);
        }
    }
    let mut p = SdpProblem::new(blocks);
    for n in 0..n_users {
        let c0 = -tight.kappa[n] * tight.n0_hat[n];
        if robust[n] {
            p.add_objective(n, k, k, c0);
            p.add_objective(n, 2 * k + 1, 2 * k + 1, c0);
        } else {
            p.add_objective(n, 0, 0, c0);
        }
    }
    let xs: Vec<CMatrix> = rank_one_x(v);
    let costs: Vec<f64> = v.iter().map(|vi| quad_form(vi, &tight.p_hat)).collect();
    let cmax = costs.iter().copied().fold(0.0, f64::max);
    if !(cmax > 0.0) {
        return None;
    }
    let zeros = vec![CMatrix::zeros(k, k); n_users];
    for u in 0..n_users {
        let con = p.add_constraint(-costs[u] / cmax);
        let mut only = zeros.clone();
        only[u] = xs[u].clone();
        for n in 0..n_users {
            let g = tight.gamma_noise_free(&only, n);
            if robust[n] {
                add_dense(&mut p, con, n, &realify(&g));
            } else if g[(k, k)].re != 0.0 {
                p.add_coefficient(con, n, 0, 0, -g[(k, k)].re);
            }
        }
        p.add_coefficient(con, p_block[u], 0, 0, -1.0);
    }
    for n in 0..n_users {
        if robust[n] {
            let con = p.add_constraint(0.0);
            let mut f = CMatrix::identity(k + 1, k + 1);
            f[(k, k)] = c64(-tight.xi_hat[n].powi(2), 0.0);
            add_dense(&mut p, con, n, &realify(&f));
            p.add_coefficient(con, a_block[n], 0, 0, -1.0);
        }
    }
    let sol = sdp::solve_with(&p, &SdpSettings::default()).ok()?;
    if !(sol.status == SdpStatus::Optimal || sol.nearly_optimal(1e-5)) {
        return None;
    }
    let powers: Vec<f64> = (0..n_users).map(|u| sol.y[u].max(0.0)).collect();
    let scaled: Vec<CVector> = v.iter().zip(&powers).map(|(vi, pu)| vi * c64(pu.sqrt(), 0.0)).collect();
    let cost = powers.iter().zip(&costs).map(|(pu, c)| pu * c).sum();
    Some(Candidate { v: scaled, t: 1.0, cost })
}

/// Recovers rank-one beamformers from a relaxed solution.
pub fn extract_rank1<R: Rng + ?Sized>(
    sdr: &SdrSolution,
    prob: &RobustProblem,
    opts: &ExtractOptions,
    rng: &mut R,
) -> Result<BeamformerSet, RobustError> {
    let norm = Normalized::new(prob)?;
    let n_users = norm.n();
    if sdr.x_normalized.len() != n_users {
        return Err(RobustError::InvalidArgument("relaxed solution has the wrong number of users".into()));
    }
    let sdr_cost: f64 = sdr.x_normalized.iter().map(|x| (&norm.p_hat * x).trace().re).sum();
    let unit_cost = |v: &[CVector]| v.iter().map(|vi| quad_form(vi, &norm.p_hat)).sum::<f64>();

    let mut rank_one = true;
    let principal: Vec<CVector> = sdr
        .x_normalized
        .iter()
        .map(|x| {
            let (lam1, vec1, lam2) = principal_eigenpair(x);
            if lam2.max(0.0) > opts.rank_tol * lam1.max(0.0) {
                rank_one = false;
            }
            vec1 * c64(lam1.max(0.0).sqrt(), 0.0)
        })
        .collect();

    let mut best: Option<Candidate> = None;
    if let Some(t) = min_joint_scale(&norm, &principal, f64::INFINITY, opts) {
        let cost = t * unit_cost(&principal);
        best = Some(Candidate { v: principal.clone(), t, cost });
    }
    let close_enough = |c: &Option<Candidate>| c.as_ref().is_some_and(|c| c.cost <= sdr_cost * (1.0 + opts.rank_tol));
    if !rank_one && !close_enough(&best) {
        let factors: Vec<CMatrix> = sdr
            .x_normalized
            .iter()
            .map(|x| {
                let e = nalgebra::SymmetricEigen::new(x.clone());
                let sq = e.eigenvalues.map(|l| c64(l.max(0.0).sqrt(), 0.0));
                &e.eigenvectors * CMatrix::from_diagonal(&sq)
            })
            .collect();
        let k = norm.k;
        for _ in 0..opts.n_candidates {
            let v: Vec<CVector> = factors
                .iter()
                .map(|f| {
                    let z = CVector::from_fn(k, |_, _| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
                    });
                    f * z
                })
                .collect();
            let uc = unit_cost(&v);
            if !(uc > 0.0) {
                continue;
            }
            let cap = best.as_ref().map_or(f64::INFINITY, |b| b.cost / uc);
            if let Some(t) = min_joint_scale(&norm, &v, cap, opts) {
                let cost = t * uc;
                if best.as_ref().is_none_or(|b| cost < b.cost) {
                    best = Some(Candidate { v, t, cost });
                }
            }
        }
    }

    // Directions that fail only by a sliver of SINR (nearly parallel users with
    // very different gains) are rescued by re-optimizing per-user powers.
    if best.is_none() {
        best = reallocate_powers(&norm, &principal, 1e-6);
    }

    let Some(best) = best else {
        return Err(RobustError::Rank1ExtractionFailure(
            "no candidate direction set satisfies every user's constraint at any power".into(),
        ));
    };

    // Confirm with the generic LMI search, nudging the scale up if the
    // spectral test accepted a point on the tolerance boundary.
    let mut t = best.t;
    let mut verified = false;
    for _ in 0..20 {
        let x: Vec<CMatrix> = rank_one_x(&best.v).into_iter().map(|m| m * c64(t, 0.0)).collect();
        if (0..n_users).all(|n| norm.lmi_holds(&x, n, 10.0 * opts.lmi_tol)) {
            verified = true;
            break;
        }
        t *= 1.0 + 1e-7;
    }
    if !verified {
        return Err(RobustError::Rank1ExtractionFailure("selected candidate failed LMI verification".into()));
    }

    let amp = c64((t * norm.scale_x).sqrt(), 0.0);
    let vectors: Vec<CVector> = best.v.iter().map(|v| v * amp).collect();
    let power_upper = weighted_power(&prob.power_matrix(), &vectors, prob.bandwidth);
    let sdr_objective = sdr.objective;
    Ok(BeamformerSet { vectors, power_upper, sdr_objective, rank1_gap: (power_upper - sdr_objective) / sdr_objective })
}

/// Relaxation followed by rank-one extraction.
pub fn robust_beamform<R: Rng + ?Sized>(
    prob: &RobustProblem,
    opts: &ExtractOptions,
    rng: &mut R,
) -> Result<BeamformerSet, RobustError> {
    let sdr = solve_sdr(prob)?;
    extract_rank1(&sdr, prob, opts, rng)
}

/// Whether every user's robust constraint holds for the given currents,
/// checked through `Γ_n` and a one-dimensional search over `a_n`.
pub fn satisfies_robust_constraints(prob: &RobustProblem, vectors: &[CVector], tol: f64) -> Result<bool, RobustError> {
    let norm = Normalized::new(prob)?;
    let x: Vec<CMatrix> = vectors.iter().map(|v| outer(v) / c64(norm.scale_x, 0.0)).collect();
    Ok((0..norm.n()).all(|n| norm.lmi_holds(&x, n, tol)))
}

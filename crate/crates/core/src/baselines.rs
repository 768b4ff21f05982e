//! Non-robust comparison schemes.
//!
//! * Perfect-CSI beamforming: the robust design with both error radii at zero.
//! * MMSE directions `W_n = Hᴴ(HHᴴ + N₀I)⁻¹ o_nᴴ` with per-user powers from a
//!   linear program.

use rand::Rng;

use crate::channel::ChannelMatrices;
use crate::linalg::{c64, gain, quad_form, CMatrix, CVector};
use crate::metrics::weighted_power;
use crate::robust::{self, BeamformerSet, ExtractOptions, RobustError, RobustProblem};
use crate::sdp::{self, SdpProblem, SdpStatus};

/// Design thresholds shared by every scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub gamma_th: Vec<f64>,
    pub c_th: f64,
    pub bandwidth: f64,
    pub noise_power: f64,
}

impl Thresholds {
    fn problem(&self, channel: &ChannelMatrices) -> RobustProblem {
        RobustProblem::with_relative_error(
            channel.clone(),
            0.0,
            self.gamma_th.clone(),
            self.c_th,
            self.bandwidth,
            self.noise_power,
        )
    }
}

/// Beamforming that trusts the estimate.
pub fn nonrobust_beamform<R: Rng + ?Sized>(
    channel: &ChannelMatrices,
    th: &Thresholds,
    opts: &ExtractOptions,
    rng: &mut R,
) -> Result<BeamformerSet, RobustError> {
    robust::robust_beamform(&th.problem(channel), opts, rng)
}

#[derive(Debug, Clone)]
pub struct MmseDirections {
    /// Unnormalized directions `W_n`.
    pub w: Vec<CVector>,
    /// Amplitudes `α_n ≥ 0` with `Ĩ_n = α_n W_n`.
    pub alphas: Vec<f64>,
}

/// Columns of `Hᴴ(HHᴴ + N₀I)⁻¹`.
pub fn mmse_directions(h: &CMatrix, n0: f64) -> Result<Vec<CVector>, RobustError> {
    let n = h.nrows();
    let gram = h * h.adjoint() + CMatrix::identity(n, n) * c64(n0, 0.0);
    let inv = gram
        .try_inverse()
        .ok_or_else(|| RobustError::SolverFailure("HHᴴ + N₀I is singular".into()))?;
    let w = h.adjoint() * inv;
    let cols: Vec<CVector> = (0..n).map(|i| w.column(i).into_owned()).collect();
    if cols.iter().any(|c| c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(RobustError::SolverFailure("non-finite MMSE direction".into()));
    }
    Ok(cols)
}

/// Minimum-power allocation `p_n = α_n²` for fixed directions.
///
/// In units of the interference-free requirement, `p_n = p̂_n κ_n N₀ / |h_n w_n|²`,
/// the SINR constraints read `p̂_n − Σ_{u≠n} c_nu p̂_u ≥ 1` with
/// `c_nu = κ_u |h_n w_u|² / |h_u w_u|²`. The program is solved as a diagonal
/// SDP and then snapped onto the vertex where every constraint is tight.
pub fn allocate_power(
    h: &CMatrix,
    w: &[CVector],
    kappa: &[f64],
    weight: &CMatrix,
    n0: f64,
) -> Result<Vec<f64>, RobustError> {
    let n = w.len();
    let own: Vec<f64> = (0..n).map(|i| gain(&h.row(i).transpose(), &w[i])).collect();
    if let Some(i) = own.iter().position(|g| !(*g > 0.0)) {
        return Err(RobustError::Infeasible(format!("direction {i} carries no signal to its user")));
    }
    // p_n = unit_n · p̂_n with unit_n the interference-free requirement.
    let unit: Vec<f64> = (0..n).map(|i| kappa[i] * n0 / own[i]).collect();
    // Constraint n: p̂_n − Σ_{u≠n} coef_nu p̂_u ≥ 1.
    let coef = CMatrix::from_fn(n, n, |i, u| {
        if i == u {
            c64(0.0, 0.0)
        } else {
            c64(gain(&h.row(i).transpose(), &w[u]) * unit[u] / n0, 0.0)
        }
    });
    let cost: Vec<f64> = (0..n).map(|i| quad_form(&w[i], weight) * unit[i]).collect();
    let cmax = cost.iter().copied().fold(0.0, f64::max);
    if !(cmax > 0.0) {
        return Err(RobustError::InvalidArgument("power weight vanishes on the directions".into()));
    }

    // Blocks: p̂_n then slacks s_n, all 1×1.
    let mut lp = SdpProblem::new(vec![1; 2 * n]);
    for i in 0..n {
        lp.add_objective(i, 0, 0, cost[i] / cmax);
    }
    for i in 0..n {
        let con = lp.add_constraint(1.0);
        lp.add_coefficient(con, i, 0, 0, 1.0);
        for u in 0..n {
            if u != i && coef[(i, u)].re != 0.0 {
                lp.add_coefficient(con, u, 0, 0, -coef[(i, u)].re);
            }
        }
        lp.add_coefficient(con, n + i, 0, 0, -1.0);
    }
    let sol = sdp::solve(&lp, 1e-9).map_err(|e| RobustError::SolverFailure(e.to_string()))?;
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::PrimalInfeasible => {
            return Err(RobustError::Infeasible("SINR targets unreachable with MMSE directions".into()))
        }
        _ if sol.nearly_optimal(1e-6) => {}
        s => return Err(RobustError::SolverFailure(format!("power allocation: {s:?}, {}", sol.message))),
    }
    let p_lp: Vec<f64> = (0..n).map(|i| sol.x[i][(0, 0)].max(0.0)).collect();

    // All constraints are tight at the componentwise-minimal allocation.
    let mut a = nalgebra::DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for u in 0..n {
            if i != u {
                a[(i, u)] = -coef[(i, u)].re;
            }
        }
    }
    let snapped = a.lu().solve(&nalgebra::DVector::from_element(n, 1.0));
    let p_hat = match snapped {
        Some(p) if p.iter().all(|v| *v >= 0.0 && v.is_finite()) => {
            let close = p.iter().zip(&p_lp).all(|(s, l)| (s - l).abs() <= 1e-4 * (1.0 + s.abs()));
            if close {
                p.iter().copied().collect()
            } else {
                p_lp
            }
        }
        _ => p_lp,
    };
    Ok(p_hat.iter().zip(&unit).map(|(p, u)| p * u).collect())
}

/// MMSE directions with LP power allocation on the estimated channel.
pub fn mmse_beamform(channel: &ChannelMatrices, th: &Thresholds) -> Result<(BeamformerSet, MmseDirections), RobustError> {
    let prob = th.problem(channel);
    prob.validate()?;
    let kappa = prob.kappas();
    let weight = prob.power_matrix();
    let w = mmse_directions(&channel.h, th.noise_power)?;
    let p = allocate_power(&channel.h, &w, &kappa, &weight, th.noise_power)?;
    let alphas: Vec<f64> = p.iter().map(|v| v.sqrt()).collect();
    let vectors: Vec<CVector> = w.iter().zip(&alphas).map(|(wi, a)| wi * c64(*a, 0.0)).collect();
    let power = weighted_power(&weight, &vectors, th.bandwidth);
    Ok((
        BeamformerSet { vectors, power_upper: power, sdr_objective: power, rank1_gap: 0.0 },
        MmseDirections { w, alphas },
    ))
}

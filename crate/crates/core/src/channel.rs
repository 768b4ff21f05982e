//! Magnetic-induction circuit model.
//!
//! Coils are treated as lumped RLC loops. Coupling between loops uses the
//! magnetic-dipole approximation, optionally attenuated by the skin depth of
//! the conducting medium. From the coupling and impedance matrices we derive
//! the equivalent transmit impedance `Q` seen by the access-point coils and the
//! per-user receive rows `H_n` (load voltage per unit transmit current).
//!
//! All quantities are evaluated at the carrier frequency (narrowband model).

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{c64, condition_number, CMatrix, CVector, C64};

/// Vacuum permeability (H/m).
pub const MU_0: f64 = 4.0e-7 * PI;

const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("ill-conditioned geometry: receiver impedance condition number {0:.3e}")]
    IllConditioned(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Medium {
    pub rel_permeability: f64,
    /// Kept for configuration fidelity; the magnetoquasistatic model does not use it.
    pub rel_permittivity: f64,
    /// S/m
    pub conductivity: f64,
}

impl Default for Medium {
    /// Moist soil.
    fn default() -> Self {
        Self { rel_permeability: 1.0, rel_permittivity: 7.0, conductivity: 0.1 }
    }
}

impl Medium {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for (name, v) in [
            ("rel_permeability", self.rel_permeability),
            ("rel_permittivity", self.rel_permittivity),
            ("conductivity", self.conductivity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ChannelError::InvalidArgument(format!("medium.{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Skin depth `sqrt(2 / (ω μ σ))` in metres.
    pub fn skin_depth(&self, f: f64) -> f64 {
        (2.0 / (2.0 * PI * f * MU_0 * self.rel_permeability * self.conductivity)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoilSpec {
    /// Loop radius (m).
    pub radius: f64,
    pub turns: u32,
    /// Conductor radius (m).
    pub wire_radius: f64,
    /// Conductor resistivity (Ω·m).
    pub wire_resistivity: f64,
    /// Series load resistance (Ω); zero for transmit coils.
    pub load_resistance: f64,
    /// Series capacitor tuned so the loop resonates at the carrier.
    pub resonant: bool,
}

impl CoilSpec {
    /// Access-point coil: 0.8 m radius, 20 turns.
    pub fn access_point() -> Self {
        Self {
            radius: 0.8,
            turns: 20,
            wire_radius: 1.0e-3,
            wire_resistivity: 1.68e-8,
            load_resistance: 0.0,
            resonant: true,
        }
    }

    /// Trapped-user coil: 0.3 m radius, 12 turns.
    pub fn user() -> Self {
        Self {
            radius: 0.3,
            turns: 12,
            wire_radius: 0.5e-3,
            wire_resistivity: 1.68e-8,
            load_resistance: 10.0,
            resonant: true,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.wire_radius > 0.0 && self.radius > self.wire_radius && self.radius.is_finite()) {
            return Err(ChannelError::InvalidArgument(format!(
                "coil requires radius > wire_radius > 0 (radius {}, wire_radius {})",
                self.radius, self.wire_radius
            )));
        }
        if self.turns == 0 {
            return Err(ChannelError::InvalidArgument("coil turns must be >= 1".into()));
        }
        if !(self.load_resistance >= 0.0 && self.wire_resistivity >= 0.0) {
            return Err(ChannelError::InvalidArgument("coil resistances must be >= 0".into()));
        }
        Ok(())
    }

    /// Single-layer loop inductance `μ₀ N² a (ln(8a/r_w) − 2)`.
    pub fn self_inductance(&self) -> f64 {
        let n = self.turns as f64;
        MU_0 * n * n * self.radius * ((8.0 * self.radius / self.wire_radius).ln() - 2.0)
    }

    /// DC conductor resistance of the winding.
    pub fn wire_resistance(&self) -> f64 {
        let length = self.turns as f64 * 2.0 * PI * self.radius;
        self.wire_resistivity * length / (PI * self.wire_radius * self.wire_radius)
    }
}

/// Coil centre and unit axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub axis: Vector3<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, axis: Vector3<f64>) -> Result<Self, ChannelError> {
        if ((axis.norm() - 1.0).abs()) > 1e-12 {
            return Err(ChannelError::InvalidArgument(format!("pose axis must be unit length, |axis| = {}", axis.norm())));
        }
        Ok(Self { position, axis })
    }

    /// Normalizes `axis` instead of rejecting it.
    pub fn with_axis(position: Vector3<f64>, axis: Vector3<f64>) -> Self {
        Self { position, axis: axis.normalize() }
    }

    pub fn vertical(position: Vector3<f64>) -> Self {
        Self { position, axis: Vector3::z() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGeometry {
    pub eap_coils: Vec<(CoilSpec, Pose)>,
    pub tu_coils: Vec<(CoilSpec, Pose)>,
    pub medium: Medium,
    pub f_c: f64,
    pub bandwidth: f64,
}

impl NetworkGeometry {
    /// `k` coplanar, vertically oriented coils evenly spaced on a circle of
    /// `ring_radius` around the origin (a single coil sits at the origin).
    pub fn eap_ring(k: usize, ring_radius: f64, coil: CoilSpec) -> Vec<(CoilSpec, Pose)> {
        (0..k)
            .map(|i| {
                let pos = if k == 1 {
                    Vector3::zeros()
                } else {
                    let phi = 2.0 * PI * i as f64 / k as f64;
                    Vector3::new(ring_radius * phi.cos(), ring_radius * phi.sin(), 0.0)
                };
                (coil, Pose::vertical(pos))
            })
            .collect()
    }

    pub fn k(&self) -> usize {
        self.eap_coils.len()
    }

    pub fn n(&self) -> usize {
        self.tu_coils.len()
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let (k, n) = (self.k(), self.n());
        if n < 1 || k < n {
            return Err(ChannelError::InvalidArgument(format!("need K >= N >= 1, got K={k}, N={n}")));
        }
        if !(self.f_c > 0.0 && self.bandwidth > 0.0) {
            return Err(ChannelError::InvalidArgument("carrier and bandwidth must be > 0".into()));
        }
        self.medium.validate()?;
        let all: Vec<&(CoilSpec, Pose)> = self.eap_coils.iter().chain(self.tu_coils.iter()).collect();
        for (c, _) in &all {
            c.validate()?;
        }
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                check_separation(all[i], all[j])?;
            }
        }
        Ok(())
    }
}

fn check_separation(a: &(CoilSpec, Pose), b: &(CoilSpec, Pose)) -> Result<f64, ChannelError> {
    let d = (b.1.position - a.1.position).norm();
    if d <= a.0.radius + b.0.radius {
        return Err(ChannelError::Geometry(format!(
            "coils overlap: centre distance {d:.3} m <= sum of radii {:.3} m",
            a.0.radius + b.0.radius
        )));
    }
    Ok(d)
}

/// The estimated channel state at the carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrices {
    /// K×K access-point impedance matrix.
    pub z_a: CMatrix,
    /// N×N user impedance matrix.
    pub z_u: CMatrix,
    /// N×K mutual inductances (row = user).
    pub m: CMatrix,
    /// K×K equivalent transmit impedance.
    pub q: CMatrix,
    /// N×K receive matrix, row n is `H_n`.
    pub h: CMatrix,
    pub f_c: f64,
    /// Load resistance of each user coil.
    pub load_resistance: Vec<f64>,
}

impl ChannelMatrices {
    pub fn k(&self) -> usize {
        self.q.nrows()
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    /// Row `n` of `h` as a `K`-vector (not conjugated).
    pub fn h_row(&self, n: usize) -> CVector {
        self.h.row(n).transpose()
    }

    /// Build channel matrices directly from an `h` and `q`, e.g. for synthetic
    /// instances. The circuit fields are left empty.
    pub fn from_hq(h: CMatrix, q: CMatrix) -> Self {
        let n = h.nrows();
        Self {
            z_a: CMatrix::zeros(0, 0),
            z_u: CMatrix::zeros(0, 0),
            m: CMatrix::zeros(0, 0),
            q,
            h,
            f_c: 0.0,
            load_resistance: vec![0.0; n],
        }
    }
}

/// Series impedance of a lone coil at frequency `f`; a resonant coil is tuned to `f_tune`.
pub fn self_impedance(coil: &CoilSpec, f: f64, f_tune: f64) -> Result<C64, ChannelError> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(ChannelError::InvalidArgument(format!("frequency must be > 0, got {f}")));
    }
    coil.validate()?;
    let l = coil.self_inductance();
    let omega = 2.0 * PI * f;
    let mut reactance = omega * l;
    if coil.resonant {
        if !(f_tune > 0.0) {
            return Err(ChannelError::InvalidArgument(format!("tuning frequency must be > 0, got {f_tune}")));
        }
        let omega_t = 2.0 * PI * f_tune;
        let cap = 1.0 / (omega_t * omega_t * l);
        reactance -= 1.0 / (omega * cap);
    }
    Ok(c64(coil.wire_resistance() + coil.load_resistance, reactance))
}

/// Dipole-approximation mutual inductance between two coils.
///
/// With `attenuate` the magnitude is scaled by `exp(-d/δ)` where `δ` is the
/// skin depth of `medium` at `f`. The result is reciprocal: swapping the two
/// coils gives a bit-identical value.
pub fn mutual_inductance(
    c1: &CoilSpec,
    p1: &Pose,
    c2: &CoilSpec,
    p2: &Pose,
    medium: &Medium,
    f: f64,
    attenuate: bool,
) -> Result<C64, ChannelError> {
    let d = check_separation(&(*c1, *p1), &(*c2, *p2))?;
    let r_hat = (p2.position - p1.position) / d;
    let orientation = 3.0 * (p1.axis.dot(&r_hat) * p2.axis.dot(&r_hat)) - p1.axis.dot(&p2.axis);
    let moment1 = c1.turns as f64 * c1.radius * c1.radius;
    let moment2 = c2.turns as f64 * c2.radius * c2.radius;
    let mut value = MU_0 * medium.rel_permeability * PI * (moment1 * moment2) / (4.0 * d * d * d) * orientation;
    if attenuate {
        if !(f > 0.0) {
            return Err(ChannelError::InvalidArgument(format!("frequency must be > 0, got {f}")));
        }
        value *= (-d / medium.skin_depth(f)).exp();
    }
    Ok(c64(value, 0.0))
}

/// Assemble `Z_a`, `Z_u`, `M`, `Q` and `H` for a network.
pub fn assemble_channel(geom: &NetworkGeometry) -> Result<ChannelMatrices, ChannelError> {
    geom.validate()?;
    let (k, n) = (geom.k(), geom.n());
    let f = geom.f_c;
    let omega = 2.0 * PI * f;
    let j_omega = c64(0.0, omega);

    let mut z_a = CMatrix::zeros(k, k);
    for p in 0..k {
        let (cp, pp) = &geom.eap_coils[p];
        z_a[(p, p)] = self_impedance(cp, f, f)?;
        for q in p + 1..k {
            let (cq, pq) = &geom.eap_coils[q];
            let m = mutual_inductance(cp, pp, cq, pq, &geom.medium, f, false)?;
            z_a[(p, q)] = j_omega * m;
            z_a[(q, p)] = j_omega * m;
        }
    }

    let mut z_u = CMatrix::zeros(n, n);
    for a in 0..n {
        let (ca, pa) = &geom.tu_coils[a];
        z_u[(a, a)] = self_impedance(ca, f, f)?;
        for b in a + 1..n {
            let (cb, pb) = &geom.tu_coils[b];
            let m = mutual_inductance(ca, pa, cb, pb, &geom.medium, f, true)?;
            z_u[(a, b)] = j_omega * m;
            z_u[(b, a)] = j_omega * m;
        }
    }

    let mut m = CMatrix::zeros(n, k);
    for u in 0..n {
        let (cu, pu) = &geom.tu_coils[u];
        for a in 0..k {
            let (ca, pa) = &geom.eap_coils[a];
            m[(u, a)] = mutual_inductance(ca, pa, cu, pu, &geom.medium, f, true)?;
        }
    }

    let cond = condition_number(&z_u);
    if !(cond <= MAX_CONDITION) {
        return Err(ChannelError::IllConditioned(cond));
    }
    let z_u_inv = z_u.clone().try_inverse().ok_or(ChannelError::IllConditioned(f64::INFINITY))?;
    let zinv_m = &z_u_inv * &m;

    let q = &z_a + m.adjoint() * &zinv_m * c64(omega * omega, 0.0);
    let load_resistance: Vec<f64> = geom.tu_coils.iter().map(|(c, _)| c.load_resistance).collect();
    let mut h = CMatrix::zeros(n, k);
    for u in 0..n {
        let scale = j_omega * load_resistance[u];
        for a in 0..k {
            h[(u, a)] = scale * zinv_m[(u, a)];
        }
    }

    Ok(ChannelMatrices { z_a, z_u, m, q, h, f_c: f, load_resistance })
}

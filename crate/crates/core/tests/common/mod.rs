//! Reference computations shared by the integration tests. Nothing here calls
//! into the robust design code; the oracles are written from the problem
//! statements directly.
#![allow(dead_code)]

use mibeam::channel::ChannelMatrices;
use mibeam::linalg::{c64, realify, CMatrix, CVector};
use mibeam::sdp::{self, AffineLmi, SdpProblem, SdpStatus};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cgauss<R: Rng + ?Sized>(rng: &mut R) -> mibeam::linalg::C64 {
    c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_vector<R: Rng + ?Sized>(k: usize, rng: &mut R) -> CVector {
    CVector::from_fn(k, |_, _| cgauss(rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(k: usize, rng: &mut R) -> CMatrix {
    let a = CMatrix::from_fn(k, k, |_, _| cgauss(rng));
    (&a + a.adjoint()) * c64(0.5, 0.0)
}

/// Unit-scale synthetic channel with `Q = AAᴴ + I + jS`, `S` real symmetric,
/// so `Q` is complex symmetric like a reciprocal impedance matrix.
pub fn gaussian_channel(k: usize, n: usize, seed: u64) -> ChannelMatrices {
    let mut r = rng(seed);
    let h = CMatrix::from_fn(n, k, |_, _| cgauss(&mut r));
    let a = DMatrix::<f64>::from_fn(k, k, |_, _| r.sample(StandardNormal));
    let s = DMatrix::<f64>::from_fn(k, k, |_, _| r.sample::<f64, _>(StandardNormal));
    let re = &a * a.transpose() + DMatrix::identity(k, k);
    let im = (&s + s.transpose()) * 0.5;
    let q = CMatrix::from_fn(k, k, |i, j| c64(re[(i, j)], im[(i, j)]));
    ChannelMatrices::from_hq(h, q)
}

/// `conj(h) hᵀ`, so that `xᴴ A x = |hᵀx|²`.
pub fn gain_matrix(h: &CVector) -> CMatrix {
    h.map(|z| z.conj()) * h.transpose()
}

/// Perfect-CSI relaxation written in primal form over real `2K × 2K` blocks:
///
/// `min B Σ tr(Re Q X_n)` s.t. `tr(A_n X_n) − κ_n Σ_{u≠n} tr(A_n X_u) ≥ κ_n N₀`.
pub fn direct_sdr_power(ch: &ChannelMatrices, kappa: &[f64], n0: f64, bandwidth: f64) -> f64 {
    let (k, n) = (ch.k(), ch.n());
    let mut blocks = vec![2 * k; n];
    blocks.extend(std::iter::repeat_n(1, n));
    let mut p = SdpProblem::new(blocks);
    let herm_q = (&ch.q + ch.q.adjoint()) * c64(0.5, 0.0);
    let c = realify(&herm_q) * 0.5;
    for u in 0..n {
        p.add_objective_matrix(u, &c).unwrap();
    }
    for i in 0..n {
        let a = realify(&gain_matrix(&ch.h_row(i))) * 0.5;
        let mut terms: Vec<(usize, DMatrix<f64>)> = Vec::new();
        for u in 0..n {
            let coef = if u == i { 1.0 } else { -kappa[i] };
            terms.push((u, &a * coef));
        }
        terms.push((n + i, DMatrix::from_element(1, 1, -1.0)));
        p.push_constraint(&terms, kappa[i] * n0).unwrap();
    }
    let sol = sdp::solve(&p, 1e-10).unwrap();
    assert!(
        sol.status == SdpStatus::Optimal || sol.nearly_optimal(1e-7),
        "reference SDR did not converge: {:?} {}",
        sol.status,
        sol.message
    );
    bandwidth * sol.objective_value
}

/// Closed form for one coil and one user:
/// `B (Re q + ξ_q) κ N₀ / (|h| − ξ_h)²`.
pub fn scalar_robust_power(h: f64, q_re: f64, xi_h: f64, xi_q: f64, kappa: f64, n0: f64, bandwidth: f64) -> f64 {
    bandwidth * (q_re + xi_q) * kappa * n0 / (h - xi_h).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiClass {
    Feasible,
    /// `λ_min(Γ(a)) < −margin` at every grid point.
    InfeasibleWithMargin,
    Borderline,
}

/// Γ_n written out from its definition for rank-one `X_u = v_u v_uᴴ`:
/// `[[D + aI, D h̄ᴴ], [h̄ D, h̄ D h̄ᴴ − κN₀ − aξ²]]`, `D = X_n − κ Σ_{u≠n} X_u`.
pub fn gamma_affine(vectors: &[CVector], n: usize, kappa: f64, h: &CVector, xi: f64, n0: f64) -> AffineLmi {
    let k = h.len();
    let mut d = &vectors[n] * vectors[n].adjoint();
    for (u, v) in vectors.iter().enumerate() {
        if u != n {
            d -= v * v.adjoint() * c64(kappa, 0.0);
        }
    }
    let hc = h.map(|z| z.conj());
    let dh = &d * &hc;
    let corner = (h.transpose() * &dh)[(0, 0)].re - kappa * n0;
    let mut base = CMatrix::zeros(k + 1, k + 1);
    base.view_mut((0, 0), (k, k)).copy_from(&d);
    for i in 0..k {
        base[(i, k)] = dh[i];
        base[(k, i)] = dh[i].conj();
    }
    base[(k, k)] = c64(corner, 0.0);
    let mut slope = CMatrix::identity(k + 1, k + 1);
    slope[(k, k)] = c64(-xi * xi, 0.0);
    AffineLmi { base, slope }
}

pub fn classify_lmi(lmi: &AffineLmi, a_max: f64, margin: f64) -> LmiClass {
    if sdp::min_eig_feasibility(lmi, (0.0, a_max), 1e-9).is_some() {
        return LmiClass::Feasible;
    }
    let grid = 400;
    let worst = (0..=grid).map(|i| lmi.min_eig(a_max * i as f64 / grid as f64)).fold(f64::NEG_INFINITY, f64::max);
    if worst < -margin {
        LmiClass::InfeasibleWithMargin
    } else {
        LmiClass::Borderline
    }
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// An SDP with a known optimal primal-dual pair, built from complementary
/// slackness: `X* = U₁ Λ U₁ᵀ`, `Z* = U₂ M U₂ᵀ`, `C = Σ yᵢ Aᵢ + Z*`,
/// `bᵢ = tr(Aᵢ X*)`. Returns the problem and `tr(C X*)`.
pub fn planted_sdp<R: Rng + ?Sized>(sizes: &[usize], m: usize, rng: &mut R) -> (SdpProblem, f64) {
    let mut p = SdpProblem::new(sizes.to_vec());
    let sym = |d: usize, rng: &mut R| {
        let a = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        (&a + a.transpose()) * 0.5
    };
    let mut x_star = Vec::new();
    let mut z_star = Vec::new();
    for &d in sizes {
        let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        let u = g.qr().q();
        let r = if d == 1 { rng.random_range(0..=1) } else { rng.random_range(1..d) };
        let mut lx = DVector::zeros(d);
        let mut lz = DVector::zeros(d);
        for i in 0..d {
            if i < r {
                lx[i] = 0.5 + rng.random::<f64>();
            } else {
                lz[i] = 0.5 + rng.random::<f64>();
            }
        }
        x_star.push(&u * DMatrix::from_diagonal(&lx) * u.transpose());
        z_star.push(&u * DMatrix::from_diagonal(&lz) * u.transpose());
    }
    let y: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let mut c: Vec<DMatrix<f64>> = z_star.clone();
    // The first constraint is a trace constraint so the feasible set is bounded.
    for (i, &yi) in y.iter().enumerate() {
        let terms: Vec<(usize, DMatrix<f64>)> = sizes
            .iter()
            .enumerate()
            .map(|(b, &d)| (b, if i == 0 { DMatrix::identity(d, d) } else { sym(d, rng) }))
            .collect();
        let rhs: f64 = terms.iter().map(|(b, a)| (a.component_mul(&x_star[*b])).sum()).sum();
        for (b, a) in &terms {
            c[*b] += a * yi;
        }
        p.push_constraint(&terms, rhs).unwrap();
    }
    let mut opt = 0.0;
    for (b, cb) in c.iter().enumerate() {
        p.add_objective_matrix(b, cb).unwrap();
        opt += cb.component_mul(&x_star[b]).sum();
    }
    (p, opt)
}

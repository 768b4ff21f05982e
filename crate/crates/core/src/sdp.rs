//! Dense small-scale semidefinite programming.
//!
//! Problems are posed in the standard primal form over a block-diagonal
//! variable
//!
//! ```text
//! minimize    Σ_b tr(C_b X_b)
//! subject to  Σ_b tr(A_ib X_b) = b_i,   i = 1..m
//!             X_b ⪰ 0
//! ```
//!
//! with the dual
//!
//! ```text
//! maximize    bᵀy
//! subject to  Z_b = C_b − Σ_i y_i A_ib ⪰ 0.
//! ```
//!
//! The solver is an infeasible-start primal-dual path-following method with
//! Nesterov–Todd scaling and a Mehrotra predictor-corrector. Infeasibility is
//! reported when the iterates approach a Farkas ray of either problem.
//!
//! Complex Hermitian cone constraints are handled by the caller through
//! [`embed_hermitian`]: a Hermitian matrix is PSD exactly when its real
//! embedding is.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::linalg::{hermitian_defect, min_eigenvalue, realify, CMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// One upper-triangular entry of a symmetric coefficient matrix. Off-diagonal
/// entries stand for both `(row, col)` and `(col, row)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Constraint {
    pub entries: Vec<SymEntry>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    blocks: Vec<usize>,
    objective: Vec<SymEntry>,
    constraints: Vec<Constraint>,
}

fn upper(i: usize, j: usize) -> (usize, usize) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

impl SdpProblem {
    /// A problem over PSD blocks of the given dimensions. Nonnegative scalars
    /// are 1×1 blocks.
    pub fn new(blocks: Vec<usize>) -> Self {
        Self { blocks, objective: Vec::new(), constraints: Vec::new() }
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Adds `value` to the symmetric pair `(i, j)`, `(j, i)` of `C_block`.
    pub fn add_objective(&mut self, block: usize, i: usize, j: usize, value: f64) {
        let (row, col) = upper(i, j);
        self.objective.push(SymEntry { block, row, col, value });
    }

    /// Starts a new equality constraint and returns its index.
    pub fn add_constraint(&mut self, rhs: f64) -> usize {
        self.constraints.push(Constraint { entries: Vec::new(), rhs });
        self.constraints.len() - 1
    }

    /// Adds `value` to the symmetric pair `(i, j)`, `(j, i)` of `A_{con,block}`.
    pub fn add_coefficient(&mut self, con: usize, block: usize, i: usize, j: usize, value: f64) {
        let (row, col) = upper(i, j);
        self.constraints[con].entries.push(SymEntry { block, row, col, value });
    }

    pub fn add_objective_matrix(&mut self, block: usize, c: &DMatrix<f64>) -> Result<(), SdpError> {
        check_symmetric(c)?;
        for j in 0..c.ncols() {
            for i in 0..=j {
                if c[(i, j)] != 0.0 {
                    self.add_objective(block, i, j, c[(i, j)]);
                }
            }
        }
        Ok(())
    }

    /// Adds `Σ tr(A_b X_b) = rhs` from dense symmetric coefficient matrices.
    pub fn push_constraint(&mut self, terms: &[(usize, DMatrix<f64>)], rhs: f64) -> Result<usize, SdpError> {
        for (_, a) in terms {
            check_symmetric(a)?;
        }
        let con = self.add_constraint(rhs);
        for (block, a) in terms {
            for j in 0..a.ncols() {
                for i in 0..=j {
                    if a[(i, j)] != 0.0 {
                        self.add_coefficient(con, *block, i, j, a[(i, j)]);
                    }
                }
            }
        }
        Ok(con)
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.blocks.is_empty() || self.blocks.iter().any(|&n| n == 0) {
            return Err(SdpError::InvalidArgument("blocks must be non-empty with positive sizes".into()));
        }
        let check = |e: &SymEntry| -> Result<(), SdpError> {
            let n = *self.blocks.get(e.block).ok_or_else(|| {
                SdpError::InvalidArgument(format!("entry references block {} of {}", e.block, self.blocks.len()))
            })?;
            if e.col >= n {
                return Err(SdpError::InvalidArgument(format!(
                    "entry ({}, {}) outside block {} of size {n}",
                    e.row, e.col, e.block
                )));
            }
            if !e.value.is_finite() {
                return Err(SdpError::InvalidArgument("non-finite coefficient".into()));
            }
            Ok(())
        };
        for e in &self.objective {
            check(e)?;
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.entries.is_empty() {
                return Err(SdpError::InvalidArgument(format!("constraint {k} has no coefficients")));
            }
            if !c.rhs.is_finite() {
                return Err(SdpError::InvalidArgument(format!("constraint {k} has non-finite rhs")));
            }
            for e in &c.entries {
                check(e)?;
            }
        }
        Ok(())
    }

    /// Multiplies every objective coefficient by `s`.
    pub fn scale_objective(&mut self, s: f64) {
        for e in &mut self.objective {
            e.value *= s;
        }
    }
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<(), SdpError> {
    if a.nrows() != a.ncols() {
        return Err(SdpError::InvalidArgument("coefficient matrix must be square".into()));
    }
    let scale = 1.0 + a.amax();
    for i in 0..a.nrows() {
        for j in i + 1..a.ncols() {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(SdpError::InvalidArgument("coefficient matrix must be symmetric".into()));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpSettings {
    /// Target for relative primal/dual residuals and relative duality gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Threshold on the normalized Farkas-ray residual.
    pub infeasibility_tol: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 200, step_fraction: 0.98, infeasibility_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// No `X` satisfies the equalities (dual improving ray found).
    PrimalInfeasible,
    /// No `y` makes `C − Σ y_i A_i` PSD (primal improving ray found).
    DualInfeasible,
    NumericalFailure,
}

impl SdpStatus {
    pub fn is_infeasible(self) -> bool {
        matches!(self, SdpStatus::PrimalInfeasible | SdpStatus::DualInfeasible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
    pub z: Vec<DMatrix<f64>>,
    /// Primal objective `Σ tr(C_b X_b)`.
    pub objective_value: f64,
    pub dual_objective: f64,
    /// `|primal − dual|`.
    pub duality_gap: f64,
    /// `‖b − A(X)‖ / (1 + ‖b‖)`.
    pub primal_residual: f64,
    /// `‖C − Z − A*(y)‖_F / (1 + ‖C‖_F)`.
    pub dual_residual: f64,
    pub iterations: usize,
    pub history: Vec<IterationLog>,
    pub message: String,
}

impl SdpSolution {
    /// Residuals and gap below `tol` even if the solver stopped for another reason.
    pub fn nearly_optimal(&self, tol: f64) -> bool {
        self.status == SdpStatus::Optimal
            || (self.status == SdpStatus::NumericalFailure
                && self.primal_residual <= tol
                && self.dual_residual <= tol
                && self.duality_gap <= tol * (1.0 + self.objective_value.abs()))
    }
}

/// Compiled, merged problem data.
struct Data {
    sizes: Vec<usize>,
    c: Vec<DMatrix<f64>>,
    /// Per block: constraints touching it with their merged upper entries.
    a: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    b: DVector<f64>,
    n_total: usize,
}

impl Data {
    fn compile(p: &SdpProblem) -> Self {
        let sizes = p.blocks.clone();
        let mut c: Vec<DMatrix<f64>> = sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for e in &p.objective {
            c[e.block][(e.row, e.col)] += e.value;
            if e.row != e.col {
                c[e.block][(e.col, e.row)] += e.value;
            }
        }
        let mut a: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); sizes.len()];
        for (k, con) in p.constraints.iter().enumerate() {
            let mut per_block: std::collections::BTreeMap<(usize, usize, usize), f64> = Default::default();
            for e in &con.entries {
                *per_block.entry((e.block, e.row, e.col)).or_insert(0.0) += e.value;
            }
            let mut current: Option<(usize, Vec<(usize, usize, f64)>)> = None;
            for ((blk, i, j), v) in per_block {
                if v == 0.0 {
                    continue;
                }
                match &mut current {
                    Some((cb, list)) if *cb == blk => list.push((i, j, v)),
                    _ => {
                        if let Some((cb, list)) = current.take() {
                            a[cb].push((k, list));
                        }
                        current = Some((blk, vec![(i, j, v)]));
                    }
                }
            }
            if let Some((cb, list)) = current {
                a[cb].push((k, list));
            }
        }
        let b = DVector::from_iterator(p.constraints.len(), p.constraints.iter().map(|c| c.rhs));
        let n_total = sizes.iter().sum();
        Self { sizes, c, a, b, n_total }
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    fn apply_a(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for (blk, cons) in self.a.iter().enumerate() {
            for (k, entries) in cons {
                out[*k] += sparse_inner(entries, &x[blk]);
            }
        }
        out
    }

    fn apply_at(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (blk, cons) in self.a.iter().enumerate() {
            for (k, entries) in cons {
                let yk = y[*k];
                if yk == 0.0 {
                    continue;
                }
                for &(i, j, v) in entries {
                    out[blk][(i, j)] += yk * v;
                    if i != j {
                        out[blk][(j, i)] += yk * v;
                    }
                }
            }
        }
        out
    }

    fn a_norms(&self) -> Vec<Vec<f64>> {
        // ‖A_kb‖_F per (block, constraint-in-block)
        self.a
            .iter()
            .map(|cons| {
                cons.iter()
                    .map(|(_, e)| {
                        e.iter()
                            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect()
            })
            .collect()
    }
}

/// `<A, X>` for a sparse symmetric `A` and symmetric `X`.
fn sparse_inner(entries: &[(usize, usize, f64)], x: &DMatrix<f64>) -> f64 {
    entries
        .iter()
        .map(|&(i, j, v)| if i == j { v * x[(i, i)] } else { v * (x[(i, j)] + x[(j, i)]) })
        .sum()
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn fro(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Symmetric square-root factor `X = L Lᵀ` with its inverse, from an
/// eigendecomposition. Fails if `X` is not numerically positive definite.
fn psd_factor(x: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(x.clone());
    let vals = &eig.eigenvalues;
    let max = vals.iter().copied().fold(0.0, f64::max);
    if vals.iter().any(|&l| !(l > 1e-300 && l > 1e-17 * max)) {
        return None;
    }
    let v = &eig.eigenvectors;
    let l = v * DMatrix::from_diagonal(&vals.map(f64::sqrt));
    let l_inv = DMatrix::from_diagonal(&vals.map(|l| 1.0 / l.sqrt())) * v.transpose();
    Some((l, l_inv))
}

/// NT scaling for one block: `X = G D Gᵀ`, `Z = G⁻ᵀ D G⁻¹`, `W = G Gᵀ`.
struct Scaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    d: DVector<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let (lx, lx_inv) = psd_factor(x)?;
    let (lz, _) = psd_factor(z)?;
    let prod = lz.transpose() * &lx;
    let svd = prod.svd(false, true);
    let v = svd.v_t?.transpose();
    let d = svd.singular_values;
    if d.iter().any(|&s| !(s > 0.0)) {
        return None;
    }
    let inv_sqrt = DMatrix::from_diagonal(&d.map(|s| 1.0 / s.sqrt()));
    let sqrt = DMatrix::from_diagonal(&d.map(|s| s.sqrt()));
    let g = &lx * &v * inv_sqrt;
    let g_inv = sqrt * v.transpose() * lx_inv;
    let w = sym(&g * g.transpose());
    Some(Scaling { g, g_inv, w, d })
}

/// Largest step `α` (possibly infinite) keeping `X + α dX ⪰ 0`.
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    if x.nrows() == 1 {
        return if dx[(0, 0)] < 0.0 { -x[(0, 0)] / dx[(0, 0)] } else { f64::INFINITY };
    }
    let Some((_, l_inv)) = psd_factor(x) else {
        return 0.0;
    };
    let m = &l_inv * dx * l_inv.transpose();
    let lam = SymmetricEigen::new(sym(m)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if lam < 0.0 {
        -1.0 / lam
    } else {
        f64::INFINITY
    }
}

/// Solve with the default settings and tolerance `tol`.
pub fn solve(problem: &SdpProblem, tol: f64) -> Result<SdpSolution, SdpError> {
    solve_with(problem, &SdpSettings { tol, ..SdpSettings::default() })
}

pub fn solve_with(problem: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    let data = Data::compile(problem);
    let m = data.m();
    let nb = data.sizes.len();
    let n_total = data.n_total as f64;

    let b_norm = data.b.norm();
    let c_norm = fro(&data.c);
    let a_norms = data.a_norms();

    // Infeasible starting point scaled to the data.
    let mut x: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
    let mut z: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
    for blk in 0..nb {
        let n = data.sizes[blk] as f64;
        let mut xi = 10.0_f64.max(n.sqrt());
        let mut eta = 10.0_f64.max(n.sqrt()).max(data.c[blk].norm());
        for ((k, _), an) in data.a[blk].iter().zip(&a_norms[blk]) {
            xi = xi.max(n * (1.0 + data.b[*k].abs()) / (1.0 + an));
            eta = eta.max(*an);
        }
        x.push(DMatrix::identity(data.sizes[blk], data.sizes[blk]) * xi);
        z.push(DMatrix::identity(data.sizes[blk], data.sizes[blk]) * eta);
    }
    let mut y = DVector::zeros(m);

    let mut history = Vec::new();
    let mut stalled = 0usize;
    // Best iterate by max(primal residual, dual residual, relative gap); the
    // Newton systems lose accuracy near the optimum of badly scaled problems.
    let mut best: Option<(f64, Vec<DMatrix<f64>>, DVector<f64>, Vec<DMatrix<f64>>)> = None;
    let mut status = SdpStatus::NumericalFailure;
    let mut message = String::from("iteration limit reached");
    let mut iterations = 0;

    let residuals = |x: &[DMatrix<f64>], y: &DVector<f64>, z: &[DMatrix<f64>]| {
        let rp = &data.b - data.apply_a(x);
        let aty = data.apply_at(y);
        let rd: Vec<DMatrix<f64>> = (0..nb).map(|b| &data.c[b] - &z[b] - &aty[b]).collect();
        (rp, rd)
    };

    for iter in 0..settings.max_iter {
        iterations = iter;
        let (rp, rd) = residuals(&x, &y, &z);
        let pobj = inner(&data.c, &x);
        let dobj = data.b.dot(&y);
        let mu = inner(&x, &z) / n_total;
        let pinf = rp.norm() / (1.0 + b_norm);
        let pinf_max = rp.iter().zip(data.b.iter()).map(|(r, b)| r.abs() / (1.0 + b.abs())).fold(0.0, f64::max);
        let dinf = fro(&rd) / (1.0 + c_norm);
        let gap = (pobj - dobj).abs();
        history.push(IterationLog { primal_objective: pobj, dual_objective: dobj, primal_residual: pinf, dual_residual: dinf, mu });
        let score = pinf.max(dinf).max(gap / (1.0 + pobj.abs() + dobj.abs()));
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, x.clone(), y.clone(), z.clone()));
        }

        if pinf <= settings.tol
            && pinf_max <= settings.tol
            && dinf <= settings.tol
            && gap <= settings.tol * (1.0 + pobj.abs() + dobj.abs())
        {
            status = SdpStatus::Optimal;
            message = "converged".into();
            break;
        }

        if iter >= 3 {
            // Dual ray: A*(y) + Z ≈ 0 with bᵀy > 0 certifies an empty primal.
            if dobj > 0.0 {
                let ray: Vec<DMatrix<f64>> = (0..nb).map(|b| &data.c[b] - &rd[b]).collect();
                if fro(&ray) / dobj < settings.infeasibility_tol {
                    status = SdpStatus::PrimalInfeasible;
                    message = format!("dual improving ray, bᵀy = {dobj:.3e}");
                    break;
                }
            }
            // Primal ray: A(X) ≈ 0 with tr(CX) < 0 certifies an infeasible LMI.
            if pobj < 0.0 {
                let ax = &data.b - &rp;
                if ax.norm() / (-pobj) < settings.infeasibility_tol {
                    status = SdpStatus::DualInfeasible;
                    message = format!("primal improving ray, tr(CX) = {pobj:.3e}");
                    break;
                }
            }
        }

        let mut scalings = Vec::with_capacity(nb);
        for blk in 0..nb {
            match nt_scaling(&x[blk], &z[blk]) {
                Some(s) => scalings.push(s),
                None => {
                    message = format!("lost positive definiteness in block {blk}");
                    break;
                }
            }
        }
        if scalings.len() < nb {
            break;
        }

        // Schur complement M_ij = <A_i, W A_j W>.
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for (blk, cons) in data.a.iter().enumerate() {
            let w = &scalings[blk].w;
            let n = data.sizes[blk];
            for (kj, ej) in cons {
                let mut waw = DMatrix::<f64>::zeros(n, n);
                for &(i, j, v) in ej {
                    let wi = w.column(i);
                    let wj = w.column(j);
                    if i == j {
                        waw.ger(v, &wi, &wi, 1.0);
                    } else {
                        waw.ger(v, &wi, &wj, 1.0);
                        waw.ger(v, &wj, &wi, 1.0);
                    }
                }
                for (ki, ei) in cons {
                    if ki <= kj {
                        let val = sparse_inner(ei, &waw);
                        schur[(*ki, *kj)] += val;
                    }
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                schur[(i, j)] = schur[(j, i)];
            }
        }
        let diag_max = (0..m).map(|i| schur[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let solver = match Cholesky::new(schur.clone()) {
            Some(ch) => SchurSolver::Chol(ch),
            None => {
                let mut reg = schur.clone();
                for i in 0..m {
                    reg[(i, i)] += 1e-13 * diag_max;
                }
                match Cholesky::new(reg.clone()) {
                    Some(ch) => SchurSolver::Chol(ch),
                    None => SchurSolver::Lu(reg.lu()),
                }
            }
        };

        let solve_dir = |rc: &[DMatrix<f64>]| -> Option<(Vec<DMatrix<f64>>, DVector<f64>, Vec<DMatrix<f64>>)> {
            let tmp: Vec<DMatrix<f64>> =
                (0..nb).map(|b| &rc[b] - &scalings[b].w * &rd[b] * &scalings[b].w).collect();
            let rhs = &rp - data.apply_a(&tmp);
            let dy = solver.solve(&rhs)?;
            let aty = data.apply_at(&dy);
            let dz: Vec<DMatrix<f64>> = (0..nb).map(|b| &rd[b] - &aty[b]).collect();
            let dx: Vec<DMatrix<f64>> =
                (0..nb).map(|b| sym(&rc[b] - &scalings[b].w * &dz[b] * &scalings[b].w)).collect();
            Some((dx, dy, dz))
        };

        let steps = |dx: &[DMatrix<f64>], dz: &[DMatrix<f64>]| -> (f64, f64) {
            let ap = (0..nb).map(|b| max_step(&x[b], &dx[b])).fold(f64::INFINITY, f64::min);
            let ad = (0..nb).map(|b| max_step(&z[b], &dz[b])).fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        // Predictor.
        let rc_aff: Vec<DMatrix<f64>> = x.iter().map(|xb| -xb).collect();
        let Some((dx_a, _dy_a, dz_a)) = solve_dir(&rc_aff) else {
            message = "singular Schur complement".into();
            break;
        };
        let (ap, ad) = steps(&dx_a, &dz_a);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff = (0..nb)
            .map(|b| (&x[b] + &dx_a[b] * ap).dot(&(&z[b] + &dz_a[b] * ad)))
            .sum::<f64>()
            / n_total;
        let expon = 1.0_f64.max(3.0 * ap.min(ad).powi(2));
        let sigma = if mu > 0.0 { (mu_aff / mu).max(0.0).powf(expon).min(1.0) } else { 0.0 };

        // Corrector.
        let mut rc = Vec::with_capacity(nb);
        for b in 0..nb {
            let s = &scalings[b];
            let dxt = &s.g_inv * &dx_a[b] * s.g_inv.transpose();
            let dzt = s.g.transpose() * &dz_a[b] * &s.g;
            let second = sym(dxt * dzt);
            let n = data.sizes[b];
            let mut t = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut r = -second[(i, j)];
                    if i == j {
                        r += sigma * mu - s.d[i] * s.d[i];
                    }
                    t[(i, j)] = 2.0 * r / (s.d[i] + s.d[j]);
                }
            }
            rc.push(&s.g * t * s.g.transpose());
        }
        let Some((dx, dy, dz)) = solve_dir(&rc) else {
            message = "singular Schur complement".into();
            break;
        };
        let (ap, ad) = steps(&dx, &dz);
        let ap = (settings.step_fraction * ap).min(1.0);
        let ad = (settings.step_fraction * ad).min(1.0);
        if !(ap.is_finite() && ad.is_finite()) || dx.iter().chain(dz.iter()).any(|m| m.iter().any(|v| !v.is_finite())) {
            message = "non-finite search direction".into();
            break;
        }
        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
            if stalled > 3 {
                message = "step length collapsed".into();
                break;
            }
        } else {
            stalled = 0;
        }
        for b in 0..nb {
            x[b] += &dx[b] * ap;
            z[b] += &dz[b] * ad;
            x[b] = sym(std::mem::take(&mut x[b]));
            z[b] = sym(std::mem::take(&mut z[b]));
        }
        y += dy * ad;
    }

    if status == SdpStatus::NumericalFailure {
        if let Some((_, bx, by, bz)) = best {
            x = bx;
            y = by;
            z = bz;
        }
    }
    let (rp, rd) = residuals(&x, &y, &z);
    let pobj = inner(&data.c, &x);
    let dobj = data.b.dot(&y);
    Ok(SdpSolution {
        status,
        x,
        y,
        z,
        objective_value: pobj,
        dual_objective: dobj,
        duality_gap: (pobj - dobj).abs(),
        primal_residual: rp.norm() / (1.0 + b_norm),
        dual_residual: fro(&rd) / (1.0 + c_norm),
        iterations,
        history,
        message,
    })
}

enum SchurSolver {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurSolver {
    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let sol = match self {
            SchurSolver::Chol(c) => Some(c.solve(rhs)),
            SchurSolver::Lu(lu) => lu.solve(rhs),
        }?;
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    }
}

/// Real symmetric embedding `[[Re H, −Im H], [Im H, Re H]]` of a Hermitian matrix.
///
/// The embedding doubles every eigenvalue's multiplicity and satisfies
/// `tr(embed(A) embed(B)) = 2 Re tr(AB)`.
pub fn embed_hermitian(h: &CMatrix) -> Result<DMatrix<f64>, SdpError> {
    if h.nrows() != h.ncols() {
        return Err(SdpError::InvalidArgument("matrix must be square".into()));
    }
    if hermitian_defect(h) > 1e-12 {
        return Err(SdpError::InvalidArgument("matrix must be Hermitian".into()));
    }
    Ok(realify(h))
}

/// A Hermitian matrix pencil `base + a·slope` in one scalar `a`.
#[derive(Debug, Clone)]
pub struct AffineLmi {
    pub base: CMatrix,
    pub slope: CMatrix,
}

impl AffineLmi {
    pub fn at(&self, a: f64) -> CMatrix {
        &self.base + &self.slope * crate::linalg::c64(a, 0.0)
    }

    pub fn min_eig(&self, a: f64) -> f64 {
        min_eigenvalue(&self.at(a))
    }
}

/// Finds the smallest `a` in `range` (up to bisection accuracy) with
/// `λ_min(base + a·slope) ≥ −tol`, or `None` when no such `a` exists.
///
/// `λ_min` of an affine pencil is concave in `a`, so its superlevel sets are
/// intervals: a golden-section search locates a feasible point and bisection
/// then walks back to the left edge.
pub fn min_eig_feasibility(lmi: &AffineLmi, range: (f64, f64), tol: f64) -> Option<f64> {
    let (lo, hi) = range;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    let phi = |a: f64| lmi.min_eig(a);
    if phi(lo) >= -tol {
        return Some(lo);
    }
    let mut feasible = None;
    if phi(hi) >= -tol {
        feasible = Some(hi);
    } else {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let (mut fc, mut fd) = (phi(c), phi(d));
        for _ in 0..200 {
            if fc >= -tol {
                feasible = Some(c);
                break;
            }
            if fd >= -tol {
                feasible = Some(d);
                break;
            }
            if b - a <= 1e-14 * (1.0 + a.abs() + b.abs()) {
                break;
            }
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = phi(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = phi(d);
            }
        }
    }
    let feasible = feasible?;
    let (mut left, mut right) = (lo, feasible);
    for _ in 0..200 {
        if right - left <= 1e-14 * (1.0 + left.abs() + right.abs()) {
            break;
        }
        let mid = 0.5 * (left + right);
        if phi(mid) >= -tol {
            right = mid;
        } else {
            left = mid;
        }
    }
    Some(right)
}

//! Link metrics evaluated for a set of beamforming vectors.

use crate::linalg::{gain, quad_form, CMatrix, CVector};

/// SINR of user `n` for channel row `h_row`:
/// `|h v_n|² / (Σ_{u≠n} |h v_u|² + N₀)`.
pub fn sinr_user(h_row: &CVector, vectors: &[CVector], n: usize, n0: f64) -> f64 {
    let signal = gain(h_row, &vectors[n]);
    let interference: f64 = vectors.iter().enumerate().filter(|(u, _)| *u != n).map(|(_, v)| gain(h_row, v)).sum();
    signal / (interference + n0)
}

/// Per-user SINR for the stacked channel `h` (row `n` belongs to user `n`).
pub fn sinr(h: &CMatrix, vectors: &[CVector], n0: f64) -> Vec<f64> {
    (0..h.nrows())
        .map(|n| {
            let row = h.row(n).transpose();
            sinr_user(&row, vectors, n, n0)
        })
        .collect()
}

/// `Σ B log₂(1 + γ_n)` in bit/s.
pub fn sum_rate(sinrs: &[f64], bandwidth: f64) -> f64 {
    sinrs.iter().map(|g| bandwidth * (1.0 + g).log2()).sum()
}

/// Transmit power `(B/2) Σ v^H (Q + Q^H) v`.
pub fn transmit_power(q: &CMatrix, vectors: &[CVector], bandwidth: f64) -> f64 {
    bandwidth * vectors.iter().map(|v| quad_form(v, q)).sum::<f64>()
}

/// `B Σ v^H P v` for a Hermitian weight `P`.
pub fn weighted_power(p: &CMatrix, vectors: &[CVector], bandwidth: f64) -> f64 {
    bandwidth * vectors.iter().map(|v| quad_form(v, p)).sum::<f64>()
}

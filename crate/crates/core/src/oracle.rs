//! Sampled worst-case SINR search over a Frobenius error ball.
//!
//! This is a diagnostic independent of the S-lemma reformulation: it
//! minimizes `γ_n(h̄ + Δ)` over `‖Δ‖ ≤ ξ` by projected gradient descent from
//! many random starts. It can only over-estimate the true worst case.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c64, C64, CVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub restarts: usize,
    pub iterations: usize,
    /// Initial step as a fraction of `ξ`.
    pub step: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { restarts: 200, iterations: 500, step: 1e-2 }
    }
}

#[derive(Debug, Clone)]
pub struct WorstCase {
    pub sinr: f64,
    pub delta: CVector,
}

fn dot(h: &CVector, v: &CVector) -> C64 {
    h.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// SINR of user `n` and its gradient with respect to the channel row, in the
/// real-coordinate sense (`∂/∂Re + j∂/∂Im`).
fn sinr_and_grad(h: &CVector, vectors: &[CVector], n: usize, n0: f64) -> (f64, CVector) {
    let k = h.len();
    let mut grad_i = CVector::zeros(k);
    let mut interference = n0;
    for (u, v) in vectors.iter().enumerate() {
        if u == n {
            continue;
        }
        let s = dot(h, v);
        interference += s.norm_sqr();
        grad_i += v.map(|z| z.conj()) * (s * 2.0);
    }
    let s = dot(h, &vectors[n]);
    let signal = s.norm_sqr();
    let grad_s = vectors[n].map(|z| z.conj()) * (s * 2.0);
    let gamma = signal / interference;
    let grad = (grad_s * c64(interference, 0.0) - grad_i * c64(signal, 0.0)) / c64(interference * interference, 0.0);
    (gamma, grad)
}

fn project(delta: &mut CVector, xi: f64) {
    let norm = delta.norm();
    if norm > xi {
        *delta *= c64(xi / norm, 0.0);
    }
}

fn random_in_ball<R: Rng + ?Sized>(k: usize, xi: f64, rng: &mut R) -> CVector {
    let mut d = CVector::from_fn(k, |_, _| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let r: f64 = rng.random::<f64>().powf(1.0 / (2 * k) as f64);
    let norm = d.norm();
    d *= c64(xi * r / norm, 0.0);
    d
}

/// Approximately minimizes user `n`'s SINR over `‖Δ‖ ≤ ξ`.
///
/// Channel and noise are rescaled internally so that `‖h̄‖ = 1`; SINR is
/// invariant under that rescaling.
pub fn worst_case_sinr<R: Rng + ?Sized>(
    h_bar: &CVector,
    xi: f64,
    vectors: &[CVector],
    n: usize,
    n0: f64,
    opts: &OracleOptions,
    rng: &mut R,
) -> WorstCase {
    let k = h_bar.len();
    let s = h_bar.norm();
    if !(s > 0.0) {
        return WorstCase { sinr: crate::metrics::sinr_user(h_bar, vectors, n, n0), delta: CVector::zeros(k) };
    }
    let h = h_bar / c64(s, 0.0);
    let xi_n = xi / s;
    let n0_n = n0 / (s * s);
    let eval = |d: &CVector| sinr_and_grad(&(&h + d), vectors, n, n0_n);

    let mut best = WorstCase { sinr: eval(&CVector::zeros(k)).0, delta: CVector::zeros(k) };
    if xi_n == 0.0 {
        return best;
    }

    // Deterministic starts: shrink the signal or boost the strongest interferer.
    let mut starts: Vec<CVector> = Vec::new();
    let push_against = |starts: &mut Vec<CVector>, v: &CVector, sign: f64| {
        let c = v.map(|z| z.conj());
        let nrm = c.norm();
        if nrm > 0.0 {
            let phase = dot(&h, v);
            let ph = if phase.norm() > 0.0 { phase / phase.norm() } else { c64(1.0, 0.0) };
            starts.push(c * (ph * (sign * xi_n / nrm)));
        }
    };
    push_against(&mut starts, &vectors[n], -1.0);
    for (u, v) in vectors.iter().enumerate() {
        if u != n {
            push_against(&mut starts, v, 1.0);
        }
    }

    for r in 0..opts.restarts.max(starts.len()) {
        let mut d = if r < starts.len() { starts[r].clone() } else { random_in_ball(k, xi_n, rng) };
        let (mut g, mut grad) = eval(&d);
        let mut step = opts.step;
        for _ in 0..opts.iterations {
            let gn = grad.norm();
            if !(gn > 0.0) {
                break;
            }
            let mut trial = &d - &grad * c64(step * xi_n / gn, 0.0);
            project(&mut trial, xi_n);
            let (gt, gradt) = eval(&trial);
            if gt < g {
                d = trial;
                g = gt;
                grad = gradt;
                step = (step * 1.5).min(1.0);
            } else {
                step *= 0.5;
                if step < 1e-10 {
                    break;
                }
            }
        }
        if g < best.sinr {
            best = WorstCase { sinr: g, delta: &d * c64(s, 0.0) };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_user_closed_form() {
        // One user: min |(h + Δ)v|² over ‖Δ‖ ≤ ξ is (|hv| − ξ‖v‖)² when positive.
        let h = CVector::from_vec(vec![c64(1.0, 0.0), c64(0.5, 0.5)]);
        let v = vec![CVector::from_vec(vec![c64(0.3, -0.2), c64(1.0, 0.1)])];
        let xi = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let opts = OracleOptions { restarts: 20, iterations: 300, step: 1e-2 };
        let wc = worst_case_sinr(&h, xi, &v, 0, 1.0, &opts, &mut rng);
        let expect = (dot(&h, &v[0]).norm() - xi * v[0].norm()).powi(2);
        assert!((wc.sinr - expect).abs() < 1e-8 * (1.0 + expect), "{} vs {expect}", wc.sinr);
        assert!(wc.delta.norm() <= xi * (1.0 + 1e-12));
    }

    #[test]
    fn zero_radius_returns_nominal() {
        let h = CVector::from_vec(vec![c64(1.0, 0.0), c64(0.0, 1.0)]);
        let v = vec![CVector::from_vec(vec![c64(1.0, 0.0), c64(0.0, 0.0)])];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let wc = worst_case_sinr(&h, 0.0, &v, 0, 0.5, &OracleOptions::default(), &mut rng);
        assert!((wc.sinr - 2.0).abs() < 1e-14);
    }
}

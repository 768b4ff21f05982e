//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs the full default sweep once (2000 trials per error level), so it takes
//! a minute or two in an optimized build.

mod common;

use std::time::Instant;

use common::{
    classify_lmi, direct_sdr_power, gamma_affine, gaussian_channel, planted_sdp, random_hermitian, random_vector, rng,
    scalar_robust_power, LmiClass,
};
use mibeam::channel::{self, ChannelMatrices};
use mibeam::cli;
use mibeam::linalg::{c64, hermitian_eigenvalues, CMatrix, CVector};
use mibeam::metrics;
use mibeam::montecarlo::{self, design_trial, sample_errors, CellSummary, ExperimentResult, ScenarioConfig, Scheme};
use mibeam::oracle::{worst_case_sinr, OracleOptions};
use mibeam::robust::{self, power_upper_matrix, ExtractOptions, RobustProblem};
use mibeam::sdp::{self, embed_hermitian, SdpProblem, SdpStatus};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Sweep {
    cfg: ScenarioConfig,
    result: ExperimentResult,
    seconds: f64,
}

impl Sweep {
    fn at(&self, g: f64, s: Scheme) -> &CellSummary {
        let gi = self.cfg.error_g.iter().position(|x| (x - g).abs() < 1e-12).expect("g on the grid");
        self.result.cell(gi, s)
    }
}

fn full_sweep() -> Sweep {
    let cfg = ScenarioConfig::default();
    let t0 = Instant::now();
    let result = montecarlo::run_experiment(&cfg).expect("default config is valid");
    Sweep { cfg, result, seconds: t0.elapsed().as_secs_f64() }
}

fn robust_non_outage(sw: &Sweep) -> Outcome {
    let cells: Vec<&CellSummary> = sw.cfg.error_g.iter().map(|&g| sw.at(g, Scheme::Robust)).collect();
    let worst = cells.iter().map(|c| c.net_outage).fold(0.0, f64::max);
    let excluded: Vec<usize> = cells.iter().map(|c| c.failures).collect();

    // Oracle spot checks spread over the error levels with g > 0.
    let levels: Vec<usize> = (0..sw.cfg.error_g.len()).filter(|&i| sw.cfg.error_g[i] > 0.0).collect();
    let opts = OracleOptions::default();
    let mut checked = 0;
    let mut min_ratio = f64::INFINITY;
    let mut trial = 0;
    while checked < 100 && trial < sw.cfg.trials {
        let gi = levels[checked % levels.len()];
        let d = design_trial(&sw.cfg, trial, gi).expect("geometry");
        trial += 7;
        let Ok(beams) = &d.designs[0].1 else { continue };
        let kappa = d.problem.kappas();
        let mut r = rng(trial as u64);
        for n in 0..d.channel.n() {
            let wc = worst_case_sinr(&d.channel.h_row(n), d.problem.xi_h[n], &beams.vectors, n, d.problem.noise_power, &opts, &mut r);
            min_ratio = min_ratio.min(wc.sinr / kappa[n]);
        }
        checked += 1;
    }
    let pass = worst == 0.0 && checked == 100 && min_ratio >= 1.0 - 1e-4 && sw.seconds < 1800.0;
    outcome(
        pass,
        format!(
            "max robust outage {worst} over {} cells; infeasible (excluded) per g {excluded:?}; oracle on {checked} trials, min worst-case γ/κ = {min_ratio:.6}; sweep {:.1} s",
            cells.len(),
            sw.seconds
        ),
    )
}

fn nonrobust_degradation(sw: &Sweep) -> Outcome {
    let nr25 = sw.at(0.25, Scheme::Nonrobust).net_outage;
    let mm25 = sw.at(0.25, Scheme::Mmse).net_outage;
    let mm02 = sw.at(0.02, Scheme::Mmse).net_outage;
    let nr02 = sw.at(0.02, Scheme::Nonrobust).net_outage;
    let checks = [
        (0.6..=0.8).contains(&nr25),
        (0.7..=0.9).contains(&mm25),
        (0.6..=0.85).contains(&mm02),
        mm02 > nr02,
    ];
    let mark = |b: bool| if b { "ok" } else { "out of band" };
    outcome(
        checks.iter().all(|&b| b),
        format!(
            "non-robust@0.25 = {nr25:.3} [0.6, 0.8] {}; MMSE@0.25 = {mm25:.3} [0.7, 0.9] {}; MMSE@0.02 = {mm02:.3} [0.6, 0.85] {}; MMSE@0.02 > non-robust@0.02 ({nr02:.3}) {}",
            mark(checks[0]),
            mark(checks[1]),
            mark(checks[2]),
            mark(checks[3])
        ),
    )
}

/// Standard error of the mean sum rate over non-outage trials of one cell.
fn throughput_se(sw: &Sweep, gi: usize, si: usize) -> f64 {
    let rates: Vec<f64> = sw
        .result
        .records
        .iter()
        .filter_map(|t| t[gi][si].as_ref().ok())
        .filter(|r| !r.network_outage)
        .map(|r| r.sum_rate)
        .collect();
    if rates.len() < 2 {
        return 0.0;
    }
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

fn throughput_ordering(sw: &Sweep) -> Outcome {
    let base = sw.at(0.0, Scheme::Robust).effective_throughput;
    let robust: Vec<f64> = sw.cfg.error_g.iter().map(|&g| sw.at(g, Scheme::Robust).effective_throughput).collect();
    let max_dev = robust.iter().map(|t| (t - base).abs() / base).fold(0.0, f64::max);
    let stable = max_dev <= 0.05;
    let last = sw.cfg.error_g.len() - 1;
    let mut parts = vec![format!(
        "robust throughput {:?} bit/s, max deviation from g=0 {:.1}% (limit 5%)",
        robust.iter().map(|t| t.round()).collect::<Vec<_>>(),
        100.0 * max_dev
    )];
    let mut degrade = true;
    for (si, s) in [(1, Scheme::Nonrobust), (2, Scheme::Mmse)] {
        let t0 = sw.at(0.0, s).effective_throughput;
        let t1 = sw.at(0.25, s).effective_throughput;
        let sigma = (throughput_se(sw, 0, si).powi(2) + throughput_se(sw, last, si).powi(2)).sqrt();
        let ok = t1 < t0 + 2.0 * sigma;
        degrade &= ok;
        parts.push(format!("{}: {t0:.1} -> {t1:.1} (2σ = {:.1}) {}", s.as_str(), 2.0 * sigma, if ok { "ok" } else { "not below" }));
    }
    outcome(stable && degrade, parts.join("; "))
}

fn bound_soundness() -> Outcome {
    let cfg = ScenarioConfig::default();
    let mut r = rng(404);
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    let mut channels: Vec<ChannelMatrices> = Vec::new();
    for t in 0..100 {
        let mut gr = montecarlo::stream(cfg.seed, 1, 0, t);
        channels.push(channel::assemble_channel(&montecarlo::sample_geometry(&cfg, &mut gr).unwrap()).unwrap());
    }
    for i in 0..10_000 {
        let ch = &channels[i % channels.len()];
        let g = 0.25 * r.random::<f64>();
        let xi_q = g * ch.q.norm();
        let v: Vec<CVector> = (0..ch.n()).map(|_| random_vector(ch.k(), &mut r) * c64(1e-3, 0.0)).collect();
        let dq = if i % 2 == 0 {
            sample_errors(ch, g, &mut r).delta_q
        } else {
            let w = v.iter().fold(CVector::zeros(ch.k()), |acc, x| acc + x);
            &w * w.adjoint() * c64(xi_q / w.norm_squared(), 0.0)
        };
        let p_true = metrics::transmit_power(&(&ch.q + dq), &v, cfg.bandwidth);
        let p_upper = metrics::weighted_power(&power_upper_matrix(&ch.q, xi_q), &v, cfg.bandwidth);
        max_ratio = max_ratio.max(p_true / p_upper);
        if p_true > p_upper * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("10000 pairs, {violations} violations, max P_t/P_t^U = {max_ratio:.12}"))
}

fn lmi_equivalence() -> Outcome {
    let mut r = rng(505);
    let opts = OracleOptions { restarts: 100, iterations: 500, step: 1e-2 };
    let (mut feasible, mut feasible_ok, mut infeasible, mut found, mut borderline) = (0, 0, 0, 0, 0);
    for set in 0..100u64 {
        let (k, n) = (4, 2);
        let ch = gaussian_channel(k, n, 7000 + set);
        let g = r.random_range(0.02..0.3);
        let t: f64 = 10f64.powf(r.random_range(-0.5..1.0));
        let v: Vec<CVector> = (0..n)
            .map(|u| (ch.h_row(u).map(|z| z.conj()) + random_vector(k, &mut r) * c64(0.7, 0.0)) * c64(t / 2.0, 0.0))
            .collect();
        for u in 0..n {
            let h = ch.h_row(u);
            let xi = g * h.norm();
            let lmi = gamma_affine(&v, u, 2.0, &h, xi, 1.0);
            let a_max = (lmi.base.norm() / (xi * xi)).max(1.0);
            let wc = worst_case_sinr(&h, xi, &v, u, 1.0, &opts, &mut r).sinr;
            match classify_lmi(&lmi, a_max, 1e-4) {
                LmiClass::Feasible => {
                    feasible += 1;
                    if wc >= 2.0 * (1.0 - 1e-3) {
                        feasible_ok += 1;
                    }
                }
                LmiClass::InfeasibleWithMargin => {
                    infeasible += 1;
                    if wc < 2.0 {
                        found += 1;
                    }
                }
                LmiClass::Borderline => borderline += 1,
            }
        }
    }
    let rate = found as f64 / infeasible.max(1) as f64;
    outcome(
        feasible_ok == feasible && rate >= 0.95 && feasible > 0 && infeasible > 0,
        format!(
            "100 sets × 2 users: LMI-feasible {feasible_ok}/{feasible} confirmed by oracle; infeasible-with-margin {found}/{infeasible} violated ({:.1}%); {borderline} borderline",
            100.0 * rate
        ),
    )
}

fn solver_correctness() -> Outcome {
    let mut r = rng(606);
    let (mut total, mut passed) = (0, 0);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * (1.0 + b.abs());
    for d in 2..=8 {
        for _ in 0..4 {
            let a = DMatrix::<f64>::from_fn(d, d, |_, _| r.sample(StandardNormal));
            let c = (&a + a.transpose()) * 0.5;
            let mut p = SdpProblem::new(vec![d]);
            p.add_objective_matrix(0, &c).unwrap();
            p.push_constraint(&[(0, DMatrix::identity(d, d))], 1.0).unwrap();
            let sol = sdp::solve(&p, 1e-9).unwrap();
            total += 1;
            if sol.status == SdpStatus::Optimal && close(sol.objective_value, SymmetricEigen::new(c).eigenvalues.min()) {
                passed += 1;
            }
        }
    }
    for case in 0..10 {
        let len = 2 + case;
        let c: Vec<f64> = (0..len).map(|_| r.random_range(-5.0..5.0)).collect();
        let w: Vec<f64> = (0..len).map(|_| r.random_range(0.5..2.0)).collect();
        // min cᵀx s.t. wᵀx = 1, x ≥ 0: the best ratio c_i / w_i.
        let mut p = SdpProblem::new(vec![1; len]);
        let con = p.add_constraint(1.0);
        for i in 0..len {
            p.add_objective(i, 0, 0, c[i]);
            p.add_coefficient(con, i, 0, 0, w[i]);
        }
        let expect = (0..len).map(|i| c[i] / w[i]).fold(f64::INFINITY, f64::min);
        let sol = sdp::solve(&p, 1e-9).unwrap();
        total += 1;
        if sol.status == SdpStatus::Optimal && close(sol.objective_value, expect) {
            passed += 1;
        }
    }
    for case in 0..30 {
        let sizes: Vec<usize> = (0..1 + case % 3).map(|b| if b == 0 { 2 + case % 4 } else { 1 + (case + b) % 4 }).collect();
        let free: usize = sizes.iter().map(|d| d * (d + 1) / 2).sum();
        let (p, opt) = planted_sdp(&sizes, 1 + case % (free / 2).clamp(1, 5), &mut r);
        let sol = sdp::solve(&p, 1e-9).unwrap();
        total += 1;
        if sol.status == SdpStatus::Optimal && close(sol.objective_value, opt) {
            passed += 1;
        }
    }
    let mut p = SdpProblem::new(vec![3]);
    p.push_constraint(&[(0, DMatrix::identity(3, 3))], -1.0).unwrap();
    total += 1;
    if sdp::solve(&p, 1e-8).unwrap().status == SdpStatus::PrimalInfeasible {
        passed += 1;
    }
    let mut p = SdpProblem::new(vec![2]);
    p.add_objective(0, 0, 0, -1.0);
    let con = p.add_constraint(1.0);
    p.add_coefficient(con, 0, 1, 1, 1.0);
    total += 1;
    if sdp::solve(&p, 1e-8).unwrap().status == SdpStatus::DualInfeasible {
        passed += 1;
    }

    let mut worst_embed: f64 = 0.0;
    for i in 0..200 {
        let h = random_hermitian(1 + i % 7, &mut r);
        let mut real: Vec<f64> = SymmetricEigen::new(embed_hermitian(&h).unwrap()).eigenvalues.iter().copied().collect();
        let mut twice: Vec<f64> = hermitian_eigenvalues(&h).into_iter().flat_map(|l| [l, l]).collect();
        real.sort_by(f64::total_cmp);
        twice.sort_by(f64::total_cmp);
        let err = real.iter().zip(&twice).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / (1.0 + h.norm());
        worst_embed = worst_embed.max(err);
    }
    outcome(
        passed == total && worst_embed <= 1e-10,
        format!("analytic SDP suite {passed}/{total}; embedding spectrum doubling max relative error {worst_embed:.2e}"),
    )
}

fn degenerate_coincidence() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let k = 2 + (seed % 4) as usize;
        let n = 1 + (seed % k as u64).min(2) as usize;
        let ch = gaussian_channel(k, n, 2000 + seed);
        let th = mibeam::baselines::Thresholds { gamma_th: vec![2.0; n], c_th: 0.0, bandwidth: 10.0, noise_power: 0.1 };
        let prob = RobustProblem::with_relative_error(ch.clone(), 0.0, vec![2.0; n], 0.0, 10.0, 0.1);
        let robust_path = robust::solve_sdr(&prob).unwrap().objective;
        let baseline = mibeam::baselines::nonrobust_beamform(&ch, &th, &ExtractOptions::default(), &mut rng(seed)).unwrap();
        let reference = direct_sdr_power(&ch, &prob.kappas(), 0.1, 10.0);
        worst = worst
            .max((robust_path - reference).abs() / reference)
            .max((baseline.sdr_objective - reference).abs() / reference);
    }
    let mut scalar_worst: f64 = 0.0;
    for (h, q, g) in [((0.3, -0.4), (2.0, 5.0), 0.0), ((1.2, 0.1), (0.7, -3.0), 0.1), ((0.05, 0.02), (4.0, 0.3), 0.25)] {
        let ch = ChannelMatrices::from_hq(CMatrix::from_element(1, 1, c64(h.0, h.1)), CMatrix::from_element(1, 1, c64(q.0, q.1)));
        let prob = RobustProblem::with_relative_error(ch, g, vec![3.0], 0.0, 100.0, 1e-3);
        let (ha, qa) = (c64(h.0, h.1).norm(), c64(q.0, q.1).norm());
        let expect = scalar_robust_power(ha, q.0, g * ha, g * qa, 3.0, 1e-3, 100.0);
        let got = robust::robust_beamform(&prob, &ExtractOptions::default(), &mut rng(1)).unwrap();
        scalar_worst = scalar_worst.max((got.sdr_objective - expect).abs() / expect).max((got.power_upper - expect).abs() / expect);
    }
    outcome(
        worst <= 1e-5 && scalar_worst <= 1e-6,
        format!("ξ=0 vs direct relaxation, 50 instances: max relative gap {worst:.2e} (limit 1e-5); K=N=1 closed form: {scalar_worst:.2e} (limit 1e-6)"),
    )
}

fn determinism() -> Outcome {
    let cfg = ScenarioConfig { trials: 150, ..ScenarioConfig::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (_, ma) = cli::cmd_sweep(&cfg, a.path()).unwrap();
    let (_, mb) = cli::cmd_sweep(&cfg, b.path()).unwrap();
    let same = ["outage.csv", "throughput.csv"]
        .iter()
        .all(|f| std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap());
    outcome(
        same && ma.config_hash == mb.config_hash,
        format!("two sweeps of {} trials, config hash {}…: CSVs {}", cfg.trials, &ma.config_hash[..12], if same { "byte-identical" } else { "differ" }),
    )
}

fn main() {
    let sweep = full_sweep();
    let results: Vec<(&str, Outcome)> = vec![
        ("robust non-outage", robust_non_outage(&sweep)),
        ("non-robust degradation", nonrobust_degradation(&sweep)),
        ("effective-throughput ordering", throughput_ordering(&sweep)),
        ("power bound soundness", bound_soundness()),
        ("LMI / worst-case equivalence", lmi_equivalence()),
        ("solver correctness", solver_correctness()),
        ("degenerate coincidence", degenerate_coincidence()),
        ("determinism", determinism()),
    ];
    println!();
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("\n{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

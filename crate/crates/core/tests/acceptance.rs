//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances are pinned below.

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use triscale::asymptotic_forced::{frequency_response_curve, resonance_peak};
use triscale::asymptotic_free::{backbone_frequency, FreeExpansion, Order};
use triscale::io::{write_response_curve, write_trajectory};
use triscale::linalg::Matrix;
use triscale::model::{solve_generalized_eigen, ModalModel, OscillatorParams};
use triscale::spectral::{dominant_peaks, spectrum, spectrum_from_samples};
use triscale::timestep::{integrate, integrate_sampled, IntegratorOptions, OdeSystem, Tolerances};
use triscale::validation::{
    convergence_order_free, forced_stationary_accuracy, nnm_check, peak_location_check, perturbation_return, ConvergenceOptions, NnmOptions,
};

// Criterion 1
const C1_WINDOW: f64 = 2000.0;
const C1_SAMPLES: usize = 1 << 14;
const C1_FLOOR: f64 = 0.01;
const C1_PEAKS: usize = 3;
const C1_RUNTIME: Duration = Duration::from_secs(10);
// Criterion 2
const C2_EPSILONS: [f64; 3] = [0.02, 0.01, 0.005];
const C2_GAMMA: f64 = 20.0;
const C2_SLOPE_ORDER2: f64 = 3.0;
const C2_SLOPE_ORDER1: f64 = 2.0;
const C2_SLOPE_TOL: f64 = 0.3;
const C2_RUNTIME: Duration = Duration::from_secs(60);
// Criterion 3
const C3_ERROR_FACTOR: f64 = 10.0;
const C3_RUNTIME: Duration = Duration::from_secs(60);
// Criterion 4
const C4_GAP_FACTOR: f64 = 5.0;
const C4_SHRINK: (f64, f64) = (3.0, 5.0);
const C4_AMPLITUDE_REL: f64 = 0.02;
const C4_SIGMA_PRED: f64 = 1.5 - 0.071667;
const C4_RUNTIME: Duration = Duration::from_secs(120);
// Criterion 5
const C5_SIGMAS: [f64; 5] = [-2.0, -1.0, 0.0, 0.5, 1.0];
const C5_PERTURBATION: f64 = 1e-3;
const C5_DISTANCE: f64 = 1e-6;
const C5_TRACE_REL: f64 = 0.05;
// Criterion 6
const C6_GAP_FACTOR: f64 = 5.0;
// Criterion 7
const C7_EIGEN_RESIDUAL: f64 = 1e-9;
const C7_SLOPE: f64 = 2.0;
const C7_SLOPE_TOL: f64 = 0.3;
const C7_RUNTIME: Duration = Duration::from_secs(300);
// Criterion 8
const C8_ENERGY_REL: f64 = 1e-8;
const C8_ORTHONORMALITY: f64 = 1e-10;
const C8_RESIDUAL_FACTOR: f64 = 1e-12;
const C8_PARSEVAL_REL: f64 = 1e-8;

struct Gate {
    failures: usize,
}

impl Gate {
    fn check(&mut self, id: &str, pass: bool, detail: String) {
        println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn paper_forced(epsilon: f64) -> OscillatorParams<f64> {
    OscillatorParams { omega: 1.0, c: 1.0, d: 1.0, lambda: 0.5, epsilon, f_m: 1.0, sigma: 0.0 }
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn criterion_1(g: &mut Gate) {
    let start = Instant::now();
    let eps = 0.01;
    let p = OscillatorParams::free(1.0, 1.0, 1.0, eps);
    let exp = FreeExpansion::new(1.0, p, Order::Second);
    let (u0, v0) = exp.initial_state();
    let traj = integrate(&OdeSystem::Free1Dof(p), &[u0 / eps, v0 / eps], (0.0, C1_WINDOW), &IntegratorOptions::default()).unwrap();
    let spec = spectrum(&traj, 0, C1_SAMPLES, C1_WINDOW).unwrap();
    let bin = spec.resolution();
    let peaks = dominant_peaks(&spec, 16, C1_FLOOR);
    let mut freqs: Vec<f64> = peaks.peaks.iter().map(|p| p.frequency).collect();
    freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let elapsed = start.elapsed();
    let count_ok = peaks.len() == C1_PEAKS;
    let ratio_ok = count_ok && within(freqs[1], 2.0 * freqs[0], bin) && within(freqs[2], 3.0 * freqs[0], bin);
    // Diagnostics: the harmonics with the floor removed.
    let all = dominant_peaks(&spec, 3, 1e-4);
    let rel: Vec<String> = all.peaks.iter().map(|q| format!("{:.5}@{:.3e}", q.frequency, q.magnitude / all.peaks[0].magnitude)).collect();
    g.check(
        "1a (three peaks above 1%, ratios 1:2:3)",
        count_ok && ratio_ok,
        format!("{} peaks above {C1_FLOOR} of max (need {C1_PEAKS}); largest three freq@rel-mag: {}", peaks.len(), rel.join(", ")),
    );
    let fund = all.peaks[0].frequency;
    let nu = backbone_frequency(1.0, &p);
    g.check(
        "1b (fundamental vs backbone)",
        within(fund * TAU, nu, TAU / C1_WINDOW),
        format!("2*pi*f1 = {:.8}, backbone = {:.8}, |diff| = {:.2e} <= {:.2e}", fund * TAU, nu, (fund * TAU - nu).abs(), TAU / C1_WINDOW),
    );
    g.check("1c (runtime)", elapsed < C1_RUNTIME, format!("{elapsed:.2?} < {C1_RUNTIME:?}"));
}

fn criterion_2(g: &mut Gate) {
    let start = Instant::now();
    let base = OscillatorParams::free(1.0, 1.0, 1.0, 0.01);
    let opts = ConvergenceOptions { gamma: C2_GAMMA, ..Default::default() };
    let r2 = convergence_order_free(&base, 1.0, &C2_EPSILONS, &opts).unwrap();
    let r1 = convergence_order_free(&base, 1.0, &C2_EPSILONS, &ConvergenceOptions { order: Order::First, ..opts }).unwrap();
    let elapsed = start.elapsed();
    let s2 = r2.fitted_slope.unwrap();
    let s1 = r1.fitted_slope.unwrap();
    g.check(
        "2a (order-2 slope)",
        within(s2, C2_SLOPE_ORDER2, C2_SLOPE_TOL) && !r2.floor_limited,
        format!("slope {s2:.4} (target {C2_SLOPE_ORDER2} +/- {C2_SLOPE_TOL}), errors [{}]", sci(&r2.max_errors)),
    );
    g.check(
        "2b (order-1 slope)",
        within(s1, C2_SLOPE_ORDER1, C2_SLOPE_TOL) && !r1.floor_limited,
        format!("slope {s1:.4} (target {C2_SLOPE_ORDER1} +/- {C2_SLOPE_TOL}), errors [{}]", sci(&r1.max_errors)),
    );
    g.check("2c (runtime)", elapsed < C2_RUNTIME, format!("{elapsed:.2?} < {C2_RUNTIME:?}"));
}

fn criterion_3(g: &mut Gate) {
    let start = Instant::now();
    let p = paper_forced(0.01);
    let e = p.epsilon;
    let acc = forced_stationary_accuracy(&p, 10.0 / (e * p.lambda), 20.0 / e, Tolerances::default()).unwrap();
    let elapsed = start.elapsed();
    let bound = C3_ERROR_FACTOR * e.powi(3);
    g.check(
        "3a (post-transient error)",
        acc.max_error <= bound,
        format!("sup error {:.3e} = {:.3} eps^3 <= {bound:.1e}", acc.max_error, acc.error_over_eps3),
    );
    g.check("3b (runtime)", elapsed < C3_RUNTIME, format!("{elapsed:.2?} < {C3_RUNTIME:?}"));
}

fn criterion_4(g: &mut Gate) {
    let start = Instant::now();
    let p = paper_forced(0.01);
    let table = peak_location_check(&p, &[0.01, 0.005], (-2.0, 4.0), 301).unwrap();
    let elapsed = start.elapsed();
    let r = &table.rows[0];
    g.check(
        "4a (peak detuning within 5 eps^2)",
        within(r.sigma_pred, C4_SIGMA_PRED, 1e-6) && r.gap <= C4_GAP_FACTOR * r.epsilon.powi(2),
        format!(
            "sigma_scan {:.7}, predicted {:.7}, gap {:.3e} = {:.2} eps^2 (limit {C4_GAP_FACTOR})",
            r.sigma_scan, r.sigma_pred, r.gap, r.gap_over_eps2
        ),
    );
    let shrink = table.shrink_ratios[0];
    g.check(
        "4b (gap shrink on halving eps)",
        shrink >= C4_SHRINK.0 && shrink <= C4_SHRINK.1,
        format!("gap(0.01)/gap(0.005) = {shrink:.3} in [{}, {}]", C4_SHRINK.0, C4_SHRINK.1),
    );
    let pred = resonance_peak(&p).unwrap();
    g.check(
        "4c (peak amplitude within 2%)",
        pred.a0 == 2.0 && r.amp_rel_err <= C4_AMPLITUDE_REL,
        format!("eps*a_scan {:.6e} vs eps*(a0+eps*a1) {:.6e}, rel err {:.3e}", r.epsilon * r.a_scan, r.epsilon * r.a_pred, r.amp_rel_err),
    );
    g.check("4d (runtime)", elapsed < C4_RUNTIME, format!("{elapsed:.2?} < {C4_RUNTIME:?}"));
}

fn criterion_5(g: &mut Gate) {
    let p = paper_forced(0.01);
    let t_end = 50.0 / (p.epsilon * p.lambda);
    let h = C5_PERTURBATION / 2f64.sqrt();
    let mut worst_dist = 0.0f64;
    let mut worst_trace = 0.0f64;
    let mut all_ok = true;
    for &s in &C5_SIGMAS {
        let r = perturbation_return(&p.with_sigma(s), (h, h), t_end, Tolerances::new(1e-12, 1e-13)).unwrap();
        let below = r.stability.stable && r.stability.sigma_bound.is_none_or(|b| s <= b);
        all_ok &= below && r.final_distance <= C5_DISTANCE && r.trace_rel_err <= C5_TRACE_REL;
        worst_dist = worst_dist.max(r.final_distance);
        worst_trace = worst_trace.max(r.trace_rel_err);
    }
    g.check(
        "5 (Lyapunov return and trace)",
        all_ok,
        format!(
            "sigmas {C5_SIGMAS:?}: worst final distance {worst_dist:.2e} <= {C5_DISTANCE:.0e}, worst trace rel err {worst_trace:.2e} <= {C5_TRACE_REL}"
        ),
    );
}

fn criterion_6(g: &mut Gate) {
    let p1 = paper_forced(0.01);
    let p2 = OscillatorParams { c: 6.0, d: 0.25, ..p1 };
    let s1 = resonance_peak(&p1).unwrap().sigma1;
    let s2 = resonance_peak(&p2).unwrap().sigma1;
    g.check("6a (sigma1 ordering)", s2 < s1, format!("sigma1(c=6,d=1/4) = {s2:.4} < sigma1(c=1,d=1) = {s1:.4}"));
    for (name, p) in [("c=1,d=1", p1), ("c=6,d=1/4", p2)] {
        let t = peak_location_check(&p, &[p.epsilon], (-2.0, 4.0), 301).unwrap();
        let r = &t.rows[0];
        g.check(
            &format!("6b (scanned peak tracks prediction, {name})"),
            r.gap <= C6_GAP_FACTOR * r.epsilon.powi(2),
            format!(
                "sigma_scan {:.7}, predicted {:.7}, gap {:.2} eps^2 (limit {C6_GAP_FACTOR})",
                r.sigma_scan, r.sigma_pred, r.gap_over_eps2
            ),
        );
    }
}

fn criterion_7(g: &mut Gate) {
    let start = Instant::now();
    let chain = ModalModel::chain(29, 1.0, 1, 1.0, 1.0, 0.01).unwrap();
    let r = nnm_check(&chain, 0, 1.0, &C2_EPSILONS, &NnmOptions::default()).unwrap();
    let elapsed = start.elapsed();
    g.check(
        "7a (eigenbasis residual)",
        r.eigen_residual < C7_EIGEN_RESIDUAL,
        format!("{:.2e} < {C7_EIGEN_RESIDUAL:.0e}", r.eigen_residual),
    );
    let shared = r.runs.iter().all(|x| x.shares_fundamental);
    let spreads: Vec<String> = r.runs.iter().map(|x| format!("{:.1e}/{:.1e}", x.fundamental_spread, x.bin_width)).collect();
    g.check("7b (shared fundamental)", shared, format!("spread/bin per eps: {}", spreads.join(", ")));
    let fit = r.cross_mode_fit.unwrap();
    g.check(
        "7c (cross-mode eps^2 scaling)",
        within(fit.slope, C7_SLOPE, C7_SLOPE_TOL),
        format!("slope {:.4} (target {C7_SLOPE} +/- {C7_SLOPE_TOL})", fit.slope),
    );
    g.check("7d (runtime)", elapsed < C7_RUNTIME, format!("{elapsed:.2?} < {C7_RUNTIME:?}"));
}

fn response_csv() -> Vec<u8> {
    let p = paper_forced(0.01);
    let curve = frequency_response_curve(&p, (-2.0, 4.0), 301).unwrap();
    let mut out = Vec::new();
    write_response_curve(&mut out, &curve, &p).unwrap();
    out
}

fn trajectory_csv() -> Vec<u8> {
    let p = paper_forced(0.01);
    let times: Vec<f64> = (0..=2000).map(|j| j as f64 * 0.5).collect();
    let states = integrate_sampled(&OdeSystem::Forced1Dof(p), 0.0, &[1.0, 0.0], &times, &IntegratorOptions::default()).unwrap();
    let mut out = Vec::new();
    write_trajectory(&mut out, &times, &states, p.epsilon).unwrap();
    out
}

fn criterion_8(g: &mut Gate) {
    // Energy.
    let eps = 0.01;
    let p = OscillatorParams::free(1.0, 1.0, 1.0, eps);
    let sys = OdeSystem::Free1Dof(p);
    let (u0, v0) = FreeExpansion::new(1.0, p, Order::Second).initial_state();
    let y0 = [u0 / eps, v0 / eps];
    let traj = integrate(&sys, &y0, (0.0, 100.0 / eps), &IntegratorOptions::with_tol(Tolerances::new(1e-12, 1e-13))).unwrap();
    let e0: f64 = sys.energy(&y0).unwrap();
    let drift = (0..traj.len()).map(|i| ((sys.energy(traj.state(i)).unwrap() - e0) / e0).abs()).fold(0.0, f64::max);
    g.check("8a (energy conservation)", drift <= C8_ENERGY_REL, format!("max relative drift {drift:.2e} <= {C8_ENERGY_REL:.0e}"));

    // M-orthonormality: the chain and a non-diagonal mass.
    let chain = ModalModel::chain(29, 1.0, 1, 1.0, 1.0, eps).unwrap();
    let b = solve_generalized_eigen(&chain).unwrap();
    let o1: f64 = b.orthonormality_error(&chain.mass);
    let mut m5 = ModalModel::chain(5, 1.0, 2, 1.0, 1.0, eps).unwrap();
    m5.mass = Matrix::from_rows(&[
        vec![2.0, 0.3, 0.0, 0.0, 0.1],
        vec![0.3, 1.5, 0.2, 0.0, 0.0],
        vec![0.0, 0.2, 1.0, 0.1, 0.0],
        vec![0.0, 0.0, 0.1, 3.0, 0.4],
        vec![0.1, 0.0, 0.0, 0.4, 1.2],
    ])
    .unwrap();
    let b5 = solve_generalized_eigen(&m5).unwrap();
    let o2 = b5.orthonormality_error(&m5.mass);
    g.check(
        "8b (M-orthonormality)",
        o1.max(o2) <= C8_ORTHONORMALITY,
        format!("chain {o1:.2e}, full mass {o2:.2e} <= {C8_ORTHONORMALITY:.0e}"),
    );

    // Stationary residuals along response curves.
    let mut worst = 0.0f64;
    for q in [paper_forced(0.01), OscillatorParams { c: 6.0, d: 0.25, ..paper_forced(0.01) }] {
        let curve = frequency_response_curve(&q, (-2.0, 4.0), 301).unwrap();
        worst = worst.max(curve.points.iter().map(|x| x.residual / q.epsilon).fold(0.0, f64::max));
    }
    g.check("8c (stationary residuals)", worst <= C8_RESIDUAL_FACTOR, format!("max residual/eps {worst:.2e} <= {C8_RESIDUAL_FACTOR:.0e}"));

    // Parseval on a simulated signal.
    let n = 1 << 13;
    let t_win = 400.0;
    let times: Vec<f64> = (0..n).map(|j| j as f64 * t_win / n as f64).collect();
    let states = integrate_sampled(&sys, 0.0, &y0, &times, &IntegratorOptions::default()).unwrap();
    let x: Vec<f64> = states.iter().map(|s| s[0]).collect();
    let ms = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let spec = spectrum_from_samples(&x, t_win).unwrap();
    let pr = (spec.mean_square() - ms).abs() / ms;
    g.check("8d (Parseval)", pr <= C8_PARSEVAL_REL, format!("relative mismatch {pr:.2e} <= {C8_PARSEVAL_REL:.0e}"));

    // Determinism.
    let same = response_csv() == response_csv() && trajectory_csv() == trajectory_csv();
    g.check("8e (byte-identical CSV across runs)", same, "response curve and trajectory CSV compared byte-wise".into());
}

fn main() {
    let mut g = Gate { failures: 0 };
    let start = Instant::now();
    criterion_1(&mut g);
    criterion_2(&mut g);
    criterion_3(&mut g);
    criterion_4(&mut g);
    criterion_5(&mut g);
    criterion_6(&mut g);
    criterion_7(&mut g);
    criterion_8(&mut g);
    println!("acceptance: {} failing check(s), total {:.2?}", g.failures, start.elapsed());
    if g.failures > 0 {
        std::process::exit(1);
    }
}

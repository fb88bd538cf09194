//! Checks of the asymptotic results against direct integration: convergence
//! orders, horizon sensitivity, peak location, stability basins, the
//! slow flow against the simulated envelope, and nonlinear normal modes of
//! chains.
//!
//! Independent ε runs execute concurrently; reports are assembled in input
//! order so they are deterministic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::asymptotic_forced::{
    evaluate_forced_expansion, evaluate_forced_transient, forced_initial_state, frequency_response_curve, integrate_slow_flow,
    leading_order_guess, refine_peak, resonance_peak, stability, stationary_solve, wrap_phase, ForcedNdofExpansion, SlowFlowState,
    StabilityReport, StationaryPoint,
};
use crate::asymptotic_free::{CrossModeVariant, FreeExpansion, FreeNdofExpansion, NdofExpansionOptions, Order};
use crate::model::{
    check_internal_resonance, modal_reduce, solve_generalized_eigen, Eigenbasis, ModalModel, OscillatorParams, ResonanceReport,
};
use crate::scalar::lit;
use crate::spectral::{dominant_peaks, spectrum_from_samples};
use crate::timestep::{integrate, integrate_sampled, sample_envelope, IntegratorOptions, NdofSystem, OdeSystem, Tolerances};
use crate::{Error, Real, Result};

/// Length of the comparison window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum HorizonRule {
    /// `γ/ε`
    #[default]
    #[serde(rename = "gamma/eps")]
    GammaOverEps,
    /// `γ/ε²`
    #[serde(rename = "gamma/eps2")]
    GammaOverEps2,
}

impl HorizonRule {
    pub fn horizon<T: Real>(self, gamma: T, epsilon: T) -> T {
        match self {
            Self::GammaOverEps => gamma / epsilon,
            Self::GammaOverEps2 => gamma / (epsilon * epsilon),
        }
    }
}

/// Ordinary least-squares fit of `log y = intercept + slope·log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit<T> {
    pub slope: T,
    pub intercept: T,
    pub stderr: T,
    /// Two-sided 95% Student-t interval for the slope.
    pub ci95: [T; 2],
}

/// Fits a power law through positive data. Needs at least 3 points.
pub fn fit_log_log<T: Real>(xs: &[T], ys: &[T]) -> Result<SlopeFit<T>> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!("{} abscissae vs {} ordinates", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!("slope fit needs at least 3 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > T::zero()) || !v.is_finite()) {
        return Err(Error::InsufficientData("slope fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.as_f64().ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.as_f64().ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("slope fit needs distinct abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let dof = n - 2.0;
    let stderr = (ssr / dof / sxx).sqrt();
    let q = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::InvalidParams(e.to_string()))?.inverse_cdf(0.975);
    Ok(SlopeFit {
        slope: T::lit(slope),
        intercept: T::lit(intercept),
        stderr: T::lit(stderr),
        ci95: [T::lit(slope - q * stderr), T::lit(slope + q * stderr)],
    })
}

/// Whether the initial slow state satisfies the convergence hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preparation {
    /// Within `10ε²` of the stationary point (always true for free runs).
    WellPrepared,
    /// Too far from the stationary point; no slope is claimed.
    IllPrepared,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport<T> {
    /// Descending.
    pub epsilons: Vec<T>,
    /// Sup-norm of `ũ_numeric − ũ_app` over `[0, horizon(ε)]`, physical units.
    pub max_errors: Vec<T>,
    pub fitted_slope: Option<T>,
    pub slope_stderr: Option<T>,
    pub slope_ci95: Option<[T; 2]>,
    pub horizon_rule: HorizonRule,
    pub gamma: T,
    pub order: Order,
    /// Some error sits at the integrator-tolerance floor, so the slope
    /// measures the integrator rather than the expansion.
    pub floor_limited: bool,
    pub preparation: Preparation,
}

impl<T: Real> ConvergenceReport<T> {
    fn assemble(eps: Vec<T>, errs: Vec<T>, floors: &[T], opts: &ConvergenceOptions<T>, preparation: Preparation) -> Self {
        let floor_limited = errs.iter().zip(floors).any(|(e, f)| e <= f);
        let fit = if preparation == Preparation::WellPrepared { fit_log_log(&eps, &errs).ok() } else { None };
        Self {
            fitted_slope: fit.map(|f| f.slope),
            slope_stderr: fit.map(|f| f.stderr),
            slope_ci95: fit.map(|f| f.ci95),
            epsilons: eps,
            max_errors: errs,
            horizon_rule: opts.horizon,
            gamma: opts.gamma,
            order: opts.order,
            floor_limited,
            preparation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions<T> {
    pub gamma: T,
    pub horizon: HorizonRule,
    pub order: Order,
    pub tol: Tolerances<T>,
    /// Sup-norm sampling density per fundamental period.
    pub samples_per_period: usize,
}

impl<T: Real> Default for ConvergenceOptions<T> {
    fn default() -> Self {
        Self {
            gamma: lit(20.0),
            horizon: HorizonRule::GammaOverEps,
            order: Order::Second,
            tol: Tolerances::default(),
            samples_per_period: 50,
        }
    }
}

impl<T: Real> ConvergenceOptions<T> {
    fn validate(&self) -> Result<()> {
        self.tol.validate()?;
        if !(self.gamma > T::zero()) {
            return Err(Error::InvalidParams("gamma must be positive".into()));
        }
        if self.samples_per_period < 2 {
            return Err(Error::InvalidParams("need at least 2 samples per period".into()));
        }
        Ok(())
    }

    /// Error level attributable to the integrator for a response of
    /// physical size `scale`.
    fn floor(&self, scale: T) -> T {
        lit::<T>(1e3) * self.tol.rel_tol * scale.abs()
    }
}

/// Sorted (descending) copy; needs ≥ 3 positive values spanning ≥ 4×.
fn check_epsilons<T: Real>(epsilons: &[T]) -> Result<Vec<T>> {
    if epsilons.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 epsilons, got {}", epsilons.len())));
    }
    if epsilons.iter().any(|e| !(*e > T::zero()) || !e.is_finite()) {
        return Err(Error::InvalidParams("epsilons must be positive and finite".into()));
    }
    let mut eps = epsilons.to_vec();
    eps.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if eps[0] < lit::<T>(4.0) * eps[eps.len() - 1] {
        return Err(Error::InsufficientData("epsilons must span at least a factor of 4".into()));
    }
    Ok(eps)
}

/// `start + j·period/per_period` up to `end`.
fn sample_grid<T: Real>(start: T, end: T, period: T, per_period: usize) -> Vec<T> {
    let dt = period / T::from_usize_lossy(per_period);
    let n = ((end - start) / dt * (T::one() + lit(1e-12))).floor().to_usize().unwrap_or(0);
    (0..=n).map(|j| start + T::from_usize_lossy(j) * dt).collect()
}

fn check_positive<T: Real>(name: &str, v: T) -> Result<()> {
    if !(v > T::zero()) || !v.is_finite() {
        return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn free_error<T: Real>(base: &OscillatorParams<T>, a: T, eps: T, opts: &ConvergenceOptions<T>) -> Result<T> {
    let p = OscillatorParams { lambda: T::zero(), f_m: T::zero(), sigma: T::zero(), ..base.with_epsilon(eps) };
    p.validate()?;
    let exp = FreeExpansion::new(a, p, opts.order);
    let (u0, v0) = exp.initial_state();
    let horizon = opts.horizon.horizon(opts.gamma, eps);
    let times = sample_grid(T::zero(), horizon, T::TAU() / exp.nu.abs(), opts.samples_per_period);
    let states =
        integrate_sampled(&OdeSystem::Free1Dof(p), T::zero(), &[u0 / eps, v0 / eps], &times, &IntegratorOptions::with_tol(opts.tol))?;
    Ok(times.iter().zip(&states).fold(T::zero(), |m, (&t, y)| m.max((eps * y[0] - exp.displacement(t)).abs())))
}

/// Sup error of the free expansion against direct integration for each ε,
/// with the log-log slope.
pub fn convergence_order_free<T: Real>(
    params_base: &OscillatorParams<T>,
    a: T,
    epsilons: &[T],
    opts: &ConvergenceOptions<T>,
) -> Result<ConvergenceReport<T>> {
    let eps = check_epsilons(epsilons)?;
    opts.validate()?;
    let errs = eps.par_iter().map(|&e| free_error(params_base, a, e, opts)).collect::<Result<Vec<_>>>()?;
    let floors: Vec<T> = eps.iter().map(|&e| opts.floor(e * a)).collect();
    Ok(ConvergenceReport::assemble(eps, errs, &floors, opts, Preparation::WellPrepared))
}

/// Stable stationary point at the detuning carried by `params`, or the
/// refusal carrying the stability bound.
fn stable_point<T: Real>(params: &OscillatorParams<T>) -> Result<StationaryPoint<T>> {
    let sigma = params.sigma;
    let guess = leading_order_guess(sigma, params)
        .ok_or_else(|| Error::InvalidParams("forced convergence needs a nonzero forcing amplitude".into()))?;
    let pt = stationary_solve(sigma, params, &guess)?;
    let rep = stability(&pt, params);
    if !rep.stable {
        return Err(Error::UnstableDetuning { sigma: sigma.as_f64(), bound: rep.sigma_bound.map_or(f64::NAN, |b| b.as_f64()) });
    }
    Ok(pt)
}

/// Well-prepared radius `10ε²` around the stationary point.
fn is_well_prepared<T: Real>(offset: (T, T), eps: T) -> bool {
    offset.0.abs().max(offset.1.abs()) <= lit::<T>(10.0) * eps * eps
}

fn forced_error<T: Real>(base: &OscillatorParams<T>, eps: T, offset: (T, T), opts: &ConvergenceOptions<T>) -> Result<(T, T)> {
    let p = base.with_epsilon(eps);
    p.validate()?;
    let pt = stable_point(&p)?;
    let state0 = SlowFlowState::new(pt.a + offset.0, pt.beta + offset.1);
    let horizon = opts.horizon.horizon(opts.gamma, eps);
    let slow = integrate_slow_flow(&state0, &p, horizon, Tolerances::new(lit(1e-12), lit(1e-13)))?;
    let (u0, v0) = forced_initial_state(&state0, &p, opts.order)?;
    let times = sample_grid(T::zero(), horizon, T::TAU() / p.forcing_frequency(), opts.samples_per_period);
    let states =
        integrate_sampled(&OdeSystem::Forced1Dof(p), T::zero(), &[u0 / eps, v0 / eps], &times, &IntegratorOptions::with_tol(opts.tol))?;
    let mut err = T::zero();
    for (&t, y) in times.iter().zip(&states) {
        err = err.max((eps * y[0] - evaluate_forced_transient(t, &slow, &p, opts.order)?).abs());
    }
    Ok((err, pt.a))
}

/// Forced convergence: starts the slow flow at the stable stationary point
/// of `params_base.sigma` shifted by `offset = (δa, δβ)` and compares the
/// expansion driven by the integrated slow flow with direct integration.
/// A fixed offset larger than `10ε²` marks the run ill-prepared and no
/// slope is fitted.
pub fn convergence_order_forced<T: Real>(
    params_base: &OscillatorParams<T>,
    epsilons: &[T],
    offset: (T, T),
    opts: &ConvergenceOptions<T>,
) -> Result<ConvergenceReport<T>> {
    let eps = check_epsilons(epsilons)?;
    opts.validate()?;
    let out = eps.par_iter().map(|&e| forced_error(params_base, e, offset, opts)).collect::<Result<Vec<_>>>()?;
    let floors: Vec<T> = eps.iter().zip(&out).map(|(&e, o)| opts.floor(e * o.1)).collect();
    let prepared = eps.iter().all(|&e| is_well_prepared(offset, e));
    let prep = if prepared { Preparation::WellPrepared } else { Preparation::IllPrepared };
    Ok(ConvergenceReport::assemble(eps, out.into_iter().map(|o| o.0).collect(), &floors, opts, prep))
}

fn with_epsilon_model<T: Real>(model: &ModalModel<T>, eps: T) -> ModalModel<T> {
    ModalModel { epsilon: eps, ..model.clone() }
}

/// Modal-coordinate comparison of one N-DOF run: returns
/// `(max driven error, max cross-mode error, max cross-mode amplitude)`.
struct ModalComparison<T> {
    driven_error: T,
    cross_error: T,
    cross_amplitude: T,
}

#[allow(clippy::too_many_arguments)]
fn compare_modal<T: Real>(
    sys: &OdeSystem<T>,
    y0: &[T],
    times: &[T],
    basis: &Eigenbasis<T>,
    model: &ModalModel<T>,
    mode: usize,
    approx: impl Fn(T) -> Vec<T>,
    tol: Tolerances<T>,
) -> Result<ModalComparison<T>> {
    let eps = model.epsilon;
    let n = model.n();
    let states = integrate_sampled(sys, T::zero(), y0, times, &IntegratorOptions::with_tol(tol))?;
    let mut out = ModalComparison { driven_error: T::zero(), cross_error: T::zero(), cross_amplitude: T::zero() };
    for (&t, y) in times.iter().zip(&states) {
        let num = basis.to_modal(&model.mass, &y[..n]);
        let app = approx(t);
        for k in 0..n {
            let (yn, ya) = (eps * num[k], app[k]);
            if k == mode {
                out.driven_error = out.driven_error.max((yn - ya).abs());
            } else {
                out.cross_error = out.cross_error.max((yn - ya).abs());
                out.cross_amplitude = out.cross_amplitude.max(yn.abs());
            }
        }
    }
    Ok(out)
}

fn scaled_state<T: Real>(u: Vec<T>, v: Vec<T>, eps: T) -> Vec<T> {
    u.into_iter().chain(v).map(|x| x / eps).collect()
}

/// Forced N-DOF convergence on the driven modal coordinate
/// `ỹ_m = φ_mᵀ M ũ`, starting from the stationary expansion at detuning
/// `sigma`.
pub fn convergence_order_forced_ndof<T: Real>(
    model: &ModalModel<T>,
    mode: usize,
    sigma: T,
    epsilons: &[T],
    opts: &ConvergenceOptions<T>,
) -> Result<ConvergenceReport<T>> {
    let eps = check_epsilons(epsilons)?;
    opts.validate()?;
    let basis = solve_generalized_eigen(model)?;
    let out = eps
        .par_iter()
        .map(|&e| -> Result<(T, T)> {
            let m = with_epsilon_model(model, e);
            let red = modal_reduce(&m, &basis, mode)?;
            let p = red.effective_params(sigma);
            let pt = stable_point(&p)?;
            let exp = ForcedNdofExpansion::new(&pt, &red, &basis, NdofExpansionOptions { order: opts.order, ..Default::default() })?;
            let y0 = scaled_state(exp.displacement(T::zero()), exp.velocity(T::zero()), e);
            let w = p.forcing_frequency();
            let horizon = opts.horizon.horizon(opts.gamma, e);
            let times = sample_grid(T::zero(), horizon, T::TAU() / w, opts.samples_per_period);
            let sys = OdeSystem::ForcedNdof { system: NdofSystem::new(m.clone())?, forcing_frequency: w };
            let cmp = compare_modal(&sys, &y0, &times, &basis, &m, mode, |t| exp.modal(t), opts.tol)?;
            Ok((cmp.driven_error, pt.a))
        })
        .collect::<Result<Vec<_>>>()?;
    let floors: Vec<T> = eps.iter().zip(&out).map(|(&e, o)| opts.floor(e * o.1)).collect();
    Ok(ConvergenceReport::assemble(eps, out.into_iter().map(|o| o.0).collect(), &floors, opts, Preparation::WellPrepared))
}

/// Post-transient accuracy of the stationary forced expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryAccuracy<T> {
    pub epsilon: T,
    pub point: StationaryPoint<T>,
    pub transient: T,
    pub window: T,
    pub max_error: T,
    /// `max_error / ε³`
    pub error_over_eps3: T,
}

/// Starts at the stationary expansion, discards `[0, transient]` and takes
/// the sup error against [`evaluate_forced_expansion`] over the following
/// `window`.
pub fn forced_stationary_accuracy<T: Real>(
    params: &OscillatorParams<T>,
    transient: T,
    window: T,
    tol: Tolerances<T>,
) -> Result<StationaryAccuracy<T>> {
    params.validate()?;
    check_positive("window", window)?;
    if transient < T::zero() {
        return Err(Error::InvalidParams("transient must be non-negative".into()));
    }
    let e = params.epsilon;
    let pt = stable_point(params)?;
    let (u0, v0) = forced_initial_state(&pt.state(), params, Order::Second)?;
    let times = sample_grid(transient, transient + window, T::TAU() / params.forcing_frequency(), 50);
    let states =
        integrate_sampled(&OdeSystem::Forced1Dof(*params), T::zero(), &[u0 / e, v0 / e], &times, &IntegratorOptions::with_tol(tol))?;
    let max_error =
        times.iter().zip(&states).fold(T::zero(), |m, (&t, y)| m.max((e * y[0] - evaluate_forced_expansion(t, &pt, params)).abs()));
    Ok(StationaryAccuracy { epsilon: e, point: pt, transient, window, max_error, error_over_eps3: max_error / (e * e * e) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakRow<T> {
    pub epsilon: T,
    /// Detuning of the largest stationary amplitude.
    pub sigma_scan: T,
    /// `σ₀* + εσ₁*`
    pub sigma_pred: T,
    /// `|σ_scan − σ_pred|`
    pub gap: T,
    pub gap_over_eps2: T,
    pub a_scan: T,
    /// `a₀* + εa₁*`
    pub a_pred: T,
    /// `|ε a_scan − ε a_pred| / (ε a_scan)`
    pub amp_rel_err: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakLocationTable<T> {
    pub rows: Vec<PeakRow<T>>,
    /// `gap_i / gap_{i+1}` for consecutive rows.
    pub shrink_ratios: Vec<T>,
}

/// Scans the response curve over `sigma_range` with `n_points` grid points
/// (fold-aware), refines the maximum and compares it with the two-term
/// peak prediction.
pub fn peak_location_check<T: Real>(
    params: &OscillatorParams<T>,
    epsilons: &[T],
    sigma_range: (T, T),
    n_points: usize,
) -> Result<PeakLocationTable<T>> {
    if epsilons.is_empty() {
        return Err(Error::InsufficientData("no epsilons given".into()));
    }
    let rows = epsilons
        .par_iter()
        .map(|&e| -> Result<PeakRow<T>> {
            let p = params.with_epsilon(e);
            let pred = resonance_peak(&p)?;
            let curve = frequency_response_curve(&p, sigma_range, n_points)?;
            let i = curve.argmax_amplitude().ok_or_else(|| Error::Continuation("empty response curve".into()))?;
            let top = refine_peak(&p, &curve.points[i])?;
            let gap = (top.sigma - pred.sigma()).abs();
            Ok(PeakRow {
                epsilon: e,
                sigma_scan: top.sigma,
                sigma_pred: pred.sigma(),
                gap,
                gap_over_eps2: gap / (e * e),
                a_scan: top.a,
                a_pred: pred.amplitude(),
                amp_rel_err: (top.a - pred.amplitude()).abs() / top.a,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let shrink_ratios = rows.windows(2).map(|w| w[0].gap / w[1].gap).collect();
    Ok(PeakLocationTable { rows, shrink_ratios })
}

/// Slow-flow amplitude against the envelope of the direct solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport<T> {
    pub t_end: T,
    pub n_extrema: usize,
    /// `sup |a(t_i) − env_i/ε|` over the extrema `t_i` of `|ũ|`.
    pub sup_deviation: T,
    /// Same, relative to `a(t_i)`.
    pub sup_relative_deviation: T,
    pub final_slow_amplitude: T,
    pub final_envelope: T,
    pub envelope_times: Vec<T>,
    /// `env_i/ε`
    pub envelope: Vec<T>,
    pub slow_amplitude: Vec<T>,
}

/// Integrates the slow flow and the full equation from matching initial
/// data (the expansion built on `state0`) and compares amplitude with the
/// envelope of `|ũ|/ε`. Needs `t_end ≥ 10/(ελ)`.
pub fn slow_flow_vs_envelope<T: Real>(
    params: &OscillatorParams<T>,
    state0: &SlowFlowState<T>,
    t_end: T,
    tol: Tolerances<T>,
) -> Result<EnvelopeReport<T>> {
    params.validate()?;
    let e = params.epsilon;
    if !(params.lambda > T::zero()) {
        return Err(Error::InvalidParams("envelope comparison needs lambda > 0".into()));
    }
    let min_t = lit::<T>(10.0) / (e * params.lambda);
    if t_end < min_t * (T::one() - lit(1e-12)) {
        return Err(Error::InvalidParams(format!("t_end = {t_end} below 10/(eps*lambda) = {min_t}")));
    }
    let slow = integrate_slow_flow(state0, params, t_end, Tolerances::new(lit(1e-12), lit(1e-13)))?;
    let (u0, v0) = forced_initial_state(state0, params, Order::Second)?;
    let traj = integrate(&OdeSystem::Forced1Dof(*params), &[u0 / e, v0 / e], (T::zero(), t_end), &IntegratorOptions::with_tol(tol))?;
    let (times, env) = sample_envelope(&traj, 0)?;
    if times.is_empty() {
        return Err(Error::InsufficientData("no extrema found in the direct solution".into()));
    }
    let mut slow_a = Vec::with_capacity(times.len());
    let (mut dev, mut rel) = (T::zero(), T::zero());
    for (&t, &en) in times.iter().zip(&env) {
        let a = slow.state_at(t)?.a;
        let d = (a - en).abs();
        dev = dev.max(d);
        rel = rel.max(d / a.abs());
        slow_a.push(a);
    }
    Ok(EnvelopeReport {
        t_end,
        n_extrema: times.len(),
        sup_deviation: dev,
        sup_relative_deviation: rel,
        final_slow_amplitude: slow.final_state().a,
        final_envelope: env[env.len() - 1],
        envelope_times: times,
        envelope: env,
        slow_amplitude: slow_a,
    })
}

/// Slow-flow return to a stationary point after a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnReport<T> {
    pub point: StationaryPoint<T>,
    pub stability: StabilityReport<T>,
    pub perturbation: [T; 2],
    pub t_end: T,
    /// `√(δa² + δβ²)` at `t_end`, with `δβ` wrapped.
    pub final_distance: T,
    /// `|tr J − (−λε)| / (λε)`
    pub trace_rel_err: T,
}

/// Solves the lower-branch stationary point at `params.sigma`, perturbs it
/// by `(δa, δβ)` and integrates the slow flow to `t_end`.
pub fn perturbation_return<T: Real>(
    params: &OscillatorParams<T>,
    perturbation: (T, T),
    t_end: T,
    tol: Tolerances<T>,
) -> Result<ReturnReport<T>> {
    params.validate()?;
    check_positive("t_end", t_end)?;
    let guess = leading_order_guess(params.sigma, params)
        .ok_or_else(|| Error::InvalidParams("perturbation return needs a nonzero forcing amplitude".into()))?;
    let pt = stationary_solve(params.sigma, params, &guess)?;
    let st = stability(&pt, params);
    let start = SlowFlowState::new(pt.a + perturbation.0, pt.beta + perturbation.1);
    let end = integrate_slow_flow(&start, params, t_end, tol)?.final_state();
    let (da, db) = (end.a - pt.a, wrap_phase(end.beta - pt.beta));
    let le = params.lambda * params.epsilon;
    Ok(ReturnReport {
        point: pt,
        stability: st,
        perturbation: [perturbation.0, perturbation.1],
        t_end,
        final_distance: (da * da + db * db).sqrt(),
        trace_rel_err: (st.numeric_trace + le).abs() / le.abs(),
    })
}

/// Free convergence measured at both candidate horizons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonReport<T> {
    pub short: ConvergenceReport<T>,
    pub long: ConvergenceReport<T>,
    /// `max_error/ε³` at the long horizon.
    pub long_error_over_eps3: Vec<T>,
    /// `max_error/ε³` at the smallest ε is within 2× of that at the
    /// largest ε.
    pub long_bounded: bool,
}

/// Reruns the free convergence study at `γ/ε` and `γ/ε²` and states
/// whether the scaled error stays bounded at the longer horizon.
pub fn horizon_sensitivity<T: Real>(
    params_base: &OscillatorParams<T>,
    a: T,
    epsilons: &[T],
    opts: &ConvergenceOptions<T>,
) -> Result<HorizonReport<T>> {
    let short = convergence_order_free(params_base, a, epsilons, &ConvergenceOptions { horizon: HorizonRule::GammaOverEps, ..*opts })?;
    let long = convergence_order_free(params_base, a, epsilons, &ConvergenceOptions { horizon: HorizonRule::GammaOverEps2, ..*opts })?;
    let ratios: Vec<T> = long.epsilons.iter().zip(&long.max_errors).map(|(&e, &m)| m / (e * e * e)).collect();
    let long_bounded = ratios[ratios.len() - 1] <= lit::<T>(2.0) * ratios[0];
    Ok(HorizonReport { short, long, long_error_over_eps3: ratios, long_bounded })
}

/// Which constant-term denominator and fundamental option of the
/// non-driven modal response agrees with direct simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariantRow<T> {
    pub variant: CrossModeVariant,
    pub fundamental_terms: bool,
    /// Sup over non-driven modes and samples of `|ỹ_k − ỹ_k,app|`.
    pub max_cross_error: T,
    pub max_cross_amplitude: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantReport<T> {
    pub epsilon: T,
    pub mode: usize,
    pub forced: bool,
    pub rows: Vec<VariantRow<T>>,
    /// Index into `rows` of the smallest error.
    pub best: usize,
}

const VARIANTS: [(CrossModeVariant, bool); 4] = [
    (CrossModeVariant::FreeDenominator, false),
    (CrossModeVariant::FreeDenominator, true),
    (CrossModeVariant::ForcedDenominator, false),
    (CrossModeVariant::ForcedDenominator, true),
];

fn variant_report<T: Real>(epsilon: T, mode: usize, forced: bool, rows: Vec<VariantRow<T>>) -> VariantReport<T> {
    let best = (0..rows.len())
        .min_by(|&i, &j| rows[i].max_cross_error.partial_cmp(&rows[j].max_cross_error).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    VariantReport { epsilon, mode, forced, rows, best }
}

/// Free motion: each expansion variant initializes its own simulation,
/// which runs for `periods` periods of the driven mode.
pub fn cross_mode_variant_check_free<T: Real>(
    model: &ModalModel<T>,
    mode: usize,
    a1: T,
    periods: usize,
    tol: Tolerances<T>,
) -> Result<VariantReport<T>> {
    let basis = solve_generalized_eigen(model)?;
    let red = modal_reduce(model, &basis, mode)?;
    let e = model.epsilon;
    let rows = VARIANTS
        .par_iter()
        .map(|&(variant, fundamental_terms)| -> Result<VariantRow<T>> {
            let opts = NdofExpansionOptions { variant, fundamental_terms, ..Default::default() };
            let exp = FreeNdofExpansion::new(a1, &red, &basis, opts)?;
            let period = T::TAU() / exp.driven.nu;
            let times = sample_grid(T::zero(), period * T::from_usize_lossy(periods), period, 50);
            let y0 = scaled_state(exp.displacement(T::zero()), exp.velocity(T::zero()), e);
            let sys = OdeSystem::FreeNdof(NdofSystem::new(model.clone())?);
            let cmp = compare_modal(&sys, &y0, &times, &basis, model, mode, |t| exp.modal(t), tol)?;
            Ok(VariantRow { variant, fundamental_terms, max_cross_error: cmp.cross_error, max_cross_amplitude: cmp.cross_amplitude })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(variant_report(e, mode, false, rows))
}

/// Forced motion at the stable stationary point of detuning `sigma`.
pub fn cross_mode_variant_check_forced<T: Real>(
    model: &ModalModel<T>,
    mode: usize,
    sigma: T,
    periods: usize,
    tol: Tolerances<T>,
) -> Result<VariantReport<T>> {
    let basis = solve_generalized_eigen(model)?;
    let red = modal_reduce(model, &basis, mode)?;
    let e = model.epsilon;
    let p = red.effective_params(sigma);
    let pt = stable_point(&p)?;
    let w = p.forcing_frequency();
    let rows = VARIANTS
        .par_iter()
        .map(|&(variant, fundamental_terms)| -> Result<VariantRow<T>> {
            let opts = NdofExpansionOptions { variant, fundamental_terms, ..Default::default() };
            let exp = ForcedNdofExpansion::new(&pt, &red, &basis, opts)?;
            let period = T::TAU() / w;
            let times = sample_grid(T::zero(), period * T::from_usize_lossy(periods), period, 50);
            let y0 = scaled_state(exp.displacement(T::zero()), exp.velocity(T::zero()), e);
            let sys = OdeSystem::ForcedNdof { system: NdofSystem::new(model.clone())?, forcing_frequency: w };
            let cmp = compare_modal(&sys, &y0, &times, &basis, model, mode, |t| exp.modal(t), tol)?;
            Ok(VariantRow { variant, fundamental_terms, max_cross_error: cmp.cross_error, max_cross_amplitude: cmp.cross_amplitude })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(variant_report(e, mode, true, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnmOptions<T> {
    /// Window length in periods of the driven mode.
    pub periods: usize,
    /// Power of two.
    pub n_samples: usize,
    pub tol: Tolerances<T>,
    pub expansion: NdofExpansionOptions,
}

impl<T: Real> Default for NnmOptions<T> {
    fn default() -> Self {
        Self { periods: 200, n_samples: 1 << 14, tol: Tolerances::default(), expansion: NdofExpansionOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NnmRun<T> {
    pub epsilon: T,
    /// Refined frequency of the dominant spectral peak of each component.
    pub fundamentals: Vec<T>,
    /// `1/T`
    pub bin_width: T,
    /// `max − min` of `fundamentals`.
    pub fundamental_spread: T,
    pub shares_fundamental: bool,
    /// `ν/(2π)` of the driven mode.
    pub backbone_frequency: T,
    /// Sup over samples and non-driven modes of `|ỹ_k|`.
    pub cross_mode_max: T,
    pub driven_max: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NnmReport<T> {
    pub mode: usize,
    pub omegas: Vec<T>,
    pub eigen_residual: T,
    pub orthonormality_error: T,
    pub resonance: ResonanceReport,
    pub runs: Vec<NnmRun<T>>,
    /// Log-log fit of `cross_mode_max` against ε (needs ≥ 3 runs).
    pub cross_mode_fit: Option<SlopeFit<T>>,
}

/// Mode-initialized free motion of an N-DOF model: every component's
/// spectrum should share the driven fundamental and the non-driven modal
/// coordinates should scale as ε².
pub fn nnm_check<T: Real>(model: &ModalModel<T>, mode: usize, a1: T, epsilons: &[T], opts: &NnmOptions<T>) -> Result<NnmReport<T>> {
    if epsilons.is_empty() {
        return Err(Error::InsufficientData("no epsilons given".into()));
    }
    opts.tol.validate()?;
    let basis = solve_generalized_eigen(model)?;
    let resonance = check_internal_resonance(&basis.omegas, mode, T::lit(opts.expansion.resonance_tol));
    resonance.ensure_clear()?;
    let n = model.n();
    let runs = epsilons
        .par_iter()
        .map(|&e| -> Result<NnmRun<T>> {
            let m = with_epsilon_model(model, e);
            let red = modal_reduce(&m, &basis, mode)?;
            let exp = FreeNdofExpansion::new(a1, &red, &basis, opts.expansion)?;
            let window = T::TAU() / basis.omegas[mode] * T::from_usize_lossy(opts.periods);
            let dt = window / T::from_usize_lossy(opts.n_samples);
            let times: Vec<T> = (0..opts.n_samples).map(|j| T::from_usize_lossy(j) * dt).collect();
            let y0 = scaled_state(exp.displacement(T::zero()), exp.velocity(T::zero()), e);
            let sys = OdeSystem::FreeNdof(NdofSystem::new(m.clone())?);
            let states = integrate_sampled(&sys, T::zero(), &y0, &times, &IntegratorOptions::with_tol(opts.tol))?;
            let mut fundamentals = Vec::with_capacity(n);
            for i in 0..n {
                let x: Vec<T> = states.iter().map(|y| e * y[i]).collect();
                let spec = spectrum_from_samples(&x, window)?;
                let peak = dominant_peaks(&spec, 1, T::zero())
                    .peaks
                    .first()
                    .copied()
                    .ok_or_else(|| Error::InsufficientData(format!("no spectral peak in component {}", i + 1)))?;
                fundamentals.push(peak.frequency);
            }
            let (mut cross, mut driven) = (T::zero(), T::zero());
            for y in &states {
                let q = basis.to_modal(&m.mass, &y[..n]);
                for (k, &v) in q.iter().enumerate() {
                    if k == mode {
                        driven = driven.max((e * v).abs());
                    } else {
                        cross = cross.max((e * v).abs());
                    }
                }
            }
            let lo = fundamentals.iter().fold(T::infinity(), |a, &b| a.min(b));
            let hi = fundamentals.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let bin_width = T::one() / window;
            Ok(NnmRun {
                epsilon: e,
                fundamentals,
                bin_width,
                fundamental_spread: hi - lo,
                shares_fundamental: hi - lo <= bin_width,
                backbone_frequency: exp.driven.nu / T::TAU(),
                cross_mode_max: cross,
                driven_max: driven,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cross_mode_fit = if runs.len() >= 3 {
        let xs: Vec<T> = runs.iter().map(|r| r.epsilon).collect();
        let ys: Vec<T> = runs.iter().map(|r| r.cross_mode_max).collect();
        Some(fit_log_log(&xs, &ys)?)
    } else {
        None
    };
    Ok(NnmReport {
        mode,
        omegas: basis.omegas.clone(),
        eigen_residual: basis.max_residual(model),
        orthonormality_error: basis.orthonormality_error(&model.mass),
        resonance,
        runs,
        cross_mode_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_fit() {
        let xs = [0.02, 0.01, 0.005];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(3)).collect();
        let f = fit_log_log(&xs, &ys).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12);
        assert!((f.intercept - 3.0f64.ln()).abs() < 1e-10);
        assert!(f.stderr < 1e-10);
    }

    #[test]
    fn fit_needs_three_points() {
        assert!(matches!(fit_log_log(&[0.1, 0.2], &[1.0, 2.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn epsilons_must_span_factor_four() {
        assert!(check_epsilons(&[0.02, 0.015, 0.01]).is_err());
        assert_eq!(check_epsilons(&[0.005, 0.02, 0.01]).unwrap(), vec![0.02, 0.01, 0.005]);
    }
}

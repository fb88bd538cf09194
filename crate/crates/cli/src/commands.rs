//! One function per subcommand. Each renders its primary output into a
//! buffer and lists any internal residual check that failed.

use serde::Serialize;
use triscale::asymptotic_forced::{
    forced_initial_state, frequency_response_curve, leading_order_guess, resonance_peak, resonance_peak_ndof, response_curve_ndof,
    stationary_solve, stationary_solve_ndof, ForcedNdofExpansion, ResponseCurve, SlowFlowState,
};
use triscale::asymptotic_free::{FreeExpansion, FreeNdofExpansion, NdofExpansionOptions};
use triscale::io;
use triscale::model::{check_internal_resonance, modal_reduce, solve_generalized_eigen, ModalModel, OscillatorParams, ResonanceReport};
use triscale::spectral::{dominant_peaks, spectrum};
use triscale::timestep::{integrate, integrate_sampled, IntegratorOptions, NdofSystem, OdeSystem, Tolerances};
use triscale::validation::{
    convergence_order_forced, convergence_order_forced_ndof, convergence_order_free, cross_mode_variant_check_forced,
    cross_mode_variant_check_free, forced_stationary_accuracy, horizon_sensitivity, nnm_check, peak_location_check, perturbation_return,
    slow_flow_vs_envelope, ConvergenceOptions, HorizonRule, NnmOptions,
};

use crate::config::{RunConfig, System, ValidateConfig};
use crate::CliError;

/// Eigenvector residual bound of the modal commands.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-9;
/// M-orthonormality bound of the modal commands.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
/// Stationary residual bound relative to ε.
pub const STATIONARY_TOL_FACTOR: f64 = 1e-12;

#[derive(Default)]
pub struct Output {
    pub main: Vec<u8>,
    /// Secondary table (the peak list of `spectrum`).
    pub extra: Option<Vec<u8>>,
    pub failed_checks: Vec<String>,
}

impl Output {
    fn main(main: Vec<u8>) -> Self {
        Self { main, ..Default::default() }
    }
}

fn json<S: Serialize>(value: &S) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    io::write_json(&mut buf, value)?;
    Ok(buf)
}

fn single(cfg: &RunConfig, what: &str) -> Result<OscillatorParams<f64>, CliError> {
    match cfg.system()? {
        System::Single(p) => Ok(p),
        System::Multi(_) => Err(CliError::Config(format!("{what} needs \"params\""))),
    }
}

fn multi(cfg: &RunConfig, what: &str) -> Result<ModalModel<f64>, CliError> {
    match cfg.system()? {
        System::Multi(m) => Ok(m),
        System::Single(_) => Err(CliError::Config(format!("{what} needs \"model\""))),
    }
}

fn require_amplitude(cfg: &RunConfig) -> Result<f64, CliError> {
    cfg.scaled_amplitude()?.ok_or_else(|| CliError::Config("this command needs \"amplitude\" or \"physical_amplitude\"".into()))
}

fn sigma_range(cfg: &RunConfig) -> Result<(f64, f64), CliError> {
    let [lo, hi] = cfg.sigma_range.ok_or_else(|| CliError::Config("this command needs \"sigma_range\"".into()))?;
    Ok((lo, hi))
}

fn residual_failures(curve: &ResponseCurve<f64>, epsilon: f64) -> Vec<String> {
    curve
        .points
        .iter()
        .filter(|p| !(p.residual <= STATIONARY_TOL_FACTOR * epsilon))
        .map(|p| format!("stationary residual {:e} at sigma {} exceeds {:e}", p.residual, p.sigma, STATIONARY_TOL_FACTOR * epsilon))
        .collect()
}

pub fn backbone(cfg: &RunConfig) -> Result<Output, CliError> {
    let p = single(cfg, "backbone")?;
    let mut buf = Vec::new();
    io::write_backbone(&mut buf, &p, &cfg.amplitude_points()?)?;
    Ok(Output::main(buf))
}

pub fn response(cfg: &RunConfig) -> Result<Output, CliError> {
    let range = sigma_range(cfg)?;
    let n = cfg.n_points.unwrap_or(200);
    let (curve, params) = match cfg.system()? {
        System::Single(p) => (frequency_response_curve(&p, range, n)?, p),
        System::Multi(m) => {
            let b = solve_generalized_eigen(&m)?;
            let r = modal_reduce(&m, &b, cfg.mode)?;
            (response_curve_ndof(&r, &b, range, n)?, r.effective_params(0.0))
        }
    };
    let mut buf = Vec::new();
    io::write_response_curve(&mut buf, &curve, &params)?;
    Ok(Output { main: buf, extra: None, failed_checks: residual_failures(&curve, params.epsilon) })
}

pub fn peak(cfg: &RunConfig) -> Result<Output, CliError> {
    let pk = match cfg.system()? {
        System::Single(p) => resonance_peak(&p)?,
        System::Multi(m) => {
            let b = solve_generalized_eigen(&m)?;
            resonance_peak_ndof(&modal_reduce(&m, &b, cfg.mode)?, &b)?
        }
    };
    Ok(Output::main(json(&pk)?))
}

/// Governing system and scaled initial state of a simulation.
struct Run {
    system: OdeSystem<f64>,
    y0: Vec<f64>,
    epsilon: f64,
}

fn stationary_start(p: &OscillatorParams<f64>) -> Result<SlowFlowState<f64>, CliError> {
    let guess = leading_order_guess(p.sigma, p).ok_or_else(|| CliError::Config("stationary start needs f_m != 0".into()))?;
    Ok(stationary_solve(p.sigma, p, &guess)?.state())
}

fn physical_initial(cfg: &RunConfig, n: usize, eps: f64) -> Result<Option<Vec<f64>>, CliError> {
    let Some(init) = &cfg.initial else { return Ok(None) };
    if init.displacement.len() != n || init.velocity.len() != n {
        return Err(CliError::Config(format!("initial state needs {n} displacements and {n} velocities")));
    }
    Ok(Some(init.displacement.iter().chain(&init.velocity).map(|x| x / eps).collect()))
}

fn build_run(cfg: &RunConfig) -> Result<Run, CliError> {
    if cfg.initial.is_some() && cfg.scaled_amplitude()?.is_some() {
        return Err(CliError::Config("give either \"initial\" or an amplitude, not both".into()));
    }
    match cfg.system()? {
        System::Single(p) => {
            let e = p.epsilon;
            let driven = p.lambda != 0.0 || p.f_m != 0.0;
            let system = if driven { OdeSystem::Forced1Dof(p) } else { OdeSystem::Free1Dof(p) };
            let y0 = match (physical_initial(cfg, 1, e)?, cfg.scaled_amplitude()?) {
                (Some(y), _) => y,
                (None, Some(a)) => {
                    let (u, v) = FreeExpansion::new(a, p, cfg.order()?).initial_state();
                    vec![u / e, v / e]
                }
                (None, None) if p.f_m != 0.0 => {
                    let (u, v) = forced_initial_state(&stationary_start(&p)?, &p, cfg.order()?)?;
                    vec![u / e, v / e]
                }
                (None, None) => return Err(CliError::Config("free simulation needs \"initial\" or an amplitude".into())),
            };
            Ok(Run { system, y0, epsilon: e })
        }
        System::Multi(m) => {
            let e = m.epsilon;
            let n = m.n();
            let forced = m.force.iter().any(|&f| f != 0.0);
            let damped = m.eps_m != 0.0 || m.eps_k != 0.0;
            let basis = solve_generalized_eigen(&m)?;
            let red = modal_reduce(&m, &basis, cfg.mode)?;
            let sigma = cfg.sigma.unwrap_or(0.0);
            let y0 = match (physical_initial(cfg, n, e)?, cfg.scaled_amplitude()?) {
                (Some(y), _) => y,
                (None, Some(a)) => {
                    let exp = FreeNdofExpansion::new(a, &red, &basis, NdofExpansionOptions::default())?;
                    exp.displacement(0.0).into_iter().chain(exp.velocity(0.0)).map(|x| x / e).collect()
                }
                (None, None) if forced => {
                    let p = red.effective_params(sigma);
                    let pt = stationary_solve_ndof(sigma, &red, &basis, &stationary_start(&p)?)?;
                    let exp = ForcedNdofExpansion::new(&pt, &red, &basis, NdofExpansionOptions::default())?;
                    exp.displacement(0.0).into_iter().chain(exp.velocity(0.0)).map(|x| x / e).collect()
                }
                (None, None) => return Err(CliError::Config("free simulation needs \"initial\" or an amplitude".into())),
            };
            let system = NdofSystem::new(m)?;
            let system = if forced || damped {
                OdeSystem::ForcedNdof { system, forcing_frequency: red.omega + e * sigma }
            } else {
                OdeSystem::FreeNdof(system)
            };
            Ok(Run { system, y0, epsilon: e })
        }
    }
}

pub fn simulate(cfg: &RunConfig, tol: Tolerances<f64>) -> Result<Output, CliError> {
    let t_end = cfg.require_t_end()?;
    let dt = cfg.dt.unwrap_or(0.1);
    if !(dt > 0.0) || dt > t_end {
        return Err(CliError::Config(format!("dt = {dt} must lie in (0, t_end]")));
    }
    let run = build_run(cfg)?;
    let n = (t_end / dt).floor() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    let states = integrate_sampled(&run.system, 0.0, &run.y0, &times, &IntegratorOptions::with_tol(tol))?;
    let mut buf = Vec::new();
    io::write_trajectory(&mut buf, &times, &states, run.epsilon)?;
    Ok(Output::main(buf))
}

pub fn spectrum_cmd(cfg: &RunConfig, tol: Tolerances<f64>) -> Result<Output, CliError> {
    let t_end = cfg.require_t_end()?;
    let sc = &cfg.spectrum;
    let window = sc.window.unwrap_or(t_end);
    let run = build_run(cfg)?;
    if sc.component >= run.system.dofs() {
        return Err(CliError::Config(format!("component {} out of range", sc.component)));
    }
    let traj = integrate(&run.system, &run.y0, (0.0, t_end), &IntegratorOptions::with_tol(tol))?.scaled(run.epsilon);
    let spec = spectrum(&traj, sc.component, sc.n_samples, window)?;
    let peaks = dominant_peaks(&spec, sc.n_peaks, sc.floor);
    let mut main = Vec::new();
    io::write_spectrum(&mut main, &spec)?;
    let mut extra = Vec::new();
    io::write_peaks(&mut extra, &peaks)?;
    Ok(Output { main, extra: Some(extra), failed_checks: Vec::new() })
}

fn conv_opts(cfg: &RunConfig, gamma: Option<f64>, tol: Tolerances<f64>) -> Result<ConvergenceOptions<f64>, CliError> {
    let mut o = ConvergenceOptions { order: cfg.order()?, tol, ..Default::default() };
    if let Some(g) = gamma {
        o.gamma = g;
    }
    Ok(o)
}

pub fn validate(cfg: &RunConfig, tol: Tolerances<f64>) -> Result<Output, CliError> {
    let v = cfg.validate.as_ref().ok_or_else(|| CliError::Config("validate needs a \"validate\" block".into()))?;
    let mut failed = Vec::new();
    let body = match v {
        ValidateConfig::FreeConvergence { epsilons, gamma, long_horizon } => {
            let p = single(cfg, "free_convergence")?;
            let mut o = conv_opts(cfg, *gamma, tol)?;
            if *long_horizon {
                o.horizon = HorizonRule::GammaOverEps2;
            }
            json(&convergence_order_free(&p, require_amplitude(cfg)?, epsilons, &o)?)?
        }
        ValidateConfig::ForcedConvergence { epsilons, offset, gamma } => {
            let p = single(cfg, "forced_convergence")?;
            json(&convergence_order_forced(&p, epsilons, (offset[0], offset[1]), &conv_opts(cfg, *gamma, tol)?)?)?
        }
        ValidateConfig::ForcedNdofConvergence { epsilons, gamma } => {
            let m = multi(cfg, "forced_ndof_convergence")?;
            let sigma = cfg.sigma.unwrap_or(0.0);
            json(&convergence_order_forced_ndof(&m, cfg.mode, sigma, epsilons, &conv_opts(cfg, *gamma, tol)?)?)?
        }
        ValidateConfig::StationaryAccuracy { transient, window } => {
            let p = single(cfg, "stationary_accuracy")?;
            let r = forced_stationary_accuracy(&p, *transient, *window, tol)?;
            if !(r.point.residual <= STATIONARY_TOL_FACTOR * p.epsilon) {
                failed.push(format!("stationary residual {:e}", r.point.residual));
            }
            json(&r)?
        }
        ValidateConfig::PeakLocation { epsilons } => {
            let p = single(cfg, "peak_location")?;
            json(&peak_location_check(&p, epsilons, sigma_range(cfg)?, cfg.n_points.unwrap_or(400))?)?
        }
        ValidateConfig::Envelope { beta } => {
            let p = single(cfg, "envelope")?;
            let state = SlowFlowState::new(require_amplitude(cfg)?, *beta);
            json(&slow_flow_vs_envelope(&p, &state, cfg.require_t_end()?, tol)?)?
        }
        ValidateConfig::Return { perturbation } => {
            let p = single(cfg, "return")?;
            json(&perturbation_return(&p, (perturbation[0], perturbation[1]), cfg.require_t_end()?, tol)?)?
        }
        ValidateConfig::Horizon { epsilons, gamma } => {
            let p = single(cfg, "horizon")?;
            json(&horizon_sensitivity(&p, require_amplitude(cfg)?, epsilons, &conv_opts(cfg, *gamma, tol)?)?)?
        }
        ValidateConfig::Variants { periods } => {
            let m = multi(cfg, "variants")?;
            if m.force.iter().any(|&f| f != 0.0) {
                json(&cross_mode_variant_check_forced(&m, cfg.mode, cfg.sigma.unwrap_or(0.0), *periods, tol)?)?
            } else {
                json(&cross_mode_variant_check_free(&m, cfg.mode, require_amplitude(cfg)?, *periods, tol)?)?
            }
        }
        ValidateConfig::Nnm { epsilons, periods, n_samples } => {
            let m = multi(cfg, "nnm")?;
            let mut o = NnmOptions { tol, ..Default::default() };
            if let Some(p) = periods {
                o.periods = *p;
            }
            if let Some(n) = n_samples {
                o.n_samples = *n;
            }
            let r = nnm_check(&m, cfg.mode, require_amplitude(cfg)?, epsilons, &o)?;
            if !(r.eigen_residual < EIGEN_RESIDUAL_TOL) {
                failed.push(format!("eigen residual {:e}", r.eigen_residual));
            }
            if !(r.orthonormality_error < ORTHONORMALITY_TOL) {
                failed.push(format!("orthonormality error {:e}", r.orthonormality_error));
            }
            json(&r)?
        }
    };
    Ok(Output { main: body, extra: None, failed_checks: failed })
}

#[derive(Serialize)]
struct ModalSummary<'a> {
    omegas: &'a [f64],
    /// Row `i` holds mode shape `i`.
    mode_shapes: Vec<Vec<f64>>,
    max_residual: f64,
    orthonormality_error: f64,
    reduction: triscale::model::ModalReduction<f64>,
    resonance: ResonanceReport,
}

pub fn modal(cfg: &RunConfig) -> Result<Output, CliError> {
    let m = multi(cfg, "modal")?;
    let b = solve_generalized_eigen(&m)?;
    let red = modal_reduce(&m, &b, cfg.mode)?;
    let summary = ModalSummary {
        omegas: &b.omegas,
        mode_shapes: (0..b.n()).map(|k| b.phi(k)).collect(),
        max_residual: b.max_residual(&m),
        orthonormality_error: b.orthonormality_error(&m.mass),
        reduction: red,
        resonance: check_internal_resonance(&b.omegas, cfg.mode, NdofExpansionOptions::default().resonance_tol),
    };
    let mut failed = Vec::new();
    if !(summary.max_residual < EIGEN_RESIDUAL_TOL) {
        failed.push(format!("eigen residual {:e}", summary.max_residual));
    }
    if !(summary.orthonormality_error < ORTHONORMALITY_TOL) {
        failed.push(format!("orthonormality error {:e}", summary.orthonormality_error));
    }
    Ok(Output { main: json(&summary)?, extra: None, failed_checks: failed })
}

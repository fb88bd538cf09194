use triscale::model::{ModalModel, OscillatorParams};
use triscale::timestep::{integrate, integrate_sampled, sample_envelope, IntegratorOptions, NdofSystem, OdeRhs, OdeSystem, Tolerances};
use triscale::Error;

fn opts(rel: f64) -> IntegratorOptions<f64> {
    IntegratorOptions::with_tol(Tolerances::new(rel, (rel * 1e-2).max(1e-13)))
}

struct Harmonic;

impl OdeRhs<f64> for Harmonic {
    fn dim(&self) -> usize {
        2
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }
}

struct BlowUp;

impl OdeRhs<f64> for BlowUp {
    fn dim(&self) -> usize {
        1
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[0] * y[0];
    }
}

#[test]
fn harmonic_oscillator_dense_output() {
    let traj = integrate(&Harmonic, &[1.0, 0.0], (0.0, 50.0), &opts(1e-10)).unwrap();
    for i in 0..500 {
        let t = i as f64 * 0.1;
        let y = traj.interpolate(t).unwrap();
        assert!((y[0] - t.cos()).abs() < 1e-8, "t {t}");
        assert!((y[1] + t.sin()).abs() < 1e-8);
    }
    assert!(matches!(traj.interpolate(60.0), Err(Error::OutOfSpan { .. })));
}

#[test]
fn sampled_matches_stored_trajectory() {
    let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.37).collect();
    let s = integrate_sampled(&Harmonic, 0.0, &[1.0, 0.0], &times, &opts(1e-10)).unwrap();
    let traj = integrate(&Harmonic, &[1.0, 0.0], (0.0, times[99]), &opts(1e-10)).unwrap();
    for (t, y) in times.iter().zip(&s) {
        let z = traj.interpolate(*t).unwrap();
        assert!((y[0] - z[0]).abs() < 1e-14);
    }
    assert!(integrate_sampled(&Harmonic, 0.0, &[1.0, 0.0], &[1.0, 0.5], &opts(1e-10)).is_err());
}

#[test]
fn time_reversal_recovers_initial_state() {
    let sys = OdeSystem::Free1Dof(OscillatorParams::free(1.0, 1.0, 1.0, 0.1));
    let y0 = [1.0, 0.0];
    let fwd = integrate(&sys, &y0, (0.0, 100.0), &opts(1e-12)).unwrap();
    let end = fwd.state(fwd.len() - 1).to_vec();
    let back = integrate(&sys, &end, (100.0, 0.0), &opts(1e-12)).unwrap();
    let y = back.state(back.len() - 1);
    assert!((y[0] - 1.0).abs() < 1e-7 && y[1].abs() < 1e-7, "{y:?}");
    assert!(back.interpolate(50.0).is_ok());
}

#[test]
fn tightening_tolerance_reduces_error() {
    let mut last = f64::INFINITY;
    for rel in [1e-6, 1e-8, 1e-10] {
        let traj = integrate(&Harmonic, &[1.0, 0.0], (0.0, 100.0), &opts(rel)).unwrap();
        let err = (traj.state(traj.len() - 1)[0] - 100f64.cos()).abs();
        assert!(err < last, "rel {rel}: {err} vs {last}");
        last = err;
    }
}

#[test]
fn energy_is_conserved_for_free_system() {
    let sys = OdeSystem::Free1Dof(OscillatorParams::free(1.0, 1.0, 1.0, 0.1));
    let traj = integrate(&sys, &[1.0, 0.0], (0.0, 1000.0), &opts(1e-12)).unwrap();
    let e0 = sys.energy(traj.state(0)).unwrap();
    for i in 0..traj.len() {
        assert!((sys.energy(traj.state(i)).unwrap() - e0).abs() < 1e-9 * e0);
    }
    assert!(OdeSystem::Forced1Dof(OscillatorParams::free(1.0, 1.0, 1.0, 0.1)).energy(&[1.0, 0.0]).is_none());
}

#[test]
fn damped_linear_envelope() {
    let p = OscillatorParams { omega: 1.0, c: 0.0, d: 0.0, lambda: 0.5, epsilon: 0.01, f_m: 0.0, sigma: 0.0 };
    let sys = OdeSystem::Forced1Dof(p);
    let traj = integrate(&sys, &[1.0, 0.0], (0.0, 2000.0), &opts(1e-10)).unwrap();
    let (times, env) = sample_envelope(&traj, 0).unwrap();
    assert!(times.len() > 300);
    for (t, a) in times.iter().zip(&env) {
        let expected = (-0.0025 * t).exp();
        assert!(((a - expected) / expected).abs() < 0.01, "t {t}");
    }
}

#[test]
fn node_at_spring_mode_stays_linear() {
    let model = ModalModel::<f64>::chain(2, 1.0, 2, 1.0, 1.0, 0.1).unwrap();
    let sys = OdeSystem::FreeNdof(NdofSystem::new(model).unwrap());
    let s = 1.0 / 2f64.sqrt();
    // Mode (1, 1)/√2 has ω = 1 and leaves the nonlinear spring unstretched.
    let traj = integrate(&sys, &[s, s, 0.0, 0.0], (0.0, 200.0), &opts(1e-11)).unwrap();
    for i in 0..200 {
        let t = i as f64;
        let y = traj.interpolate(t).unwrap();
        assert!((y[0] - s * t.cos()).abs() < 1e-8 && (y[0] - y[1]).abs() < 1e-12);
    }
}

#[test]
fn forced_ndof_dimensions() {
    let mut model = ModalModel::<f64>::chain(3, 1.0, 1, 1.0, 1.0, 0.01).unwrap();
    model.force = vec![0.0, 0.0, 1.0];
    let sys = OdeSystem::ForcedNdof { system: NdofSystem::new(model).unwrap(), forcing_frequency: 0.8 };
    assert_eq!(sys.dofs(), 3);
    assert_eq!(sys.dim(), 6);
    assert_eq!(sys.kind(), "forced_ndof");
    let traj = integrate(&sys, &[0.0; 6], (0.0, 10.0), &opts(1e-10)).unwrap();
    assert!(traj.state(traj.len() - 1).iter().any(|x| x.abs() > 0.0));
}

#[test]
fn singular_solution_reports_underflow() {
    let e = integrate(&BlowUp, &[1.0], (0.0, 2.0), &opts(1e-8)).unwrap_err();
    assert!(matches!(e, Error::StepSizeUnderflow { .. } | Error::TooManySteps { .. }), "{e}");
    assert_eq!(e.exit_code(), 4);
}

#[test]
fn step_budget_is_enforced() {
    let o = IntegratorOptions { max_steps: 10, ..opts(1e-10) };
    assert!(matches!(integrate(&Harmonic, &[1.0, 0.0], (0.0, 1000.0), &o), Err(Error::TooManySteps { max_steps: 10, .. })));
}

#[test]
fn tolerance_range_is_checked() {
    assert!(Tolerances::new(1e-14, 1e-12).validate().is_err());
    assert!(Tolerances::new(1e-2, 1e-12).validate().is_err());
    assert!(Tolerances::new(1e-13, 1e-3).validate().is_ok());
    assert!(integrate(&Harmonic, &[1.0, 0.0], (0.0, 1.0), &opts(1e-1)).is_err());
}

use triscale::asymptotic_forced::{leading_order_guess, resonance_peak_ndof, stationary_solve_ndof, ForcedNdofExpansion};
use triscale::asymptotic_free::{CrossModeVariant, NdofExpansionOptions};
use triscale::linalg::Matrix;
use triscale::model::{modal_reduce, solve_generalized_eigen, ModalModel};
use triscale::timestep::Tolerances;
use triscale::validation::{
    convergence_order_forced_ndof, cross_mode_variant_check_forced, cross_mode_variant_check_free, ConvergenceOptions,
};
use triscale::Error;

fn forced_chain(n: usize) -> ModalModel<f64> {
    let mut m = ModalModel::<f64>::chain(n, 1.0, 1, 1.0, 1.0, 0.01).unwrap();
    m.eps_m = 0.5;
    m.force = vec![0.0; n];
    m.force[n - 1] = 1.0;
    m
}

#[test]
fn forced_ndof_convergence_is_third_order() {
    let r = convergence_order_forced_ndof(&forced_chain(3), 0, 0.0, &[0.02, 0.01, 0.005], &ConvergenceOptions::default()).unwrap();
    let s = r.fitted_slope.unwrap();
    eprintln!("forced 3-DOF errors {:?}, slope {s}", r.max_errors);
    assert!((s - 3.0).abs() <= 0.3, "slope {s}");
}

#[test]
fn chain_peak_amplitude_uses_modal_data() {
    let model = forced_chain(29);
    let b = solve_generalized_eigen(&model).unwrap();
    let r = modal_reduce(&model, &b, 0).unwrap();
    let pk = resonance_peak_ndof(&r, &b).unwrap();
    let expected = r.f_k[0] / (r.lambda_k[0] * b.omegas[0]);
    assert!((pk.a0 - expected).abs() < 1e-14 * expected.abs());
    assert!((r.lambda_k[0] - 0.5).abs() < 1e-15);
}

#[test]
fn forced_expansion_refuses_resonance() {
    let mut model = forced_chain(2);
    model.stiffness = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 9.0]]).unwrap();
    model.force = vec![1.0, 1.0];
    let b = solve_generalized_eigen(&model).unwrap();
    let r = modal_reduce(&model, &b, 0).unwrap();
    assert!(matches!(resonance_peak_ndof(&r, &b), Err(Error::InternalResonance { .. })));
    let guess = leading_order_guess(0.0, &r.effective_params(0.0)).unwrap();
    assert!(matches!(stationary_solve_ndof(0.0, &r, &b, &guess), Err(Error::InternalResonance { .. })));
}

#[test]
fn forced_reconstruction_invariant_under_sign_flip() {
    let model = forced_chain(4);
    let b = solve_generalized_eigen(&model).unwrap();
    let r = modal_reduce(&model, &b, 0).unwrap();
    let guess = leading_order_guess(0.2, &r.effective_params(0.2)).unwrap();
    let pt = stationary_solve_ndof(0.2, &r, &b, &guess).unwrap();
    let opts = NdofExpansionOptions { fundamental_terms: true, ..Default::default() };
    let reference = ForcedNdofExpansion::new(&pt, &r, &b, opts).unwrap();
    // Flipping a non-driven mode leaves the driven stationary point alone.
    let mut fb = b.clone();
    for i in 0..4 {
        fb.phis[(i, 2)] = -fb.phis[(i, 2)];
    }
    let fr = modal_reduce(&model, &fb, 0).unwrap();
    let exp = ForcedNdofExpansion::new(&pt, &fr, &fb, opts).unwrap();
    for t in [0.0, 1.0, 25.0] {
        for (x, y) in exp.displacement(t).iter().zip(&reference.displacement(t)) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}

#[test]
fn variant_report_free_motion() {
    let model = ModalModel::<f64>::chain(3, 1.0, 1, 1.0, 1.0, 0.01).unwrap();
    let r = cross_mode_variant_check_free(&model, 0, 1.0, 50, Tolerances::default()).unwrap();
    assert_eq!(r.rows.len(), 4);
    assert!(!r.forced);
    let best = &r.rows[r.best];
    assert!(r.rows.iter().all(|row| row.max_cross_error >= best.max_cross_error));
    assert_eq!(best.variant, CrossModeVariant::FreeDenominator);
    assert!(best.fundamental_terms);
    assert!(best.max_cross_error < 0.1 * best.max_cross_amplitude);
}

#[test]
fn variant_report_forced_motion() {
    let r = cross_mode_variant_check_forced(&forced_chain(3), 0, 0.0, 50, Tolerances::default()).unwrap();
    assert!(r.forced);
    let best = &r.rows[r.best];
    assert_eq!((best.variant, best.fundamental_terms), (CrossModeVariant::FreeDenominator, true));
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("free_denominator") || json.contains("FreeDenominator"));
}

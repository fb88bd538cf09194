use std::f64::consts::{PI, TAU};

use approx::assert_relative_eq;
use proptest::prelude::*;
use triscale::asymptotic_forced::{leading_order_guess, slow_flow_rhs, stationary_solve, wrap_phase, SlowFlowState};
use triscale::asymptotic_free::{backbone_frequency, evaluate_free_expansion, Order};
use triscale::linalg::Matrix;
use triscale::model::OscillatorParams;
use triscale::spectral::{fourier_coefficients, spectrum_from_samples};
use triscale::validation::fit_log_log;

fn free_params() -> impl Strategy<Value = OscillatorParams<f64>> {
    (0.3..3.0f64, -5.0..5.0f64, -2.0..2.0f64, 1e-3..0.1f64).prop_map(|(w, c, d, e)| OscillatorParams::free(w, c, d, e))
}

proptest! {
    #[test]
    fn wrapped_phase_is_congruent(b in -1e3..1e3f64) {
        let w = wrap_phase(b);
        prop_assert!(w > -PI && w <= PI);
        let k = (b - w) / TAU;
        prop_assert!((k - k.round()).abs() < 1e-9);
    }

    #[test]
    fn backbone_is_even_in_amplitude(p in free_params(), a in 0.0..3.0f64) {
        prop_assert_eq!(backbone_frequency(a, &p), backbone_frequency(-a, &p));
    }

    #[test]
    fn expansion_odd_under_joint_sign_change(p in free_params(), a in 0.1..2.0f64, t in 0.0..500.0f64) {
        let flipped = OscillatorParams { c: -p.c, ..p };
        let u = evaluate_free_expansion(t, a, &p, Order::Second);
        let v = evaluate_free_expansion(t, -a, &flipped, Order::Second);
        prop_assert!((u + v).abs() <= 1e-15 * (1.0 + u.abs()));
    }

    #[test]
    fn slow_flow_is_two_pi_periodic(a in 0.1..3.0f64, beta in -PI..PI, sigma in -3.0..3.0f64) {
        let p = OscillatorParams { omega: 1.0, c: 1.0, d: 1.0, lambda: 0.5, epsilon: 0.01, f_m: 1.0, sigma };
        let r0 = slow_flow_rhs(&SlowFlowState { a, beta }, &p).unwrap();
        let r1 = slow_flow_rhs(&SlowFlowState { a, beta: beta + TAU }, &p).unwrap();
        prop_assert!((r0.0 - r1.0).abs() < 1e-15 && (r0.1 - r1.1).abs() < 1e-13);
    }

    #[test]
    fn lower_branch_solves_to_tolerance(sigma in -3.0..0.8f64, eps in 1e-3..0.03f64) {
        let p = OscillatorParams { omega: 1.0, c: 1.0, d: 1.0, lambda: 0.5, epsilon: eps, f_m: 1.0, sigma: 0.0 };
        let pt = stationary_solve(sigma, &p, &leading_order_guess(sigma, &p).unwrap()).unwrap();
        prop_assert!(pt.residual <= 1e-12 * eps);
        prop_assert!(pt.stable);
    }

    #[test]
    fn power_law_fit_is_exact(slope in 0.5..4.0f64, c in 0.01..100.0f64) {
        let xs = [0.04, 0.02, 0.01, 0.005];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| c * x.powf(slope)).collect();
        let fit = fit_log_log(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, slope, epsilon = 1e-10);
        prop_assert!(fit.stderr < 1e-8);
    }

    #[test]
    fn parseval_holds(x in prop::collection::vec(-10.0..10.0f64, 64)) {
        let ms = x.iter().map(|v| v * v).sum::<f64>() / 64.0;
        let spec = spectrum_from_samples(&x, 3.0).unwrap();
        assert_relative_eq!(spec.mean_square(), ms, max_relative = 1e-12, epsilon = 1e-14);
    }

    #[test]
    fn fourier_coefficients_are_linear(
        x in prop::collection::vec(-1.0..1.0f64, 32),
        y in prop::collection::vec(-1.0..1.0f64, 32),
        s in -3.0..3.0f64,
    ) {
        let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + s * b).collect();
        let (cx, cy, cm) = (fourier_coefficients(&x).unwrap(), fourier_coefficients(&y).unwrap(), fourier_coefficients(&mix).unwrap());
        for k in 0..cx.len() {
            prop_assert!((cm[k] - (cx[k] + cy[k] * s)).norm() < 1e-12);
        }
    }

    #[test]
    fn cholesky_reconstructs_spd(entries in prop::collection::vec(-1.0..1.0f64, 16)) {
        // B Bᵀ + 4I is symmetric positive definite.
        let b = Matrix::from_rows(&entries.chunks(4).map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let mut a = b.matmul(&b.transpose()).unwrap();
        for i in 0..4 {
            a[(i, i)] += 4.0;
        }
        let l = a.cholesky().unwrap();
        let back = l.matmul(&l.transpose()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((back[(i, j)] - a[(i, j)]).abs() < 1e-12);
            }
        }
    }
}

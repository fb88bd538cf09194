use std::f64::consts::TAU;

use triscale::model::OscillatorParams;
use triscale::spectral::{dominant_peaks, fourier_coefficients, resample, spectrum, spectrum_from_samples};
use triscale::timestep::{integrate, IntegratorOptions, OdeSystem, Tolerances};
use triscale::Error;

fn sample(f: impl Fn(f64) -> f64, n: usize, window: f64) -> Vec<f64> {
    (0..n).map(|j| f(j as f64 * window / n as f64)).collect()
}

#[test]
fn two_on_bin_sinusoids() {
    let (n, window) = (1024, 100.0);
    let x = sample(|t| (TAU * 0.1 * t).sin() + 0.5 * (TAU * 0.3 * t).cos(), n, window);
    let spec = spectrum_from_samples(&x, window).unwrap();
    assert_eq!(spec.frequencies.len(), n / 2 + 1);
    assert!((spec.resolution() - 0.01).abs() < 1e-15);
    let peaks = dominant_peaks(&spec, 5, 1e-6);
    assert_eq!(peaks.len(), 2);
    assert!((peaks.peaks[0].frequency - 0.1).abs() < 1e-9);
    assert!((peaks.peaks[0].magnitude - 1.0).abs() < 1e-12);
    assert_eq!(peaks.peaks[0].bin_index, 10);
    assert!((peaks.peaks[1].frequency - 0.3).abs() < 1e-9);
    assert!((peaks.peaks[1].magnitude - 0.5).abs() < 1e-12);
}

#[test]
fn parseval_identity() {
    let (n, window) = (2048, 37.0);
    let x = sample(|t| 0.3 + (1.7 * t).sin() + 0.2 * (5.1 * t).cos() + 0.05 * (t * t * 0.01).sin(), n, window);
    let ms = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let spec = spectrum_from_samples(&x, window).unwrap();
    assert!((spec.mean_square() - ms).abs() < 1e-12 * ms);
}

#[test]
fn coefficients_are_linear() {
    let n = 256;
    let a = sample(|t| (2.3 * t).sin(), n, 10.0);
    let b = sample(|t| (0.7 * t).cos() + t * 0.01, n, 10.0);
    let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
    let (ca, cb, cm) = (fourier_coefficients(&a).unwrap(), fourier_coefficients(&b).unwrap(), fourier_coefficients(&mix).unwrap());
    for k in 0..ca.len() {
        assert!((cm[k] - (ca[k] * 2.0 - cb[k] * 3.0)).norm() < 1e-12);
    }
}

#[test]
fn dc_and_nyquist_are_not_doubled() {
    let x: Vec<f64> = (0..16).map(|j| 2.0 + if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let c = fourier_coefficients(&x).unwrap();
    assert!((c[0].re - 2.0).abs() < 1e-14);
    assert!((c[8].re - 1.0).abs() < 1e-14);
}

#[test]
fn longer_window_sharpens_off_bin_estimate() {
    let f0 = 0.123456;
    let err = |window: f64, n: usize| {
        let x = sample(|t| (TAU * f0 * t).cos(), n, window);
        let pk = dominant_peaks(&spectrum_from_samples(&x, window).unwrap(), 1, 1e-3).peaks[0];
        (pk.frequency - f0).abs()
    };
    let (e1, e2) = (err(200.0, 1024), err(400.0, 2048));
    assert!(e1 < 0.5 / 200.0);
    assert!(e2 <= 0.5 * e1, "{e1} -> {e2}");
}

#[test]
fn rejects_bad_lengths() {
    assert!(matches!(fourier_coefficients(&[1.0; 100]), Err(Error::InvalidParams(_))));
    assert!(fourier_coefficients(&[1.0; 2]).is_err());
    assert!(spectrum_from_samples(&[1.0; 8], 0.0).is_err());
}

#[test]
fn trajectory_spectrum_of_linear_oscillator() {
    let sys = OdeSystem::Free1Dof(OscillatorParams::free(1.0, 0.0, 0.0, 0.01));
    let window = 100.0 * TAU;
    let traj = integrate(&sys, &[1.0, 0.0], (0.0, window + 10.0), &IntegratorOptions::with_tol(Tolerances::default())).unwrap();
    let spec = spectrum(&traj, 0, 4096, window).unwrap();
    let peaks = dominant_peaks(&spec, 3, 1e-3);
    assert_eq!(peaks.len(), 1);
    assert!((peaks.peaks[0].frequency - 1.0 / TAU).abs() < 1e-6);
    assert!((peaks.peaks[0].magnitude - 1.0).abs() < 1e-6);
    assert!(matches!(resample(&traj, 0, 4096, 2.0 * window), Err(Error::InsufficientData(_))));
    assert!(matches!(resample(&traj, 2, 4096, window), Err(Error::Dimension(_))));
}

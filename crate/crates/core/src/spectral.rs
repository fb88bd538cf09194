//! Fourier analysis of trajectories: one-sided amplitude spectra and
//! dominant-peak extraction with log-quadratic frequency refinement.

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::scalar::lit;
use crate::timestep::Trajectory;
use crate::{Error, Real, Result};

/// One-sided amplitude spectrum on the grid `k/T`, `k = 0..=n/2`.
/// A unit-amplitude sinusoid centred on a bin has magnitude 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum<T> {
    pub frequencies: Vec<T>,
    pub magnitudes: Vec<T>,
    pub window_length: T,
}

impl<T: Real> Spectrum<T> {
    /// Bin width `1/T`.
    pub fn resolution(&self) -> T {
        T::one() / self.window_length
    }

    /// Mean square of the sampled signal, reconstructed from the one-sided
    /// magnitudes.
    pub fn mean_square(&self) -> T {
        let m = &self.magnitudes;
        let last = m.len() - 1;
        let mut s = m[0] * m[0] + m[last] * m[last];
        for &v in &m[1..last] {
            s += v * v * lit(0.5);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralPeak<T> {
    /// Refined ordinary frequency.
    pub frequency: T,
    /// Magnitude of the peak bin.
    pub magnitude: T,
    pub bin_index: usize,
}

/// Peaks in descending magnitude.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakList<T> {
    pub peaks: Vec<SpectralPeak<T>>,
}

impl<T: Real> PeakList<T> {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }
}

fn check_pow2(n: usize) -> Result<()> {
    if n < 4 || !n.is_power_of_two() {
        return Err(Error::InvalidParams(format!("n_samples = {n} must be a power of two >= 4")));
    }
    Ok(())
}

/// One-sided complex Fourier coefficients `α_k`, `k = 0..=n/2`, scaled so
/// that `|α_k|` is the amplitude of the matching sinusoid (DC and Nyquist
/// are not doubled).
pub fn fourier_coefficients<T: Real>(samples: &[T]) -> Result<Vec<Complex<T>>> {
    let n = samples.len();
    check_pow2(n)?;
    let mut buf: Vec<Complex<T>> = samples.iter().map(|&x| Complex::new(x, T::zero())).collect();
    FftPlanner::<T>::new().plan_fft_forward(n).process(&mut buf);
    let nf = T::from_usize_lossy(n);
    let half = n / 2;
    buf.truncate(half + 1);
    for (k, c) in buf.iter_mut().enumerate() {
        let scale = if k == 0 || k == half { T::one() } else { lit(2.0) };
        *c *= scale / nf;
    }
    Ok(buf)
}

/// Spectrum of uniformly spaced samples covering a window of length `T`
/// (sample spacing `T/n`, the last sample at `T − T/n`).
pub fn spectrum_from_samples<T: Real>(samples: &[T], window_length: T) -> Result<Spectrum<T>> {
    if !(window_length > T::zero()) {
        return Err(Error::InvalidParams("window length must be positive".into()));
    }
    let magnitudes: Vec<T> = fourier_coefficients(samples)?.iter().map(|c| c.norm()).collect();
    let frequencies = (0..magnitudes.len()).map(|k| T::from_usize_lossy(k) / window_length).collect();
    Ok(Spectrum { frequencies, magnitudes, window_length })
}

/// Uniform samples of one component over the final `window_length` of the
/// trajectory, taken from the dense output.
pub fn resample<T: Real>(traj: &Trajectory<T>, component: usize, n_samples: usize, window_length: T) -> Result<Vec<T>> {
    check_pow2(n_samples)?;
    if component >= traj.dim() {
        return Err(Error::Dimension(format!("component {component} >= state dimension {}", traj.dim())));
    }
    let span = traj.t_end() - traj.t_start();
    if !(window_length > T::zero()) || window_length > span * (T::one() + lit(1e-12)) {
        return Err(Error::InsufficientData(format!("window {window_length} longer than trajectory span {span}")));
    }
    let t0 = (traj.t_end() - window_length).max(traj.t_start());
    let dt = window_length / T::from_usize_lossy(n_samples);
    let mut buf = vec![T::zero(); traj.dim()];
    let mut out = Vec::with_capacity(n_samples);
    for j in 0..n_samples {
        traj.interpolate_into(t0 + T::from_usize_lossy(j) * dt, &mut buf)?;
        out.push(buf[component]);
    }
    Ok(out)
}

/// Resamples the final `window_length` of a trajectory via dense output and
/// returns its rectangular-window spectrum.
pub fn spectrum<T: Real>(traj: &Trajectory<T>, component: usize, n_samples: usize, window_length: T) -> Result<Spectrum<T>> {
    let samples = resample(traj, component, n_samples, window_length)?;
    spectrum_from_samples(&samples, window_length)
}

/// Up to `n` interior local maxima above `floor·max` (max over non-DC bins),
/// at least 2 bins apart, refined by a parabola through the log-magnitudes
/// of the three bins around each maximum. Magnitudes are the bin values.
pub fn dominant_peaks<T: Real>(spec: &Spectrum<T>, n: usize, floor: T) -> PeakList<T> {
    let m = &spec.magnitudes;
    if m.len() < 3 || n == 0 {
        return PeakList { peaks: Vec::new() };
    }
    let top = m[1..].iter().fold(T::zero(), |a, &b| a.max(b));
    let thresh = floor * top;
    let mut cand: Vec<usize> =
        (1..m.len() - 1).filter(|&i| m[i] > m[i - 1] && m[i] >= m[i + 1] && m[i] > thresh && m[i] > T::zero()).collect();
    cand.sort_by(|&a, &b| m[b].partial_cmp(&m[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::new();
    for i in cand {
        if chosen.iter().all(|&j| i.abs_diff(j) >= 2) {
            chosen.push(i);
            if chosen.len() == n {
                break;
            }
        }
    }
    let tiny = T::min_positive_value();
    let peaks = chosen
        .into_iter()
        .map(|i| {
            // Neighbours at round-off level carry no shape information.
            let negligible = m[i - 1].max(m[i + 1]) <= lit::<T>(1e-9) * m[i];
            let (la, lb, lc) = (m[i - 1].max(tiny).ln(), m[i].ln(), m[i + 1].max(tiny).ln());
            let den = la - lit::<T>(2.0) * lb + lc;
            let delta = if den < T::zero() && !negligible { lit::<T>(0.5) * (la - lc) / den } else { T::zero() };
            let delta = delta.max(lit(-0.5)).min(lit(0.5));
            SpectralPeak { frequency: (T::from_usize_lossy(i) + delta) / spec.window_length, magnitude: m[i], bin_index: i }
        })
        .collect();
    PeakList { peaks }
}

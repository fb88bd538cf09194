//! Forced, damped slow flow: amplitude/phase equations truncated at ε²,
//! stationary solutions and their stability, frequency response curves,
//! the closed-form primary-resonance peak and the periodic expansion.
//!
//! The internal phase variable is `β`; the plotted phase `γ = −β` only
//! appears in serialized output.

use serde::Serialize;

use crate::asymptotic_free::{cross_mode_coefficients, CrossModeVariant, NdofExpansionOptions, Order};
use crate::model::{check_internal_resonance, Eigenbasis, ModalReduction, OscillatorParams};
use crate::scalar::lit;
use crate::solve::{newton_dogleg, NewtonOptions};
use crate::timestep::{IntegratorOptions, OdeRhs, Tolerances, Trajectory};
use crate::{Error, Real, Result};

/// Wraps a phase into `(−π, π]`.
pub fn wrap_phase<T: Real>(beta: T) -> T {
    let two_pi = T::TAU();
    let mut b = beta - two_pi * ((beta + T::PI()) / two_pi).floor();
    if b <= -T::PI() {
        b += two_pi;
    }
    if b > T::PI() {
        b -= two_pi;
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlowFlowState<T> {
    pub a: T,
    /// Wrapped to `(−π, π]`.
    pub beta: T,
}

impl<T: Real> SlowFlowState<T> {
    pub fn new(a: T, beta: T) -> Self {
        Self { a, beta: wrap_phase(beta) }
    }
}

fn check_amplitude<T: Real>(a: T, params: &OscillatorParams<T>) -> Result<()> {
    let floor = params.amplitude_floor();
    if !a.is_finite() || a < floor || (params.f_m != T::zero() && a <= T::zero()) {
        return Err(Error::InvalidParams(format!("amplitude {a} below the floor {floor}")));
    }
    Ok(())
}

/// Slow-flow rates divided by ε, `G = (ε¹ part) + ε·(ε² part)`, returned as
/// the two parts separately. `sigma` overrides `params.sigma`.
fn scaled_parts<T: Real>(params: &OscillatorParams<T>, sigma: T, a: T, beta: T) -> ([T; 2], [T; 2]) {
    let OscillatorParams { omega: w, c, d, lambda: l, f_m: f, .. } = *params;
    let (sb, cb) = beta.sin_cos();
    let n = |x: f64| lit::<T>(x);
    let w2 = w * w;
    let w3 = w2 * w;
    let a2 = a * a;
    let forced = f != T::zero();

    let mut g1 = -l * a / n(2.0);
    let mut g2 = -sigma + n(3.0) * d * a2 / (n(8.0) * w);
    let mut s1 = n(3.0) * d * l * a2 * a / (n(16.0) * w2);
    let mut s2 = -l * l / (n(8.0) * w) - n(15.0) * d * d * a2 * a2 / (n(256.0) * w3) - n(5.0) * c * c * a2 / (n(12.0) * w3);
    if forced {
        g1 -= f * sb / (n(2.0) * w);
        g2 -= f * cb / (n(2.0) * a * w);
        s1 += sigma * f * sb / (n(4.0) * w2) + l * f * cb / (n(8.0) * w2) + n(9.0) * d * a2 * f * sb / (n(32.0) * w3);
        s2 += sigma * f * cb / (n(4.0) * w2 * a) + n(3.0) * d * a * f * cb / (n(32.0) * w3) - l * f * sb / (n(8.0) * w2 * a);
    }
    ([g1, g2], [s1, s2])
}

/// `G = g/ε` at detuning `sigma`.
fn scaled_residual<T: Real>(params: &OscillatorParams<T>, sigma: T, a: T, beta: T) -> [T; 2] {
    let (g, s) = scaled_parts(params, sigma, a, beta);
    let e = params.epsilon;
    [g[0] + e * s[0], g[1] + e * s[1]]
}

/// Jacobian of `G` with columns `(σ, a, β)`: analytic for the ε¹ part,
/// central differences for the ε² correction.
fn scaled_jacobian<T: Real>(params: &OscillatorParams<T>, sigma: T, a: T, beta: T) -> [[T; 3]; 2] {
    let OscillatorParams { omega: w, d, lambda: l, f_m: f, epsilon: e, .. } = *params;
    let (sb, cb) = beta.sin_cos();
    let n = |x: f64| lit::<T>(x);
    let mut j = [[T::zero(), -l / n(2.0), -f * cb / (n(2.0) * w)], [-T::one(), n(3.0) * d * a / (n(4.0) * w), f * sb / (n(2.0) * a * w)]];
    if f != T::zero() {
        j[1][1] += f * cb / (n(2.0) * a * a * w);
    }
    let x = [sigma, a, beta];
    for col in 0..3 {
        let h = n(1e-6) * x[col].abs().max(T::one());
        let mut xp = x;
        let mut xm = x;
        xp[col] += h;
        xm[col] -= h;
        let (_, sp) = scaled_parts(params, xp[0], xp[1], xp[2]);
        let (_, sm) = scaled_parts(params, xm[0], xm[1], xm[2]);
        for row in 0..2 {
            j[row][col] += e * (sp[row] - sm[row]) / (n(2.0) * h);
        }
    }
    j
}

/// `(da/dt, dβ/dt)` of the slow flow truncated at ε².
pub fn slow_flow_rhs<T: Real>(state: &SlowFlowState<T>, params: &OscillatorParams<T>) -> Result<(T, T)> {
    check_amplitude(state.a, params)?;
    let g = scaled_residual(params, params.sigma, state.a, state.beta);
    Ok((params.epsilon * g[0], params.epsilon * g[1]))
}

/// The slow flow as an ODE in `(a, β)` with `β` left unwrapped.
#[derive(Debug, Clone, Copy)]
pub struct SlowFlowSystem<T> {
    pub params: OscillatorParams<T>,
}

impl<T: Real> OdeRhs<T> for SlowFlowSystem<T> {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: T, y: &[T], dy: &mut [T]) {
        let g = scaled_residual(&self.params, self.params.sigma, y[0], y[1]);
        dy[0] = self.params.epsilon * g[0];
        dy[1] = self.params.epsilon * g[1];
    }
}

/// Dense slow-flow trajectory; phases are wrapped on access.
#[derive(Debug, Clone)]
pub struct SlowFlowTrajectory<T> {
    pub raw: Trajectory<T>,
}

impl<T: Real> SlowFlowTrajectory<T> {
    pub fn times(&self) -> &[T] {
        self.raw.times()
    }

    pub fn state(&self, i: usize) -> SlowFlowState<T> {
        let s = self.raw.state(i);
        SlowFlowState::new(s[0], s[1])
    }

    pub fn state_at(&self, t: T) -> Result<SlowFlowState<T>> {
        let s = self.raw.interpolate(t)?;
        Ok(SlowFlowState::new(s[0], s[1]))
    }

    /// Unwrapped `(a, β)` at `t`.
    pub fn unwrapped_at(&self, t: T) -> Result<(T, T)> {
        let s = self.raw.interpolate(t)?;
        Ok((s[0], s[1]))
    }

    pub fn final_state(&self) -> SlowFlowState<T> {
        self.state(self.raw.len() - 1)
    }
}

/// Integrates the slow flow from `state0` over `[0, t_end]`. Crossing the
/// amplitude floor aborts with the time reached.
pub fn integrate_slow_flow<T: Real>(
    state0: &SlowFlowState<T>,
    params: &OscillatorParams<T>,
    t_end: T,
    tol: Tolerances<T>,
) -> Result<SlowFlowTrajectory<T>> {
    params.validate()?;
    check_amplitude(state0.a, params)?;
    let sys = SlowFlowSystem { params: *params };
    let floor = params.amplitude_floor();
    let forced = params.f_m != T::zero();
    let opts = IntegratorOptions::with_tol(tol);
    let mut times = vec![T::zero()];
    let mut states = vec![state0.a, state0.beta];
    let mut dense = Vec::new();
    let res = crate::timestep::integrate_observed(&sys, T::zero(), &[state0.a, state0.beta], t_end, &opts, |s| {
        let a = s.y_new[0];
        if a < floor || (forced && a <= T::zero()) || !a.is_finite() {
            return Err(Error::AmplitudeFloor { a: a.as_f64(), floor: floor.as_f64(), t: s.t_new().as_f64() });
        }
        times.push(s.t_new());
        states.extend_from_slice(s.y_new);
        dense.extend_from_slice(s.coefficients());
        Ok(())
    });
    res?;
    Ok(SlowFlowTrajectory { raw: Trajectory::from_parts(2, times, states, dense)? })
}

/// Stationary point of the slow flow with its stability data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryPoint<T> {
    pub sigma: T,
    pub a: T,
    pub beta: T,
    /// `max(|g₁|, |g₂|)` of the unscaled slow flow.
    pub residual: T,
    pub trace_j: T,
    pub det_j: T,
    pub eig_real: [T; 2],
    pub stable: bool,
}

impl<T: Real> StationaryPoint<T> {
    pub fn state(&self) -> SlowFlowState<T> {
        SlowFlowState { a: self.a, beta: self.beta }
    }

    /// Plotted phase `γ = −β`.
    pub fn gamma(&self) -> T {
        -self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    /// Converged when `max|g| <= tol_factor·ε`.
    pub tol_factor: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self { tol_factor: lit(1e-12), max_iter: 100 }
    }
}

/// Central-difference Jacobian of the full slow flow at `(a, β)`,
/// step `1e-7·max(1, |a|)`.
pub fn numerical_jacobian<T: Real>(params: &OscillatorParams<T>, sigma: T, a: T, beta: T) -> [[T; 2]; 2] {
    let h = lit::<T>(1e-7) * a.abs().max(T::one());
    let e = params.epsilon;
    let f = |a: T, b: T| {
        let g = scaled_residual(params, sigma, a, b);
        [e * g[0], e * g[1]]
    };
    let (ap, am) = (f(a + h, beta), f(a - h, beta));
    let (bp, bm) = (f(a, beta + h), f(a, beta - h));
    let two_h = lit::<T>(2.0) * h;
    [[(ap[0] - am[0]) / two_h, (bp[0] - bm[0]) / two_h], [(ap[1] - am[1]) / two_h, (bp[1] - bm[1]) / two_h]]
}

fn eigen_real_parts<T: Real>(tr: T, det: T) -> ([T; 2], [T; 2]) {
    let half = tr * lit(0.5);
    let disc = half * half - det;
    if disc >= T::zero() {
        let s = disc.sqrt();
        ([half - s, half + s], [T::zero(), T::zero()])
    } else {
        let s = (-disc).sqrt();
        ([half, half], [-s, s])
    }
}

fn finish_point<T: Real>(params: &OscillatorParams<T>, sigma: T, a: T, beta: T) -> StationaryPoint<T> {
    let g = scaled_residual(params, sigma, a, beta);
    let residual = params.epsilon * g[0].abs().max(g[1].abs());
    let j = numerical_jacobian(params, sigma, a, beta);
    let trace_j = j[0][0] + j[1][1];
    let det_j = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let (eig_real, _) = eigen_real_parts(trace_j, det_j);
    let stable = eig_real[0] < T::zero() && eig_real[1] < T::zero();
    StationaryPoint { sigma, a, beta: wrap_phase(beta), residual, trace_j, det_j, eig_real, stable }
}

/// Which variable is held fixed while solving for the other two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Solve for `(a, β)` at fixed `σ`.
    Sigma,
    /// Solve for `(σ, β)` at fixed `a`.
    Amplitude,
}

/// Newton/dogleg solve of `G = 0` with one of `(σ, a)` held fixed.
/// `x` is `(σ, a, β)`; returns the converged triple or the best iterate.
fn solve_fixed<T: Real>(
    params: &OscillatorParams<T>,
    fixed: SweepVariable,
    x: [T; 3],
    opts: &SolverOptions<T>,
) -> std::result::Result<[T; 3], ([T; 3], T)> {
    let floor = params.amplitude_floor();
    let forced = params.f_m != T::zero();
    let free = match fixed {
        SweepVariable::Sigma => [1usize, 2],
        SweepVariable::Amplitude => [0usize, 2],
    };
    let assemble = |v: &[T]| {
        let mut full = x;
        full[free[0]] = v[0];
        full[free[1]] = v[1];
        full
    };
    let ok = |v: &[T]| {
        let f = assemble(v);
        f[1].is_finite() && f[1] >= floor && (!forced || f[1] > T::zero())
    };
    let fun = |v: &[T]| {
        let f = assemble(v);
        let g = scaled_residual(params, f[0], f[1], f[2]);
        Some(vec![g[0], g[1]])
    };
    let jac = |v: &[T]| {
        let f = assemble(v);
        let j = scaled_jacobian(params, f[0], f[1], f[2]);
        Some(vec![vec![j[0][free[0]], j[0][free[1]]], vec![j[1][free[0]], j[1][free[1]]]])
    };
    let out = newton_dogleg(fun, jac, ok, &[x[free[0]], x[free[1]]], NewtonOptions { tol: opts.tol_factor, max_iter: opts.max_iter });
    let full = assemble(&out.x);
    if out.converged {
        Ok(full)
    } else {
        Err((full, out.residual * params.epsilon))
    }
}

/// Stationary point at detuning `sigma` starting from `guess`.
pub fn stationary_solve<T: Real>(sigma: T, params: &OscillatorParams<T>, guess: &SlowFlowState<T>) -> Result<StationaryPoint<T>> {
    stationary_solve_with(sigma, params, guess, &SolverOptions::default())
}

pub fn stationary_solve_with<T: Real>(
    sigma: T,
    params: &OscillatorParams<T>,
    guess: &SlowFlowState<T>,
    opts: &SolverOptions<T>,
) -> Result<StationaryPoint<T>> {
    let params = params.with_sigma(sigma);
    params.validate()?;
    check_amplitude(guess.a, &params)?;
    match solve_fixed(&params, SweepVariable::Sigma, [sigma, guess.a, guess.beta], opts) {
        Ok(x) => Ok(finish_point(&params, x[0], x[1], x[2])),
        Err((best, residual)) => Err(Error::NoConvergence {
            iterations: opts.max_iter,
            residual: residual.as_f64(),
            best: best.iter().map(|v| v.as_f64()).collect(),
        }),
    }
}

/// Stationary point at fixed amplitude `a`, solving for `(σ, β)`.
pub fn stationary_solve_at_amplitude<T: Real>(
    a: T,
    params: &OscillatorParams<T>,
    sigma_guess: T,
    beta_guess: T,
    opts: &SolverOptions<T>,
) -> Result<StationaryPoint<T>> {
    params.validate()?;
    check_amplitude(a, params)?;
    match solve_fixed(params, SweepVariable::Amplitude, [sigma_guess, a, beta_guess], opts) {
        Ok(x) => Ok(finish_point(&params.with_sigma(x[0]), x[0], x[1], x[2])),
        Err((best, residual)) => Err(Error::NoConvergence {
            iterations: opts.max_iter,
            residual: residual.as_f64(),
            best: best.iter().map(|v| v.as_f64()).collect(),
        }),
    }
}

/// Leading-order and numerical stability data of a stationary point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport<T> {
    /// `−λε`
    pub analytic_trace: T,
    /// `ε²[λ²/4 + σ² − 3dσā²/(2ω) + 27d²ā⁴/(64ω²)]`
    pub analytic_det: T,
    pub numeric_trace: T,
    pub numeric_det: T,
    pub eig_real: [T; 2],
    pub eig_imag: [T; 2],
    /// `3dā²/(4ω) − ½√(9d²ā⁴/(16ω²) − λ²)`, absent when the root is imaginary.
    pub sigma_bound: Option<T>,
    /// Whether `σ` satisfies the bound (absent with the bound).
    pub bound_satisfied: Option<bool>,
    /// Decided by the numerical eigenvalues.
    pub stable: bool,
}

/// Upper detuning bound for stability on the branch of amplitude `a`.
pub fn stability_bound<T: Real>(a: T, params: &OscillatorParams<T>) -> Option<T> {
    let OscillatorParams { omega: w, d, lambda: l, .. } = *params;
    let a2 = a * a;
    let disc = lit::<T>(9.0) * d * d * a2 * a2 / (lit::<T>(16.0) * w * w) - l * l;
    (disc >= T::zero()).then(|| lit::<T>(3.0) * d * a2 / (lit::<T>(4.0) * w) - lit::<T>(0.5) * disc.sqrt())
}

pub fn stability<T: Real>(point: &StationaryPoint<T>, params: &OscillatorParams<T>) -> StabilityReport<T> {
    let OscillatorParams { omega: w, d, lambda: l, epsilon: e, .. } = *params;
    let (s, a) = (point.sigma, point.a);
    let a2 = a * a;
    let n = |x: f64| lit::<T>(x);
    let analytic_det =
        e * e * (l * l / n(4.0) + s * s - n(3.0) * d * s * a2 / (n(2.0) * w) + n(27.0) * d * d * a2 * a2 / (n(64.0) * w * w));
    let j = numerical_jacobian(params, s, a, point.beta);
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let (eig_real, eig_imag) = eigen_real_parts(tr, det);
    let sigma_bound = stability_bound(a, params);
    StabilityReport {
        analytic_trace: -l * e,
        analytic_det,
        numeric_trace: tr,
        numeric_det: det,
        eig_real,
        eig_imag,
        sigma_bound,
        bound_satisfied: sigma_bound.map(|b| s <= b),
        stable: eig_real[0] < T::zero() && eig_real[1] < T::zero(),
    }
}

/// Two-term expansion of the primary-resonance peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakEstimate<T> {
    pub a0: T,
    pub a1: T,
    pub sigma0: T,
    pub sigma1: T,
    pub beta0: T,
    pub beta1: T,
    pub forcing_frequency: T,
    pub epsilon: T,
}

impl<T: Real> PeakEstimate<T> {
    pub fn amplitude(&self) -> T {
        self.a0 + self.epsilon * self.a1
    }

    pub fn sigma(&self) -> T {
        self.sigma0 + self.epsilon * self.sigma1
    }

    pub fn beta(&self) -> T {
        self.beta0 + self.epsilon * self.beta1
    }
}

/// `a₀* = F_m/(λω)`, `σ₀* = 3da₀²/(8ω)`, `β₀* = −π/2`, `a₁* = −a₀σ₀/ω`,
/// `β₁* = λ/(2ω)`, `σ₁* = −29σ₀²/(12ω) − 5c²a₀²/(12ω³) − λ²/(4ω)`.
pub fn resonance_peak<T: Real>(params: &OscillatorParams<T>) -> Result<PeakEstimate<T>> {
    params.validate()?;
    let OscillatorParams { omega: w, c, d, lambda: l, epsilon: e, f_m: f, .. } = *params;
    if !(l > T::zero()) {
        return Err(Error::InvalidParams("resonance peak needs lambda > 0 (unbounded when undamped)".into()));
    }
    if f == T::zero() {
        return Err(Error::InvalidParams("resonance peak needs a nonzero forcing".into()));
    }
    let n = |x: f64| lit::<T>(x);
    let a0 = f / (l * w);
    let sigma0 = n(3.0) * d * a0 * a0 / (n(8.0) * w);
    let a1 = -a0 * sigma0 / w;
    let sigma1 = -n(29.0) * sigma0 * sigma0 / (n(12.0) * w) - n(5.0) * c * c * a0 * a0 / (n(12.0) * w * w * w) - l * l / (n(4.0) * w);
    Ok(PeakEstimate {
        a0,
        a1,
        sigma0,
        sigma1,
        beta0: -T::FRAC_PI_2(),
        beta1: l / (n(2.0) * w),
        forcing_frequency: w + e * sigma0 + e * e * sigma1,
        epsilon: e,
    })
}

/// Smallest positive amplitude of the ε¹ frequency-response equation
/// `(λa/2)² + (σa − 3da³/(8ω))² = (F/(2ω))²`, with the matching phase.
pub fn leading_order_guess<T: Real>(sigma: T, params: &OscillatorParams<T>) -> Option<SlowFlowState<T>> {
    let OscillatorParams { omega: w, d, lambda: l, f_m: f, .. } = *params;
    if f == T::zero() {
        return None;
    }
    let target = (f / (lit::<T>(2.0) * w)).powi(2);
    let resid = |a: T| {
        let q = sigma * a - lit::<T>(3.0) * d * a * a * a / (lit::<T>(8.0) * w);
        (l * a / lit::<T>(2.0)).powi(2) + q * q - target
    };
    // March outwards from zero until the residual turns positive.
    let mut lo = T::zero();
    let mut step = f.abs() / (w * (l + sigma.abs() + T::one())) * lit(0.01);
    let mut hi = step;
    let mut iters = 0;
    while resid(hi) < T::zero() {
        lo = hi;
        step *= lit(1.2);
        hi += step;
        iters += 1;
        if iters > 400 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) * lit(0.5);
        if resid(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = (lo + hi) * lit(0.5);
    let sb = -l * a * w / f;
    let cb = lit::<T>(2.0) * a * w * (lit::<T>(3.0) * d * a * a / (lit::<T>(8.0) * w) - sigma) / f;
    Some(SlowFlowState::new(a, sb.atan2(cb)))
}

/// Change of sweep variable along a response curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSwitch {
    /// Index of the first point computed with the new variable.
    pub index: usize,
    pub variable: SweepVariable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseCurve<T> {
    pub points: Vec<StationaryPoint<T>>,
    pub sweep_mode: Vec<SweepSwitch>,
}

impl<T: Real> ResponseCurve<T> {
    /// Index of the largest-amplitude point.
    pub fn argmax_amplitude(&self) -> Option<usize> {
        (0..self.points.len()).max_by(|&i, &j| self.points[i].a.partial_cmp(&self.points[j].a).unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions<T> {
    pub solver: SolverOptions<T>,
    /// Switch from `σ` to `a` as sweep variable when `|da/dσ|` exceeds this.
    pub switch_slope: T,
    /// Cap on the number of points, as a multiple of the requested count.
    pub max_points_factor: usize,
}

impl<T: Real> Default for ContinuationOptions<T> {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), switch_slope: lit(1e3), max_points_factor: 50 }
    }
}

/// Tangent of the solution curve in `(σ, a, β)`: the cross product of the
/// two rows of the Jacobian.
fn curve_tangent<T: Real>(params: &OscillatorParams<T>, x: [T; 3]) -> [T; 3] {
    let j = scaled_jacobian(params, x[0], x[1], x[2]);
    let (r, s) = (j[0], j[1]);
    [r[1] * s[2] - r[2] * s[1], r[2] * s[0] - r[0] * s[2], r[0] * s[1] - r[1] * s[0]]
}

/// Traces the stationary branch over `sigma_range` by continuation with a
/// step of about `(σ_max − σ_min)/(n_points − 1)` in the `(σ, a)` plane.
/// Near folds the sweep variable changes from `σ` to `a`.
pub fn frequency_response_curve<T: Real>(params: &OscillatorParams<T>, sigma_range: (T, T), n_points: usize) -> Result<ResponseCurve<T>> {
    frequency_response_curve_with(params, sigma_range, n_points, &ContinuationOptions::default())
}

pub fn frequency_response_curve_with<T: Real>(
    params: &OscillatorParams<T>,
    sigma_range: (T, T),
    n_points: usize,
    opts: &ContinuationOptions<T>,
) -> Result<ResponseCurve<T>> {
    let (s_min, s_max) = sigma_range;
    if !s_min.is_finite() || !s_max.is_finite() || !(s_max > s_min) {
        return Err(Error::InvalidParams("sigma range must be finite and increasing".into()));
    }
    if n_points < 2 {
        return Err(Error::InvalidParams("need at least 2 points".into()));
    }
    params.with_sigma(s_min).validate()?;
    params.with_sigma(s_max).validate()?;
    if params.f_m == T::zero() {
        return Err(Error::InvalidParams("response curve needs a nonzero forcing".into()));
    }
    let h_target = (s_max - s_min) / T::from_usize_lossy(n_points - 1);
    let h_min = h_target * lit(1e-7);
    let solve = |fixed, x| solve_fixed(params, fixed, x, &opts.solver);
    let finish = |x: [T; 3]| finish_point(&params.with_sigma(x[0]), x[0], x[1], x[2]);

    // First point: scan forward along a σ grid until one converges.
    let mut start = None;
    for i in 0..n_points {
        let s = s_min + T::from_usize_lossy(i) * h_target;
        if let Some(g) = leading_order_guess(s, params) {
            if let Ok(x) = solve(SweepVariable::Sigma, [s, g.a, g.beta]) {
                start = Some(x);
                break;
            }
        }
    }
    let Some(mut x) = start else {
        return Err(Error::Continuation("empty curve: no stationary point converged".into()));
    };
    let mut points = vec![finish(x)];
    let mut var = SweepVariable::Sigma;
    let mut sweep_mode = vec![SweepSwitch { index: 0, variable: var }];
    let mut tangent = curve_tangent(params, x);
    if tangent[0] < T::zero() {
        tangent = tangent.map(|v| -v);
    }
    let mut h = h_target;
    let max_points = n_points * opts.max_points_factor;

    while points.len() < max_points {
        let norm = (tangent[0] * tangent[0] + tangent[1] * tangent[1]).sqrt();
        if norm == T::zero() || !norm.is_finite() {
            break;
        }
        let t = tangent.map(|v| v / norm);
        let slope = if t[0] == T::zero() { T::infinity() } else { (t[1] / t[0]).abs() };
        let wanted = match var {
            SweepVariable::Sigma if slope > opts.switch_slope => SweepVariable::Amplitude,
            SweepVariable::Amplitude if slope < T::one() => SweepVariable::Sigma,
            v => v,
        };
        if wanted != var {
            var = wanted;
            sweep_mode.push(SweepSwitch { index: points.len(), variable: var });
        }

        let mut pred = [x[0] + h * t[0], x[1] + h * t[1], x[2] + h * t[2]];
        let mut last = false;
        if var == SweepVariable::Sigma && pred[0] >= s_max {
            pred = [s_max, x[1] + (s_max - x[0]) / t[0] * t[1], x[2] + (s_max - x[0]) / t[0] * t[2]];
            last = true;
        }
        match solve(var, pred) {
            Ok(xn) => {
                let dist = ((xn[0] - pred[0]).powi(2) + (xn[1] - pred[1]).powi(2)).sqrt();
                let mut tn = curve_tangent(params, xn);
                if tn[0] * t[0] + tn[1] * t[1] + tn[2] * t[2] < T::zero() {
                    tn = tn.map(|v| -v);
                }
                let tn_norm = (tn[0] * tn[0] + tn[1] * tn[1]).sqrt();
                let turn = (tn[0] * t[0] + tn[1] * t[1]) / tn_norm.max(T::min_positive_value());
                if dist > lit::<T>(0.25) * h.max(h_min) || turn < lit(0.8) {
                    if h <= h_min {
                        return Err(Error::Continuation(format!("step size collapsed at sigma = {}, a = {}", x[0], x[1])));
                    }
                    h *= lit(0.5);
                    continue;
                }
                x = xn;
                tangent = tn;
                points.push(finish(x));
                if last || x[0] > s_max || x[0] < s_min {
                    break;
                }
                h = (h * lit(1.5)).min(h_target);
            }
            Err(_) => {
                if h > h_min {
                    h *= lit(0.5);
                    continue;
                }
                let other = match var {
                    SweepVariable::Sigma => SweepVariable::Amplitude,
                    SweepVariable::Amplitude => SweepVariable::Sigma,
                };
                if sweep_mode.last().map(|s| s.index) == Some(points.len()) {
                    return Err(Error::Continuation(format!("no convergence near sigma = {}, a = {}", x[0], x[1])));
                }
                var = other;
                sweep_mode.push(SweepSwitch { index: points.len(), variable: var });
                h = h_target * lit(0.01);
            }
        }
    }
    // Points that overshot the range are dropped.
    points.retain(|p| p.sigma >= s_min - h_min && p.sigma <= s_max + h_min);
    Ok(ResponseCurve { points, sweep_mode })
}

/// Locates the amplitude maximum along the stationary branch near `guess`
/// by solving `G = 0` together with `det[∂G/∂β, ∂G/∂σ] = 0` (the condition
/// `da/dσ = 0`).
pub fn refine_peak<T: Real>(params: &OscillatorParams<T>, guess: &StationaryPoint<T>) -> Result<StationaryPoint<T>> {
    let fun = |x: &[T]| {
        let g = scaled_residual(params, x[0], x[1], x[2]);
        let j = scaled_jacobian(params, x[0], x[1], x[2]);
        let h = j[0][2] * j[1][0] - j[0][0] * j[1][2];
        Some(vec![g[0], g[1], h])
    };
    let jac = |x: &[T]| {
        let mut out = vec![vec![T::zero(); 3]; 3];
        for col in 0..3 {
            let step = lit::<T>(1e-5) * x[col].abs().max(T::one());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[col] += step;
            xm[col] -= step;
            let (fp, fm) = (fun(&xp)?, fun(&xm)?);
            for row in 0..3 {
                out[row][col] = (fp[row] - fm[row]) / (lit::<T>(2.0) * step);
            }
        }
        Some(out)
    };
    let floor = params.amplitude_floor();
    let out = newton_dogleg(
        fun,
        jac,
        |x| x[1] > floor && x[1] > T::zero(),
        &[guess.sigma, guess.a, guess.beta],
        NewtonOptions { tol: lit(1e-11), max_iter: 100 },
    );
    if !out.converged {
        return Err(Error::NoConvergence {
            iterations: out.iterations,
            residual: out.residual.as_f64(),
            best: out.x.iter().map(|v| v.as_f64()).collect(),
        });
    }
    // Polish (a, β) at the located σ to the standard tolerance.
    stationary_solve(out.x[0], params, &SlowFlowState { a: out.x[1], beta: out.x[2] })
}

/// Physical forced expansion with frozen `(a, β)`:
/// `εa cos θ + ε²(−ca²/(2ω²) + ca²/(6ω²) cos 2θ + da³/(32ω²) cos 3θ)`,
/// `θ = ω̃t + β`.
pub fn forced_expansion_value<T: Real>(t: T, a: T, beta: T, params: &OscillatorParams<T>, order: Order) -> T {
    let OscillatorParams { omega: w, c, d, epsilon: e, .. } = *params;
    let th = params.forcing_frequency() * t + beta;
    let mut u = e * a * th.cos();
    if order == Order::Second {
        let w2 = w * w;
        u += e
            * e
            * (-c * a * a / (lit::<T>(2.0) * w2)
                + c * a * a / (lit::<T>(6.0) * w2) * (lit::<T>(2.0) * th).cos()
                + d * a * a * a / (lit::<T>(32.0) * w2) * (lit::<T>(3.0) * th).cos());
    }
    u
}

/// Time derivative of the forced expansion when `(a, β)` move at rates
/// `(da, dβ)`.
pub fn forced_expansion_velocity<T: Real>(t: T, a: T, beta: T, da: T, dbeta: T, params: &OscillatorParams<T>, order: Order) -> T {
    let OscillatorParams { omega: w, c, d, epsilon: e, .. } = *params;
    let th = params.forcing_frequency() * t + beta;
    let dth = params.forcing_frequency() + dbeta;
    let (s1, c1) = th.sin_cos();
    let mut v = e * (da * c1 - a * dth * s1);
    if order == Order::Second {
        let w2 = w * w;
        let (two, three) = (lit::<T>(2.0), lit::<T>(3.0));
        let k0 = -c / (two * w2);
        let k2 = c / (lit::<T>(6.0) * w2);
        let k3 = d / (lit::<T>(32.0) * w2);
        v += e
            * e
            * (two * a * da * (k0 + k2 * (two * th).cos()) - k2 * a * a * two * dth * (two * th).sin()
                + three * a * a * da * k3 * (three * th).cos()
                - k3 * a * a * a * three * dth * (three * th).sin());
    }
    v
}

/// Periodic forced expansion at a stationary point, physical units.
pub fn evaluate_forced_expansion<T: Real>(t: T, point: &StationaryPoint<T>, params: &OscillatorParams<T>) -> T {
    forced_expansion_value(t, point.a, point.beta, &params.with_sigma(point.sigma), Order::Second)
}

/// Physical `(ũ(0), ũ̇(0))` of the expansion built on slow state `(a₀, β₀)`,
/// including the slow-flow rates in the velocity.
pub fn forced_initial_state<T: Real>(state: &SlowFlowState<T>, params: &OscillatorParams<T>, order: Order) -> Result<(T, T)> {
    let (da, db) = slow_flow_rhs(state, params)?;
    Ok((
        forced_expansion_value(T::zero(), state.a, state.beta, params, order),
        forced_expansion_velocity(T::zero(), state.a, state.beta, da, db, params, order),
    ))
}

/// Forced expansion driven by a slow-flow trajectory.
pub fn evaluate_forced_transient<T: Real>(t: T, slow: &SlowFlowTrajectory<T>, params: &OscillatorParams<T>, order: Order) -> Result<T> {
    let (a, b) = slow.unwrapped_at(t)?;
    Ok(forced_expansion_value(t, a, b, params, order))
}

fn ensure_no_resonance<T: Real>(basis: &Eigenbasis<T>, reduction: &ModalReduction<T>, tol: f64) -> Result<()> {
    check_internal_resonance(&basis.omegas, reduction.mode, T::lit(tol)).ensure_clear()
}

pub fn stationary_solve_ndof<T: Real>(
    sigma: T,
    reduction: &ModalReduction<T>,
    basis: &Eigenbasis<T>,
    guess: &SlowFlowState<T>,
) -> Result<StationaryPoint<T>> {
    ensure_no_resonance(basis, reduction, NdofExpansionOptions::default().resonance_tol)?;
    stationary_solve(sigma, &reduction.effective_params(sigma), guess)
}

pub fn resonance_peak_ndof<T: Real>(reduction: &ModalReduction<T>, basis: &Eigenbasis<T>) -> Result<PeakEstimate<T>> {
    ensure_no_resonance(basis, reduction, NdofExpansionOptions::default().resonance_tol)?;
    resonance_peak(&reduction.effective_params(T::zero()))
}

pub fn response_curve_ndof<T: Real>(
    reduction: &ModalReduction<T>,
    basis: &Eigenbasis<T>,
    sigma_range: (T, T),
    n_points: usize,
) -> Result<ResponseCurve<T>> {
    ensure_no_resonance(basis, reduction, NdofExpansionOptions::default().resonance_tol)?;
    frequency_response_curve(&reduction.effective_params(T::zero()), sigma_range, n_points)
}

/// Forced N-DOF expansion at a stationary point of the driven mode.
#[derive(Debug, Clone)]
pub struct ForcedNdofExpansion<T> {
    pub point: StationaryPoint<T>,
    pub params: OscillatorParams<T>,
    pub reduction: ModalReduction<T>,
    pub basis: Eigenbasis<T>,
    pub options: NdofExpansionOptions,
    coeffs: Vec<[T; 4]>,
    /// Linear response of the non-driven modes to the load, `f_k/(ω_k² − ω_m²)`.
    load: Vec<T>,
}

impl<T: Real> ForcedNdofExpansion<T> {
    pub fn new(
        point: &StationaryPoint<T>,
        reduction: &ModalReduction<T>,
        basis: &Eigenbasis<T>,
        options: NdofExpansionOptions,
    ) -> Result<Self> {
        ensure_no_resonance(basis, reduction, options.resonance_tol)?;
        let params = reduction.effective_params(point.sigma);
        let wm2 = reduction.omega * reduction.omega;
        let mut coeffs = Vec::with_capacity(basis.n());
        let mut load = Vec::with_capacity(basis.n());
        for k in 0..basis.n() {
            if k == reduction.mode || options.order == Order::First {
                coeffs.push([T::zero(); 4]);
                load.push(T::zero());
            } else {
                coeffs.push(cross_mode_coefficients(reduction, &basis.omegas, k, point.a, options.variant, options.fundamental_terms));
                let wk2 = basis.omegas[k] * basis.omegas[k];
                load.push(if options.fundamental_terms { reduction.f_k[k] / (wk2 - wm2) } else { T::zero() });
            }
        }
        Ok(Self { point: *point, params, reduction: reduction.clone(), basis: basis.clone(), options, coeffs, load })
    }

    /// Physical modal coordinates.
    pub fn modal(&self, t: T) -> Vec<T> {
        let e = self.params.epsilon;
        let wt = self.params.forcing_frequency() * t;
        let th = wt + self.point.beta;
        let (two, three) = (lit::<T>(2.0), lit::<T>(3.0));
        (0..self.basis.n())
            .map(|k| {
                if k == self.reduction.mode {
                    forced_expansion_value(t, self.point.a, self.point.beta, &self.params, self.options.order)
                } else {
                    let [c0, c1, c2, c3] = self.coeffs[k];
                    e * e * (c0 + c1 * th.cos() + c2 * (two * th).cos() + c3 * (three * th).cos() + self.load[k] * wt.cos())
                }
            })
            .collect()
    }

    /// Physical modal velocities (stationary, so only the phase advances).
    pub fn modal_velocity(&self, t: T) -> Vec<T> {
        let e = self.params.epsilon;
        let w = self.params.forcing_frequency();
        let wt = w * t;
        let th = wt + self.point.beta;
        let (two, three) = (lit::<T>(2.0), lit::<T>(3.0));
        (0..self.basis.n())
            .map(|k| {
                if k == self.reduction.mode {
                    forced_expansion_velocity(t, self.point.a, self.point.beta, T::zero(), T::zero(), &self.params, self.options.order)
                } else {
                    let [_, c1, c2, c3] = self.coeffs[k];
                    -e * e * w * (c1 * th.sin() + two * c2 * (two * th).sin() + three * c3 * (three * th).sin() + self.load[k] * wt.sin())
                }
            })
            .collect()
    }

    pub fn displacement(&self, t: T) -> Vec<T> {
        self.basis.to_physical(&self.modal(t))
    }

    pub fn velocity(&self, t: T) -> Vec<T> {
        self.basis.to_physical(&self.modal_velocity(t))
    }
}

/// Physical displacement vector of the forced N-DOF expansion.
pub fn evaluate_forced_expansion_ndof<T: Real>(
    t: T,
    point: &StationaryPoint<T>,
    reduction: &ModalReduction<T>,
    basis: &Eigenbasis<T>,
    variant: CrossModeVariant,
) -> Result<Vec<T>> {
    let opts = NdofExpansionOptions { variant, ..Default::default() };
    Ok(ForcedNdofExpansion::new(point, reduction, basis, opts)?.displacement(t))
}

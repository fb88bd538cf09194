//! Direct numerical integration: Dormand–Prince 5(4) with quartic dense
//! output, the four governing systems in the scaled variable `u = ũ/ε`,
//! and envelope extraction.
//!
//! Butcher tableau (Dormand & Prince 1980, as tabulated by Hairer, Nørsett
//! and Wanner):
//!
//! ```text
//! c2 = 1/5   a21 = 1/5
//! c3 = 3/10  a31 = 3/40        a32 = 9/40
//! c4 = 4/5   a41 = 44/45       a42 = -56/15      a43 = 32/9
//! c5 = 8/9   a51 = 19372/6561  a52 = -25360/2187 a53 = 64448/6561 a54 = -212/729
//! c6 = 1     a61 = 9017/3168   a62 = -355/33     a63 = 46732/5247 a64 = 49/176   a65 = -5103/18656
//! c7 = 1     a71 = 35/384      a72 = 0           a73 = 500/1113   a74 = 125/192  a75 = -2187/6784  a76 = 11/84
//! error (b5 - b4): e1 = 71/57600, e3 = -71/16695, e4 = 71/1920,
//!                  e5 = -17253/339200, e6 = 22/525, e7 = -1/40
//! dense output:    d1 = -12715105075/11282082432, d3 = 87487479700/32700410799,
//!                  d4 = -10690763975/1880347072, d5 = 701980252875/199316789632,
//!                  d6 = -1453857185/822651844, d7 = 69997945/29380423
//! ```
//!
//! The fifth-order solution is propagated (local extrapolation); the step
//! size follows the PI controller of the reference DOPRI5 code.

use serde::{Deserialize, Serialize};

use crate::linalg::{backward_substitute_transposed, forward_substitute, Matrix};
use crate::model::{ModalModel, OscillatorParams};
use crate::scalar::lit;
use crate::{Error, Real, Result};

/// Right-hand side of `y' = f(t, y)`.
pub trait OdeRhs<T> {
    fn dim(&self) -> usize;
    fn rhs(&self, t: T, y: &[T], dy: &mut [T]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances<T> {
    pub rel_tol: T,
    pub abs_tol: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self { rel_tol: lit(1e-10), abs_tol: lit(1e-12) }
    }
}

impl<T: Real> Tolerances<T> {
    pub fn new(rel_tol: T, abs_tol: T) -> Self {
        Self { rel_tol, abs_tol }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (lit::<T>(1e-13 * (1.0 - 1e-9)), lit::<T>(1e-3 * (1.0 + 1e-9)));
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v >= lo && v <= hi) {
                return Err(Error::InvalidTolerance(format!("{name} = {v} outside [1e-13, 1e-3]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions<T> {
    pub tol: Tolerances<T>,
    /// Largest allowed step magnitude.
    pub h_max: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> Default for IntegratorOptions<T> {
    fn default() -> Self {
        Self { tol: Tolerances::default(), h_max: None, max_steps: 100_000_000 }
    }
}

impl<T: Real> IntegratorOptions<T> {
    pub fn with_tol(tol: Tolerances<T>) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Evaluates the quartic dense output of one step at `θ ∈ [0, 1]`.
/// `rcont` holds the five coefficient vectors back to back.
fn dense_eval<T: Real>(rcont: &[T], dim: usize, theta: T, out: &mut [T]) {
    let one_m = T::one() - theta;
    for i in 0..dim {
        let r = |j: usize| rcont[j * dim + i];
        out[i] = r(0) + theta * (r(1) + one_m * (r(2) + theta * (r(3) + one_m * r(4))));
    }
}

struct Tableau<T> {
    c: [T; 5],
    a: [[T; 6]; 6],
    e: [T; 7],
    d: [T; 7],
}

impl<T: Real> Tableau<T> {
    fn new() -> Self {
        let f = |n: f64, d: f64| lit::<T>(n / d);
        let z = T::zero();
        Self {
            c: [f(1., 5.), f(3., 10.), f(4., 5.), f(8., 9.), T::one()],
            a: [
                [f(1., 5.), z, z, z, z, z],
                [f(3., 40.), f(9., 40.), z, z, z, z],
                [f(44., 45.), f(-56., 15.), f(32., 9.), z, z, z],
                [f(19372., 6561.), f(-25360., 2187.), f(64448., 6561.), f(-212., 729.), z, z],
                [f(9017., 3168.), f(-355., 33.), f(46732., 5247.), f(49., 176.), f(-5103., 18656.), z],
                [f(35., 384.), z, f(500., 1113.), f(125., 192.), f(-2187., 6784.), f(11., 84.)],
            ],
            e: [f(71., 57600.), z, f(-71., 16695.), f(71., 1920.), f(-17253., 339200.), f(22., 525.), f(-1., 40.)],
            d: [
                f(-12715105075., 11282082432.),
                z,
                f(87487479700., 32700410799.),
                f(-10690763975., 1880347072.),
                f(701980252875., 199316789632.),
                f(-1453857185., 822651844.),
                f(69997945., 29380423.),
            ],
        }
    }
}

/// One accepted step as seen by an observer.
pub struct StepView<'a, T> {
    pub t_old: T,
    pub h: T,
    pub y_new: &'a [T],
    rcont: &'a [T],
}

impl<T: Real> StepView<'_, T> {
    pub fn t_new(&self) -> T {
        self.t_old + self.h
    }

    /// Dense output at `t` inside the step.
    pub fn eval(&self, t: T, out: &mut [T]) {
        let theta = (t - self.t_old) / self.h;
        dense_eval(self.rcont, self.y_new.len(), theta, out);
    }

    pub fn coefficients(&self) -> &[T] {
        self.rcont
    }
}

fn weighted_rms<T: Real>(v: &[T], sc: &[T]) -> T {
    let n = T::from_usize_lossy(v.len().max(1));
    (v.iter().zip(sc).fold(T::zero(), |s, (&x, &w)| s + (x / w) * (x / w)) / n).sqrt()
}

/// Runs DOPRI5 from `t0` to `t_end` (either direction), calling `observer`
/// after each accepted step. Returns the number of accepted steps.
pub fn integrate_observed<T, S, F>(sys: &S, t0: T, y0: &[T], t_end: T, opts: &IntegratorOptions<T>, mut observer: F) -> Result<usize>
where
    T: Real,
    S: OdeRhs<T> + ?Sized,
    F: FnMut(&StepView<'_, T>) -> Result<()>,
{
    opts.tol.validate()?;
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::Dimension(format!("initial state has length {}, system needs {n}", y0.len())));
    }
    if y0.iter().any(|v| !v.is_finite()) || !t0.is_finite() || !t_end.is_finite() {
        return Err(Error::InvalidParams("non-finite initial data".into()));
    }
    if t_end == t0 {
        return Ok(0);
    }
    let tab = Tableau::<T>::new();
    let (rtol, atol) = (opts.tol.rel_tol, opts.tol.abs_tol);
    let dir = (t_end - t0).signum();
    let h_max = opts.h_max.unwrap_or((t_end - t0).abs());

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 7];
    let mut ytmp = vec![T::zero(); n];
    let mut y1 = vec![T::zero(); n];
    let mut errv = vec![T::zero(); n];
    let mut sc = vec![T::zero(); n];
    let mut rcont = vec![T::zero(); 5 * n];
    sys.rhs(t, &y, &mut k[0]);

    // Initial step guess.
    let mut h = {
        for i in 0..n {
            sc[i] = atol + rtol * y[i].abs();
        }
        let dnf = k[0].iter().zip(&sc).fold(T::zero(), |s, (&f, &w)| s + (f / w).powi(2));
        let dny = y.iter().zip(&sc).fold(T::zero(), |s, (&v, &w)| s + (v / w).powi(2));
        let tiny = lit::<T>(1e-10);
        let mut h = if dnf <= tiny || dny <= tiny { lit::<T>(1e-6) } else { (dny / dnf).sqrt() * lit::<T>(0.01) };
        h = h.min(h_max);
        for i in 0..n {
            ytmp[i] = y[i] + dir * h * k[0][i];
        }
        sys.rhs(t + dir * h, &ytmp, &mut k[1]);
        let der2 = k[1].iter().zip(&k[0]).zip(&sc).fold(T::zero(), |s, ((&a, &b), &w)| s + ((a - b) / w).powi(2)).sqrt() / h;
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= lit::<T>(1e-15) { lit::<T>(1e-6).max(h * lit::<T>(1e-3)) } else { (lit::<T>(0.01) / der12).powf(lit(0.2)) };
        dir * (lit::<T>(100.0) * h).min(h1).min(h_max)
    };

    let (beta, safe) = (lit::<T>(0.04), lit::<T>(0.9));
    let expo1 = lit::<T>(0.2) - beta * lit::<T>(0.75);
    let (facc1, facc2) = (lit::<T>(5.0), lit::<T>(0.1));
    let mut facold = lit::<T>(1e-4);
    let mut rejected_last = false;
    let mut steps = 0usize;

    loop {
        let remaining = t_end - t;
        if remaining * dir <= T::zero() {
            break;
        }
        let last = (h * dir) >= (remaining * dir) * (T::one() - lit::<T>(1e-12));
        if last {
            h = remaining;
        }
        if h.abs() <= lit::<T>(10.0) * T::epsilon() * t.abs().max(T::one()) {
            return Err(Error::StepSizeUnderflow { t: t.as_f64(), h: h.as_f64() });
        }
        if steps >= opts.max_steps {
            return Err(Error::TooManySteps { max_steps: opts.max_steps, t: t.as_f64() });
        }

        for s in 0..6 {
            for i in 0..n {
                let mut acc = T::zero();
                for j in 0..=s {
                    acc += tab.a[s][j] * k[j][i];
                }
                ytmp[i] = y[i] + h * acc;
            }
            let ts = if s < 5 { t + tab.c[s] * h } else { t + h };
            sys.rhs(ts, &ytmp, &mut k[s + 1]);
            if s == 5 {
                y1.copy_from_slice(&ytmp);
            }
        }
        // k[6] = f(t + h, y1) (first-same-as-last).
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..7 {
                acc += tab.e[j] * k[j][i];
            }
            errv[i] = h * acc;
            sc[i] = atol + rtol * y[i].abs().max(y1[i].abs());
        }
        let err = weighted_rms(&errv, &sc);
        if !err.is_finite() {
            h *= lit(0.1);
            rejected_last = true;
            continue;
        }

        let fac11 = err.powf(expo1);
        let fac = (fac11 / facold.powf(beta) / safe).min(facc1).max(facc2);
        let mut h_new = h / fac;

        if err <= T::one() {
            facold = err.max(lit(1e-4));
            steps += 1;
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = h * k[0][i] - ydiff;
                rcont[i] = y[i];
                rcont[n + i] = ydiff;
                rcont[2 * n + i] = bspl;
                rcont[3 * n + i] = ydiff - h * k[6][i] - bspl;
                let mut acc = T::zero();
                for j in 0..7 {
                    acc += tab.d[j] * k[j][i];
                }
                rcont[4 * n + i] = h * acc;
            }
            let t_old = t;
            t = if last { t_end } else { t + h };
            y.copy_from_slice(&y1);
            let k6 = std::mem::take(&mut k[6]);
            k[0] = k6;
            k[6] = vec![T::zero(); n];
            if h_new.abs() > h_max {
                h_new = dir * h_max;
            }
            if rejected_last {
                h_new = dir * h_new.abs().min(h.abs());
            }
            rejected_last = false;
            observer(&StepView { t_old, h: t - t_old, y_new: &y, rcont: &rcont })?;
        } else {
            h_new = h / (facc1.min(fac11 / safe));
            rejected_last = true;
        }
        h = h_new;
    }
    Ok(steps)
}

/// Accepted steps with their dense output.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    dim: usize,
    times: Vec<T>,
    states: Vec<T>,
    dense: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[T] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn t_start(&self) -> T {
        self.times[0]
    }

    pub fn t_end(&self) -> T {
        *self.times.last().expect("non-empty trajectory")
    }

    /// Dense coefficients of step `i` (from `times[i]` to `times[i+1]`).
    pub fn dense_output(&self, i: usize) -> &[T] {
        &self.dense[i * 5 * self.dim..(i + 1) * 5 * self.dim]
    }

    fn locate(&self, t: T) -> Result<usize> {
        let (a, b) = (self.t_start(), self.t_end());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let slack = lit::<T>(1e-12) * (hi - lo).abs().max(T::one());
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::OutOfSpan { t: t.as_f64(), t0: a.as_f64(), t1: b.as_f64() });
        }
        let forward = a <= b;
        let idx = self.times.partition_point(|&x| if forward { x <= t } else { x >= t });
        Ok(idx.saturating_sub(1).min(self.times.len().saturating_sub(2)))
    }

    /// Interpolated state at `t`.
    pub fn interpolate_into(&self, t: T, out: &mut [T]) -> Result<()> {
        if self.times.len() == 1 {
            out.copy_from_slice(self.state(0));
            return Ok(());
        }
        let i = self.locate(t)?;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        dense_eval(self.dense_output(i), self.dim, (t - t0) / (t1 - t0), out);
        Ok(())
    }

    pub fn interpolate(&self, t: T) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dim];
        self.interpolate_into(t, &mut out)?;
        Ok(out)
    }

    pub fn component_at(&self, t: T, component: usize) -> Result<T> {
        Ok(self.interpolate(t)?[component])
    }

    /// Multiplies every stored value (states and dense coefficients) by `s`;
    /// used to convert scaled `u` into physical `ũ = εu`.
    pub fn scaled(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            times: self.times.clone(),
            states: self.states.iter().map(|&v| v * s).collect(),
            dense: self.dense.iter().map(|&v| v * s).collect(),
        }
    }

    /// Builds a trajectory from raw parts. `dense` must hold `5·dim` values
    /// per step.
    pub fn from_parts(dim: usize, times: Vec<T>, states: Vec<T>, dense: Vec<T>) -> Result<Self> {
        let n = times.len();
        if n == 0 || states.len() != n * dim || dense.len() != (n - 1) * 5 * dim {
            return Err(Error::Dimension("inconsistent trajectory parts".into()));
        }
        Ok(Self { dim, times, states, dense })
    }
}

/// Integrates and keeps every accepted step with its dense output.
pub fn integrate<T: Real, S: OdeRhs<T> + ?Sized>(sys: &S, y0: &[T], t_span: (T, T), opts: &IntegratorOptions<T>) -> Result<Trajectory<T>> {
    let dim = sys.dim();
    let mut times = vec![t_span.0];
    let mut states = y0.to_vec();
    let mut dense = Vec::new();
    integrate_observed(sys, t_span.0, y0, t_span.1, opts, |s| {
        times.push(s.t_new());
        states.extend_from_slice(s.y_new);
        dense.extend_from_slice(s.coefficients());
        Ok(())
    })?;
    Ok(Trajectory { dim, times, states, dense })
}

/// Integrates forward and evaluates the dense output at the given
/// increasing sample times, without storing the steps. Returns one state
/// vector per sample time.
pub fn integrate_sampled<T: Real, S: OdeRhs<T> + ?Sized>(
    sys: &S,
    t0: T,
    y0: &[T],
    sample_times: &[T],
    opts: &IntegratorOptions<T>,
) -> Result<Vec<Vec<T>>> {
    if sample_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParams("sample times must be strictly increasing".into()));
    }
    let Some(&t_last) = sample_times.last() else { return Ok(Vec::new()) };
    if sample_times[0] < t0 {
        return Err(Error::InvalidParams("sample times precede the initial time".into()));
    }
    let dim = sys.dim();
    let mut out = Vec::with_capacity(sample_times.len());
    let mut next = 0;
    while next < sample_times.len() && sample_times[next] == t0 {
        out.push(y0.to_vec());
        next += 1;
    }
    let mut buf = vec![T::zero(); dim];
    integrate_observed(sys, t0, y0, t_last, opts, |s| {
        let t1 = s.t_new();
        while next < sample_times.len() && sample_times[next] <= t1 {
            if sample_times[next] == t1 {
                out.push(s.y_new.to_vec());
            } else {
                s.eval(sample_times[next], &mut buf);
                out.push(buf.clone());
            }
            next += 1;
        }
        Ok(())
    })?;
    Ok(out)
}

/// N-DOF system data shared by the free and forced variants.
#[derive(Debug, Clone)]
pub struct NdofSystem<T> {
    pub model: ModalModel<T>,
    mass_chol: Matrix<T>,
    damping: Matrix<T>,
    identity_mass: bool,
}

impl<T: Real> NdofSystem<T> {
    pub fn new(model: ModalModel<T>) -> Result<Self> {
        model.validate()?;
        let n = model.n();
        let mass_chol = model.mass.cholesky()?;
        let mut damping = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                damping[(i, j)] = model.eps_m * model.mass[(i, j)] + model.eps_k * model.stiffness[(i, j)];
            }
        }
        let identity_mass = model.mass == Matrix::identity(n);
        Ok(Self { model, mass_chol, damping, identity_mass })
    }

    /// Scaled nonlinear spring force `c Δ² + d Δ³` (the physical force
    /// divided by `ε²`). It acts with `+` on DOF `p` and `−` on DOF `p−1`.
    pub fn spring_force(&self, u: &[T]) -> T {
        let delta = self.model.spring_stretch(u);
        delta * delta * (self.model.c + self.model.d * delta)
    }

    fn accel(&self, u: &[T], v: &[T], load: T, out: &mut [T], damped: bool) {
        let m = &self.model;
        let n = m.n();
        let eps = m.epsilon;
        let ku = m.stiffness.matvec(u);
        for i in 0..n {
            out[i] = -ku[i] + eps * m.force[i] * load;
        }
        if damped {
            let cv = self.damping.matvec(v);
            for i in 0..n {
                out[i] -= eps * cv[i];
            }
        }
        let f = eps * self.spring_force(u);
        let p = m.p - 1;
        out[p] -= f;
        if p > 0 {
            out[p - 1] += f;
        }
        if !self.identity_mass {
            forward_substitute(&self.mass_chol, out);
            backward_substitute_transposed(&self.mass_chol, out);
        }
    }
}

/// The four governing systems, all in the scaled variable `u = ũ/ε` with
/// state layout `[u_1..u_n, u̇_1..u̇_n]`.
#[derive(Debug, Clone)]
pub enum OdeSystem<T> {
    /// `ü + ω²u + εcu² + εdu³ = 0`
    Free1Dof(OscillatorParams<T>),
    /// `ü + ω²u + ελu̇ + εcu² + εdu³ = εF_m cos(ω̃t)`
    Forced1Dof(OscillatorParams<T>),
    /// `M ü + K u + ε N(Δ) = 0`
    FreeNdof(NdofSystem<T>),
    /// `M ü + εC u̇ + K u + ε N(Δ) = εF cos(ω̃t)`
    ForcedNdof { system: NdofSystem<T>, forcing_frequency: T },
}

impl<T: Real> OdeSystem<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Free1Dof(_) => "free_1dof",
            Self::Forced1Dof(_) => "forced_1dof",
            Self::FreeNdof(_) => "free_ndof",
            Self::ForcedNdof { .. } => "forced_ndof",
        }
    }

    /// Number of displacement components.
    pub fn dofs(&self) -> usize {
        match self {
            Self::Free1Dof(_) | Self::Forced1Dof(_) => 1,
            Self::FreeNdof(s) | Self::ForcedNdof { system: s, .. } => s.model.n(),
        }
    }

    pub fn epsilon(&self) -> T {
        match self {
            Self::Free1Dof(p) | Self::Forced1Dof(p) => p.epsilon,
            Self::FreeNdof(s) | Self::ForcedNdof { system: s, .. } => s.model.epsilon,
        }
    }

    /// Conserved energy of the undamped free 1-DOF system,
    /// `½u̇² + ½ω²u² + εcu³/3 + εdu⁴/4`.
    pub fn energy(&self, y: &[T]) -> Option<T> {
        match self {
            Self::Free1Dof(p) => {
                let (u, v) = (y[0], y[1]);
                let half = lit::<T>(0.5);
                Some(
                    half * v * v
                        + half * p.omega * p.omega * u * u
                        + p.epsilon * p.c * u * u * u / lit(3.0)
                        + p.epsilon * p.d * u.powi(4) / lit(4.0),
                )
            }
            _ => None,
        }
    }
}

impl<T: Real> OdeRhs<T> for OdeSystem<T> {
    fn dim(&self) -> usize {
        2 * self.dofs()
    }

    fn rhs(&self, t: T, y: &[T], dy: &mut [T]) {
        match self {
            Self::Free1Dof(p) | Self::Forced1Dof(p) => {
                let (u, v) = (y[0], y[1]);
                dy[0] = v;
                let mut a = -p.omega * p.omega * u - p.epsilon * u * u * (p.c + p.d * u);
                if let Self::Forced1Dof(_) = self {
                    a += p.epsilon * (p.f_m * (p.forcing_frequency() * t).cos() - p.lambda * v);
                }
                dy[1] = a;
            }
            Self::FreeNdof(s) => {
                let n = s.model.n();
                dy[..n].copy_from_slice(&y[n..]);
                let (u, v) = y.split_at(n);
                s.accel(u, v, T::zero(), &mut dy[n..], false);
            }
            Self::ForcedNdof { system: s, forcing_frequency } => {
                let n = s.model.n();
                dy[..n].copy_from_slice(&y[n..]);
                let (u, v) = y.split_at(n);
                s.accel(u, v, (*forcing_frequency * t).cos(), &mut dy[n..], true);
            }
        }
    }
}

/// Local maxima of `|u_component|`, located as roots of the matching
/// velocity component of the dense output. The state must follow the
/// `[u.., u̇..]` layout.
pub fn sample_envelope<T: Real>(traj: &Trajectory<T>, component: usize) -> Result<(Vec<T>, Vec<T>)> {
    let dim = traj.dim();
    if !dim.is_multiple_of(2) || component >= dim / 2 {
        return Err(Error::Dimension(format!("component {component} invalid for state dimension {dim}")));
    }
    let vel = dim / 2 + component;
    let mut buf = vec![T::zero(); dim];
    let mut times = Vec::new();
    let mut amps = Vec::new();
    const SUB: usize = 4;
    for i in 0..traj.len().saturating_sub(1) {
        let (t0, t1) = (traj.times[i], traj.times[i + 1]);
        let rc = traj.dense_output(i);
        let v_at = |theta: T, buf: &mut [T]| {
            dense_eval(rc, dim, theta, buf);
            buf[vel]
        };
        let mut th_a = T::zero();
        let mut va = v_at(th_a, &mut buf);
        for s in 1..=SUB {
            let th_b = T::from_usize_lossy(s) / T::from_usize_lossy(SUB);
            let vb = v_at(th_b, &mut buf);
            // A root at the right end is picked up by the next interval.
            if va != T::zero() && (va * vb < T::zero() || (vb == T::zero() && s < SUB)) {
                let (mut lo, mut hi, mut flo) = (th_a, th_b, va);
                for _ in 0..200 {
                    let mid = (lo + hi) * lit(0.5);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let fm = v_at(mid, &mut buf);
                    if fm == T::zero() {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if fm * flo < T::zero() {
                        hi = mid;
                    } else {
                        lo = mid;
                        flo = fm;
                    }
                }
                let th = (lo + hi) * lit(0.5);
                dense_eval(rc, dim, th, &mut buf);
                let u = buf[component];
                // |u| has a maximum where u̇ turns towards the origin.
                let is_max_abs = (u > T::zero() && va > T::zero()) || (u < T::zero() && va < T::zero());
                if is_max_abs {
                    times.push(t0 + th * (t1 - t0));
                    amps.push(u.abs());
                }
            }
            th_a = th_b;
            va = vb;
        }
    }
    if times.len() < 2 {
        return Err(Error::InsufficientData(format!("found {} extrema, need at least 2", times.len())));
    }
    Ok((times, amps))
}

//! Problem parameters, N-DOF systems, the generalized modal decomposition
//! and reduction of an N-DOF problem to effective 1-DOF coefficients.
//!
//! Mode indices are zero-based in the Rust API. The spring endpoint `p`
//! keeps its one-based meaning: the nonlinear spring joins DOF `p-1` and
//! `p`, and `p = 1` grounds it (the missing neighbour is taken as zero).

use serde::{Deserialize, Serialize};

use crate::linalg::{backward_substitute_transposed, forward_substitute, jacobi_eigen, Matrix};
use crate::scalar::lit;
use crate::{Error, Real, Result};

/// Parameters of `ü + ω²ũ + ελũ̇ + cũ² + (d/ε)ũ³ = εF_m cos((ω + εσ)t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorParams<T> {
    pub omega: T,
    pub c: T,
    pub d: T,
    #[serde(default)]
    pub lambda: T,
    pub epsilon: T,
    #[serde(default)]
    pub f_m: T,
    #[serde(default)]
    pub sigma: T,
}

impl<T: Real> OscillatorParams<T> {
    /// Free, undamped oscillator.
    pub fn free(omega: T, c: T, d: T, epsilon: T) -> Self {
        Self { omega, c, d, lambda: T::zero(), epsilon, f_m: T::zero(), sigma: T::zero() }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.omega, self.c, self.d, self.lambda, self.epsilon, self.f_m, self.sigma];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("parameters must be finite".into()));
        }
        if !(self.omega > T::zero()) {
            return Err(Error::InvalidParams(format!("omega must be > 0, got {}", self.omega)));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidParams(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.lambda < T::zero() {
            return Err(Error::InvalidParams(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.forcing_frequency() > T::zero()) {
            return Err(Error::InvalidParams(format!(
                "forcing frequency omega + epsilon*sigma = {} must be > 0",
                self.forcing_frequency()
            )));
        }
        Ok(())
    }

    /// `ω̃ = ω + εσ`.
    pub fn forcing_frequency(&self) -> T {
        self.omega + self.epsilon * self.sigma
    }

    /// Amplitude floor `1e-8·|F_m|/(λω)` below which the slow-flow phase is
    /// undefined. With no damping the `λ` factor is dropped.
    pub fn amplitude_floor(&self) -> T {
        let den = if self.lambda > T::zero() { self.lambda * self.omega } else { self.omega };
        lit::<T>(1e-8) * self.f_m.abs() / den
    }

    pub fn with_epsilon(mut self, epsilon: T) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_sigma(mut self, sigma: T) -> Self {
        self.sigma = sigma;
        self
    }
}

/// `M ü + ε(ε_M M + ε_K K) u̇ + K u + Φ(u) = ε F cos(ω̃ t)` with one
/// nonlinear spring between DOF `p-1` and `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalModel<T> {
    pub mass: Matrix<T>,
    pub stiffness: Matrix<T>,
    pub p: usize,
    pub c: T,
    pub d: T,
    pub eps_m: T,
    pub eps_k: T,
    pub force: Vec<T>,
    pub epsilon: T,
}

impl<T: Real> ModalModel<T> {
    /// Fixed-fixed chain of `n` unit masses with springs of stiffness `k`.
    pub fn chain(n: usize, k: T, p: usize, c: T, d: T, epsilon: T) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("chain needs at least one mass".into()));
        }
        let mut stiffness = Matrix::zeros(n, n);
        for i in 0..n {
            stiffness[(i, i)] = lit::<T>(2.0) * k;
            if i + 1 < n {
                stiffness[(i, i + 1)] = -k;
                stiffness[(i + 1, i)] = -k;
            }
        }
        let model =
            Self { mass: Matrix::identity(n), stiffness, p, c, d, eps_m: T::zero(), eps_k: T::zero(), force: vec![T::zero(); n], epsilon };
        model.validate()?;
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.mass.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Dimension("empty model".into()));
        }
        if !self.mass.is_square() || self.stiffness.rows() != n || !self.stiffness.is_square() {
            return Err(Error::Dimension("mass and stiffness must be square and of equal size".into()));
        }
        if self.force.len() != n {
            return Err(Error::Dimension(format!("force has length {}, expected {n}", self.force.len())));
        }
        if self.p < 1 || self.p > n {
            return Err(Error::InvalidParams(format!("p = {} outside 1..={n}", self.p)));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidParams("epsilon must be > 0".into()));
        }
        if self.eps_m < T::zero() || self.eps_k < T::zero() {
            return Err(Error::InvalidParams("damping coefficients must be >= 0".into()));
        }
        let tol = lit::<T>(1e-12);
        self.mass.check_symmetric(tol)?;
        self.stiffness.check_symmetric(tol)?;
        self.mass.cholesky()?;
        Ok(())
    }

    /// Relative spring stretch `Δ = u_p − u_{p−1}` (`u_0 = 0`).
    pub fn spring_stretch(&self, u: &[T]) -> T {
        let p = self.p - 1;
        if p == 0 {
            u[0]
        } else {
            u[p] - u[p - 1]
        }
    }
}

/// Eigen angular frequencies (ascending) and M-orthonormal mode shapes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenbasis<T> {
    pub omegas: Vec<T>,
    /// Column `k` is `φ_k`.
    pub phis: Matrix<T>,
}

impl<T: Real> Eigenbasis<T> {
    pub fn n(&self) -> usize {
        self.omegas.len()
    }

    pub fn phi(&self, k: usize) -> Vec<T> {
        self.phis.column(k)
    }

    /// `δφ_{k,p} = φ_{k,p} − φ_{k,p−1}` with `φ_{k,0} = 0`.
    pub fn delta_phi(&self, k: usize, p: usize) -> T {
        let cur = self.phis[(p - 1, k)];
        if p == 1 {
            cur
        } else {
            cur - self.phis[(p - 2, k)]
        }
    }

    /// Modal coordinates `y = Φᵀ M u`.
    pub fn to_modal(&self, mass: &Matrix<T>, u: &[T]) -> Vec<T> {
        let mu = mass.matvec(u);
        self.phis.transpose().matvec(&mu)
    }

    /// Physical vector `u = Σ y_k φ_k`.
    pub fn to_physical(&self, y: &[T]) -> Vec<T> {
        self.phis.matvec(y)
    }

    /// Largest `‖Kφ_k − ω_k²Mφ_k‖ / ‖Kφ_k‖` over all modes.
    pub fn max_residual(&self, model: &ModalModel<T>) -> T {
        let mut worst = T::zero();
        for k in 0..self.n() {
            let phi = self.phi(k);
            let kp = model.stiffness.matvec(&phi);
            let mp = model.mass.matvec(&phi);
            let w2 = self.omegas[k] * self.omegas[k];
            let num = kp.iter().zip(&mp).fold(T::zero(), |s, (&a, &b)| s + (a - w2 * b).powi(2)).sqrt();
            let den = kp.iter().fold(T::zero(), |s, &a| s + a * a).sqrt();
            worst = worst.max(num / den.max(T::min_positive_value()));
        }
        worst
    }

    /// `max|ΦᵀMΦ − I|`.
    pub fn orthonormality_error(&self, mass: &Matrix<T>) -> T {
        let pt = self.phis.transpose();
        let g = pt.matmul(mass).and_then(|x| x.matmul(&self.phis)).expect("conformal");
        let mut worst = T::zero();
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Solves `K φ = ω² M φ` through `L⁻¹ K L⁻ᵀ` (with `M = L Lᵀ`) and cyclic
/// Jacobi rotations. Each `φ_k` has its first nonzero entry positive.
pub fn solve_generalized_eigen<T: Real>(model: &ModalModel<T>) -> Result<Eigenbasis<T>> {
    let n = model.n();
    let tol = lit::<T>(1e-12);
    model.mass.check_symmetric(tol)?;
    model.stiffness.check_symmetric(tol)?;
    let l = model.mass.cholesky()?;

    // A = L^-1 K L^-T, built column by column.
    let mut x = Matrix::zeros(n, n);
    for j in 0..n {
        let mut col = model.stiffness.column(j);
        forward_substitute(&l, &mut col);
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }
    let xt = x.transpose();
    let mut a = Matrix::zeros(n, n);
    for j in 0..n {
        let mut col = xt.column(j);
        forward_substitute(&l, &mut col);
        for i in 0..n {
            a[(i, j)] = col[i];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (a[(i, j)] + a[(j, i)]) * lit::<T>(0.5);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }

    let (vals, q) = jacobi_eigen(&a, 100)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap_or(std::cmp::Ordering::Equal));

    let mut omegas = Vec::with_capacity(n);
    let mut phis = Matrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        let w2 = vals[src];
        if !(w2 > T::zero()) {
            return Err(Error::NotPositiveDefinite { index: k, pivot: w2.as_f64() });
        }
        omegas.push(w2.sqrt());
        let mut phi = q.column(src);
        backward_substitute_transposed(&l, &mut phi);
        let big = phi.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let thresh = big * lit::<T>(1e-10);
        if let Some(first) = phi.iter().find(|v| v.abs() > thresh) {
            if *first < T::zero() {
                phi.iter_mut().for_each(|v| *v = -*v);
            }
        }
        for i in 0..n {
            phis[(i, k)] = phi[i];
        }
    }
    Ok(Eigenbasis { omegas, phis })
}

/// Effective 1-DOF coefficients of the driven mode plus cross-mode data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalReduction<T> {
    /// Driven mode (zero-based).
    pub mode: usize,
    /// Angular frequency of the driven mode.
    pub omega: T,
    pub check_c: T,
    pub check_d: T,
    pub cross_c: Vec<T>,
    pub cross_d: Vec<T>,
    pub lambda_k: Vec<T>,
    pub f_k: Vec<T>,
    pub delta_phi: Vec<T>,
    pub epsilon: T,
}

impl<T: Real> ModalReduction<T> {
    /// The driven mode seen as a 1-DOF oscillator at detuning `sigma`.
    pub fn effective_params(&self, sigma: T) -> OscillatorParams<T> {
        OscillatorParams {
            omega: self.omega,
            c: self.check_c,
            d: self.check_d,
            lambda: self.lambda_k[self.mode],
            epsilon: self.epsilon,
            f_m: self.f_k[self.mode],
            sigma,
        }
    }
}

pub fn modal_reduce<T: Real>(model: &ModalModel<T>, basis: &Eigenbasis<T>, mode: usize) -> Result<ModalReduction<T>> {
    let n = basis.n();
    if mode >= n {
        return Err(Error::InvalidParams(format!("mode {mode} outside 0..{n}")));
    }
    if model.n() != n {
        return Err(Error::Dimension("model and basis sizes differ".into()));
    }
    let delta_phi: Vec<T> = (0..n).map(|k| basis.delta_phi(k, model.p)).collect();
    let d1 = delta_phi[mode];
    let cross_c = delta_phi.iter().map(|&dk| model.c * d1 * d1 * dk).collect();
    let cross_d = delta_phi.iter().map(|&dk| model.d * d1 * d1 * d1 * dk).collect();
    let lambda_k = basis.omegas.iter().map(|&w| model.eps_m + model.eps_k * w * w).collect();
    let f_k = (0..n).map(|k| basis.phi(k).iter().zip(&model.force).fold(T::zero(), |s, (&a, &b)| s + a * b)).collect();
    Ok(ModalReduction {
        mode,
        omega: basis.omegas[mode],
        check_c: model.c * d1 * d1 * d1,
        check_d: model.d * d1 * d1 * d1 * d1,
        cross_c,
        cross_d,
        lambda_k,
        f_k,
        delta_phi,
        epsilon: model.epsilon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceKind {
    /// `ω_k² ≈ 4ω_m²`
    TwoToOne,
    /// `ω_k² ≈ 9ω_m²`
    ThreeToOne,
    /// `ω_k ≈ ω_m`
    Multiple,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceFlag {
    pub k: usize,
    pub kind: ResonanceKind,
    /// Gap relative to `ω_m²`.
    pub rel_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceReport {
    pub mode: usize,
    pub tol: f64,
    pub flags: Vec<ResonanceFlag>,
}

impl ResonanceReport {
    pub fn is_clear(&self) -> bool {
        self.flags.is_empty()
    }

    /// Turns a non-empty report into [`Error::InternalResonance`].
    pub fn ensure_clear(&self) -> Result<()> {
        if self.is_clear() {
            return Ok(());
        }
        let detail = self.flags.iter().map(|f| format!("k={} {:?} (gap {:.3e})", f.k, f.kind, f.rel_gap)).collect::<Vec<_>>().join(", ");
        Err(Error::InternalResonance { mode: self.mode, detail })
    }
}

pub fn check_internal_resonance<T: Real>(omegas: &[T], mode: usize, tol: T) -> ResonanceReport {
    let wm2 = omegas[mode] * omegas[mode];
    let mut flags = Vec::new();
    for (k, &w) in omegas.iter().enumerate() {
        if k == mode {
            continue;
        }
        let w2 = w * w;
        for (kind, target) in [
            (ResonanceKind::Multiple, wm2),
            (ResonanceKind::TwoToOne, lit::<T>(4.0) * wm2),
            (ResonanceKind::ThreeToOne, lit::<T>(9.0) * wm2),
        ] {
            let gap = (w2 - target).abs() / wm2;
            if gap < tol {
                flags.push(ResonanceFlag { k, kind, rel_gap: gap.as_f64() });
            }
        }
    }
    ResonanceReport { mode, tol: tol.as_f64(), flags }
}

/// JSON description of an N-DOF model: explicit matrices or the chain
/// builder (unit masses, fixed ends).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescription {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub mass: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub stiffness: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub chain: Option<ChainDescription>,
    pub p: usize,
    pub c: f64,
    pub d: f64,
    #[serde(default)]
    pub eps_m: f64,
    #[serde(default)]
    pub eps_k: f64,
    #[serde(default)]
    pub force: Option<Vec<f64>>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDescription {
    pub n: usize,
    pub k: f64,
}

impl ModelDescription {
    pub fn build<T: Real>(&self) -> Result<ModalModel<T>> {
        let conv = |rows: &Vec<Vec<f64>>| -> Result<Matrix<T>> {
            Matrix::from_rows(&rows.iter().map(|r| r.iter().map(|&x| T::lit(x)).collect()).collect::<Vec<_>>())
        };
        let (mass, stiffness) = match (&self.chain, &self.mass, &self.stiffness) {
            (Some(ch), None, None) => {
                let m = ModalModel::<T>::chain(ch.n, T::lit(ch.k), 1, T::zero(), T::zero(), T::one())?;
                (m.mass, m.stiffness)
            }
            (None, Some(m), Some(k)) => (conv(m)?, conv(k)?),
            (Some(_), _, _) => return Err(Error::InvalidParams("give either \"chain\" or \"mass\"+\"stiffness\", not both".into())),
            _ => return Err(Error::InvalidParams("model needs \"chain\" or both \"mass\" and \"stiffness\"".into())),
        };
        let n = mass.rows();
        if let Some(declared) = self.n {
            if declared != n {
                return Err(Error::Dimension(format!("declared n = {declared}, matrices are {n}x{n}")));
            }
        }
        let force = match &self.force {
            Some(f) => f.iter().map(|&x| T::lit(x)).collect(),
            None => vec![T::zero(); n],
        };
        let model = ModalModel {
            mass,
            stiffness,
            p: self.p,
            c: T::lit(self.c),
            d: T::lit(self.d),
            eps_m: T::lit(self.eps_m),
            eps_k: T::lit(self.eps_k),
            force,
            epsilon: T::lit(self.epsilon),
        };
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_problem() {
        let mut m = ModalModel::<f64>::chain(2, 1.0, 1, 0.0, 0.0, 0.01).unwrap();
        m.stiffness = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let b = solve_generalized_eigen(&m).unwrap();
        assert!((b.omegas[0] - 1.0).abs() < 1e-14 && (b.omegas[1] - 2.0).abs() < 1e-14);
        assert!((b.phis[(0, 0)] - 1.0).abs() < 1e-14 && b.phis[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn one_dof_reduction_reproduces_scalars() {
        let m = 2.5;
        let mut model = ModalModel::<f64>::chain(1, 3.0, 1, 0.7, 1.3, 0.01).unwrap();
        model.mass = Matrix::from_rows(&[vec![m]]).unwrap();
        let b = solve_generalized_eigen(&model).unwrap();
        let r = modal_reduce(&model, &b, 0).unwrap();
        let phi = 1.0 / m.sqrt();
        assert!((r.check_c - 0.7 * phi.powi(3)).abs() < 1e-14);
        assert!((r.check_d - 1.3 * phi.powi(4)).abs() < 1e-14);
    }

    #[test]
    fn resonance_flags() {
        let r = check_internal_resonance(&[1.0, 2.0, 5.0], 0, 1e-6);
        assert_eq!(r.flags.len(), 1);
        assert_eq!(r.flags[0].k, 1);
        assert_eq!(r.flags[0].kind, ResonanceKind::TwoToOne);
        let r = check_internal_resonance(&[1.0, 3.001], 0, 1e-2);
        assert_eq!(r.flags[0].kind, ResonanceKind::ThreeToOne);
        assert!(r.ensure_clear().is_err());
    }

    #[test]
    fn params_validation() {
        let mut p = OscillatorParams::free(1.0, 1.0, 1.0, 0.01);
        assert!(p.validate().is_ok());
        p.sigma = -200.0;
        assert!(p.validate().is_err());
        p.sigma = 0.0;
        p.lambda = -1.0;
        assert!(p.validate().is_err());
    }
}

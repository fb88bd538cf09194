//! Second-order triple-scale expansion of free vibrations and the
//! amplitude-dependent backbone frequency.
//!
//! `a` is the amplitude of the scaled solution, so the physical amplitude
//! is about `ε·a`.

use serde::{Deserialize, Serialize};

use crate::model::{check_internal_resonance, Eigenbasis, ModalReduction, OscillatorParams};
use crate::scalar::lit;
use crate::{Error, Real, Result};

/// Number of retained orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Order {
    First,
    #[default]
    Second,
}

impl Order {
    pub fn from_index(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            _ => Err(Error::InvalidParams(format!("order must be 1 or 2, got {n}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::First => 1,
            Self::Second => 2,
        }
    }
}

/// Choice of the homogeneous `cos(νt)` component of the second-order term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// `ũ(0) = εa + ε²(−ca²/(3ω²) + da³/(32ω²))`
    #[default]
    Standard,
    /// `ũ(0) = εa` exactly: the `cos(νt)` term cancels the ε² offset.
    ExactAmplitude,
}

/// `ν_ε = ω + ε·3da²/(8ω) + ε²·(−5c²a²/(12ω³) − 15d²a⁴/(256ω³))`.
pub fn backbone_frequency<T: Real>(a: T, params: &OscillatorParams<T>) -> T {
    let OscillatorParams { omega: w, c, d, epsilon: e, .. } = *params;
    let a2 = a * a;
    let w3 = w * w * w;
    w + e * lit::<T>(3.0) * d * a2 / (lit::<T>(8.0) * w)
        + e * e * (-lit::<T>(5.0) * c * c * a2 / (lit::<T>(12.0) * w3) - lit::<T>(15.0) * d * d * a2 * a2 / (lit::<T>(256.0) * w3))
}

/// Backbone truncated after the ε term.
pub fn backbone_frequency_order1<T: Real>(a: T, params: &OscillatorParams<T>) -> T {
    params.omega + params.epsilon * lit::<T>(3.0) * params.d * a * a / (lit::<T>(8.0) * params.omega)
}

/// `d²ν_ε/da² = ε·3d/(4ω) + ε²·(−5c²/(6ω³) − 45d²a²/(64ω³))`.
pub fn backbone_second_derivative<T: Real>(a: T, params: &OscillatorParams<T>) -> T {
    let OscillatorParams { omega: w, c, d, epsilon: e, .. } = *params;
    let w3 = w * w * w;
    e * lit::<T>(3.0) * d / (lit::<T>(4.0) * w)
        + e * e * (-lit::<T>(5.0) * c * c / (lit::<T>(6.0) * w3) - lit::<T>(45.0) * d * d * a * a / (lit::<T>(64.0) * w3))
}

/// Free expansion
/// `ũ = εa cos νt + ε²(−ca²/(2ω²) + ca²/(6ω²) cos 2νt + da³/(32ω²) cos 3νt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeExpansion<T> {
    pub a: T,
    pub nu: T,
    pub params: OscillatorParams<T>,
    pub order: Order,
    pub initial: InitialCondition,
}

impl<T: Real> FreeExpansion<T> {
    pub fn new(a: T, params: OscillatorParams<T>, order: Order) -> Self {
        Self { a, nu: backbone_frequency(a, &params), params, order, initial: InitialCondition::Standard }
    }

    pub fn with_initial(mut self, initial: InitialCondition) -> Self {
        self.initial = initial;
        self
    }

    /// Coefficients `(constant, cos θ, cos 2θ, cos 3θ)` of the ε² bracket.
    fn second_order_coefficients(&self) -> [T; 4] {
        let OscillatorParams { omega: w, c, d, .. } = self.params;
        let a = self.a;
        let w2 = w * w;
        let c0 = -c * a * a / (lit::<T>(2.0) * w2);
        let c2 = c * a * a / (lit::<T>(6.0) * w2);
        let c3 = d * a * a * a / (lit::<T>(32.0) * w2);
        let c1 = match self.initial {
            InitialCondition::Standard => T::zero(),
            InitialCondition::ExactAmplitude => -(c0 + c2 + c3),
        };
        [c0, c1, c2, c3]
    }

    /// Physical displacement `ũ_app(t)`.
    pub fn displacement(&self, t: T) -> T {
        let e = self.params.epsilon;
        let th = self.nu * t;
        let mut u = e * self.a * th.cos();
        if self.order == Order::Second {
            let [c0, c1, c2, c3] = self.second_order_coefficients();
            u += e * e * (c0 + c1 * th.cos() + c2 * (lit::<T>(2.0) * th).cos() + c3 * (lit::<T>(3.0) * th).cos());
        }
        u
    }

    /// Physical velocity `dũ_app/dt`.
    pub fn velocity(&self, t: T) -> T {
        let e = self.params.epsilon;
        let nu = self.nu;
        let th = nu * t;
        let mut v = -e * self.a * nu * th.sin();
        if self.order == Order::Second {
            let [_, c1, c2, c3] = self.second_order_coefficients();
            let (two, three) = (lit::<T>(2.0), lit::<T>(3.0));
            v -= e * e * nu * (c1 * th.sin() + two * c2 * (two * th).sin() + three * c3 * (three * th).sin());
        }
        v
    }

    /// Physical `(ũ(0), ũ̇(0))`.
    pub fn initial_state(&self) -> (T, T) {
        (self.displacement(T::zero()), self.velocity(T::zero()))
    }
}

/// Physical displacement of the free expansion at time `t`.
pub fn evaluate_free_expansion<T: Real>(t: T, a: T, params: &OscillatorParams<T>, order: Order) -> T {
    FreeExpansion::new(a, *params, order).displacement(t)
}

/// Denominator of the constant ε² term of the non-driven modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CrossModeVariant {
    /// `−č_k a²/(2ω_k²)`, as in the free-vibration expansion.
    #[default]
    FreeDenominator,
    /// `−č_k a²/(2(ω_k² − ω_m²))`, the constant-denominator forced form.
    ForcedDenominator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NdofExpansionOptions {
    pub order: Order,
    pub variant: CrossModeVariant,
    /// Adds the non-driven response at the fundamental,
    /// `−3ď_k a³/(4(ω_k² − ω_m²)) cos θ`; off by default.
    pub fundamental_terms: bool,
    /// Relative tolerance of the internal-resonance guard.
    pub resonance_tol: f64,
}

impl Default for NdofExpansionOptions {
    fn default() -> Self {
        Self { order: Order::Second, variant: CrossModeVariant::FreeDenominator, fundamental_terms: false, resonance_tol: 1e-3 }
    }
}

/// Per-mode coefficients `(constant, cos θ, cos 2θ, cos 3θ)` of the ε²
/// response of non-driven mode `k` when the driven mode has amplitude `a`.
pub(crate) fn cross_mode_coefficients<T: Real>(
    red: &ModalReduction<T>,
    omegas: &[T],
    k: usize,
    a: T,
    variant: CrossModeVariant,
    fundamental_terms: bool,
) -> [T; 4] {
    let wm2 = red.omega * red.omega;
    let wk2 = omegas[k] * omegas[k];
    let (ck, dk) = (red.cross_c[k], red.cross_d[k]);
    let a2 = a * a;
    let d0 = match variant {
        CrossModeVariant::FreeDenominator => wk2,
        CrossModeVariant::ForcedDenominator => wk2 - wm2,
    };
    let two = lit::<T>(2.0);
    let four = lit::<T>(4.0);
    let c0 = -ck * a2 / (two * d0);
    let c2 = ck * a2 / (two * (four * wm2 - wk2));
    let c3 = dk * a2 * a / (four * (lit::<T>(9.0) * wm2 - wk2));
    let c1 = if fundamental_terms { -lit::<T>(3.0) * dk * a2 * a / (four * (wk2 - wm2)) } else { T::zero() };
    [c0, c1, c2, c3]
}

/// Free N-DOF expansion around the driven mode of a [`ModalReduction`].
#[derive(Debug, Clone)]
pub struct FreeNdofExpansion<T> {
    pub driven: FreeExpansion<T>,
    pub reduction: ModalReduction<T>,
    pub basis: Eigenbasis<T>,
    pub options: NdofExpansionOptions,
    coeffs: Vec<[T; 4]>,
}

impl<T: Real> FreeNdofExpansion<T> {
    /// Refuses when the driven mode is in internal resonance.
    pub fn new(a1: T, reduction: &ModalReduction<T>, basis: &Eigenbasis<T>, options: NdofExpansionOptions) -> Result<Self> {
        check_internal_resonance(&basis.omegas, reduction.mode, T::lit(options.resonance_tol)).ensure_clear()?;
        let params = reduction.effective_params(T::zero());
        let params = OscillatorParams { lambda: T::zero(), f_m: T::zero(), ..params };
        let driven = FreeExpansion::new(a1, params, options.order);
        let coeffs = (0..basis.n())
            .map(|k| {
                if k == reduction.mode || options.order == Order::First {
                    [T::zero(); 4]
                } else {
                    cross_mode_coefficients(reduction, &basis.omegas, k, a1, options.variant, options.fundamental_terms)
                }
            })
            .collect();
        Ok(Self { driven, reduction: reduction.clone(), basis: basis.clone(), options, coeffs })
    }

    /// Physical modal coordinates `ỹ_k(t)`.
    pub fn modal(&self, t: T) -> Vec<T> {
        let e = self.driven.params.epsilon;
        let th = self.driven.nu * t;
        let (two, three) = (lit::<T>(2.0), lit::<T>(3.0));
        (0..self.basis.n())
            .map(|k| {
                if k == self.reduction.mode {
                    self.driven.displacement(t)
                } else {
                    let [c0, c1, c2, c3] = self.coeffs[k];
                    e * e * (c0 + c1 * th.cos() + c2 * (two * th).cos() + c3 * (three * th).cos())
                }
            })
            .collect()
    }

    /// Physical modal velocities.
    pub fn modal_velocity(&self, t: T) -> Vec<T> {
        let e = self.driven.params.epsilon;
        let nu = self.driven.nu;
        let th = nu * t;
        let (two, three) = (lit::<T>(2.0), lit::<T>(3.0));
        (0..self.basis.n())
            .map(|k| {
                if k == self.reduction.mode {
                    self.driven.velocity(t)
                } else {
                    let [_, c1, c2, c3] = self.coeffs[k];
                    -e * e * nu * (c1 * th.sin() + two * c2 * (two * th).sin() + three * c3 * (three * th).sin())
                }
            })
            .collect()
    }

    /// Physical displacement `ũ = Σ ỹ_k φ_k`.
    pub fn displacement(&self, t: T) -> Vec<T> {
        self.basis.to_physical(&self.modal(t))
    }

    pub fn velocity(&self, t: T) -> Vec<T> {
        self.basis.to_physical(&self.modal_velocity(t))
    }
}

/// Physical displacement vector of the free N-DOF expansion at time `t`.
pub fn evaluate_free_expansion_ndof<T: Real>(
    t: T,
    a1: T,
    reduction: &ModalReduction<T>,
    basis: &Eigenbasis<T>,
    order: Order,
) -> Result<Vec<T>> {
    let opts = NdofExpansionOptions { order, ..Default::default() };
    Ok(FreeNdofExpansion::new(a1, reduction, basis, opts)?.displacement(t))
}

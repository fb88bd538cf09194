//! Triple-scale asymptotics for weakly damped, weakly forced Duffing-type
//! oscillators with quadratic and cubic stiffness, and the numerical
//! machinery used to check them against direct integration.
//!
//! The library is generic over the floating point type through [`Real`];
//! `f64` aliases for the common types live at the crate root.

// Negated comparisons deliberately reject NaN; index loops follow the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod asymptotic_forced;
pub mod asymptotic_free;
mod error;
pub mod io;
pub mod linalg;
pub mod model;
mod scalar;
mod solve;
pub mod spectral;
pub mod timestep;
pub mod validation;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double precision oscillator parameters.
pub type Params = model::OscillatorParams<f64>;
/// Double precision N-DOF model.
pub type Model = model::ModalModel<f64>;
/// Double precision eigenbasis.
pub type Basis = model::Eigenbasis<f64>;
/// Double precision modal reduction.
pub type Reduction = model::ModalReduction<f64>;
/// Double precision stationary point of the slow flow.
pub type Stationary = asymptotic_forced::StationaryPoint<f64>;
/// Double precision resonance peak estimate.
pub type Peak = asymptotic_forced::PeakEstimate<f64>;
/// Double precision frequency response curve.
pub type Curve = asymptotic_forced::ResponseCurve<f64>;
/// Double precision trajectory.
pub type Traj = timestep::Trajectory<f64>;
/// Double precision amplitude spectrum.
pub type Spec = spectral::Spectrum<f64>;

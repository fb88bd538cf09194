//! Run configuration: one JSON file, unknown keys rejected, validated before
//! dispatch. Amplitudes are given either in the scaled unit `a` or as the
//! physical amplitude `A = εa`.

use std::path::Path;

use serde::Deserialize;
use triscale::model::{ModalModel, ModelDescription, OscillatorParams};
use triscale::timestep::Tolerances;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Single-DOF oscillator.
    pub params: Option<OscillatorParams<f64>>,
    /// N-DOF model; exclusive with `params`.
    pub model: Option<ModelDescription>,
    /// Driven mode (0-based) for N-DOF commands.
    #[serde(default)]
    pub mode: usize,
    /// Detuning of the driven mode for N-DOF forced commands.
    pub sigma: Option<f64>,
    /// Scaled amplitude `a`.
    pub amplitude: Option<f64>,
    /// Physical amplitude `A`, converted to `a = A/ε`.
    pub physical_amplitude: Option<f64>,
    pub amplitude_grid: Option<Grid>,
    pub sigma_range: Option<[f64; 2]>,
    pub n_points: Option<usize>,
    /// Expansion order (1 or 2).
    pub order: Option<u8>,
    pub t_end: Option<f64>,
    /// Output sampling step of `simulate`.
    pub dt: Option<f64>,
    /// Physical initial state; defaults to the expansion at `amplitude`.
    pub initial: Option<InitialState>,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    pub validate: Option<ValidateConfig>,
    pub tolerances: Option<Tolerances<f64>>,
}

/// `n` evenly spaced points on `[start, stop]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
    /// Points are physical amplitudes `A`.
    #[serde(default)]
    pub physical: bool,
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        if self.n < 2 || !(self.stop > self.start) {
            return Err(CliError::Config("amplitude_grid needs n >= 2 and stop > start".into()));
        }
        let h = (self.stop - self.start) / (self.n - 1) as f64;
        Ok((0..self.n).map(|i| self.start + i as f64 * h).collect())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub n_samples: usize,
    /// Analysis window at the end of the run; defaults to the whole run.
    pub window: Option<f64>,
    /// Displacement component (0-based).
    pub component: usize,
    pub n_peaks: usize,
    /// Peak threshold relative to the largest non-DC bin.
    pub floor: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { n_samples: 1 << 14, window: None, component: 0, n_peaks: 5, floor: 0.01 }
    }
}

/// One validation experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValidateConfig {
    FreeConvergence {
        epsilons: Vec<f64>,
        gamma: Option<f64>,
        #[serde(default)]
        long_horizon: bool,
    },
    ForcedConvergence {
        epsilons: Vec<f64>,
        /// `(δa, δβ)` added to the stationary start.
        #[serde(default)]
        offset: [f64; 2],
        gamma: Option<f64>,
    },
    ForcedNdofConvergence {
        epsilons: Vec<f64>,
        gamma: Option<f64>,
    },
    StationaryAccuracy {
        transient: f64,
        window: f64,
    },
    PeakLocation {
        epsilons: Vec<f64>,
    },
    Envelope {
        beta: f64,
    },
    Return {
        perturbation: [f64; 2],
    },
    Horizon {
        epsilons: Vec<f64>,
        gamma: Option<f64>,
    },
    Variants {
        periods: usize,
    },
    Nnm {
        epsilons: Vec<f64>,
        periods: Option<usize>,
        n_samples: Option<usize>,
    },
}

/// The system a command acts on.
pub enum System {
    Single(OscillatorParams<f64>),
    Multi(ModalModel<f64>),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn system(&self) -> Result<System, CliError> {
        match (&self.params, &self.model) {
            (Some(p), None) => {
                p.validate()?;
                Ok(System::Single(*p))
            }
            (None, Some(m)) => Ok(System::Multi(m.build()?)),
            (Some(_), Some(_)) => Err(CliError::Config("give either \"params\" or \"model\", not both".into())),
            (None, None) => Err(CliError::Config("config needs \"params\" or \"model\"".into())),
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.params.map(|p| p.epsilon).or(self.model.as_ref().map(|m| m.epsilon))
    }

    /// Scaled amplitude from `amplitude` or `physical_amplitude`.
    pub fn scaled_amplitude(&self) -> Result<Option<f64>, CliError> {
        match (self.amplitude, self.physical_amplitude) {
            (Some(_), Some(_)) => Err(CliError::Config("give either \"amplitude\" or \"physical_amplitude\", not both".into())),
            (Some(a), None) => Ok(Some(a)),
            (None, Some(big_a)) => {
                let e = self.epsilon().ok_or_else(|| CliError::Config("physical_amplitude needs an epsilon".into()))?;
                Ok(Some(big_a / e))
            }
            (None, None) => Ok(None),
        }
    }

    /// Scaled amplitude grid, default `a ∈ [0, 3]` with 61 points.
    pub fn amplitude_points(&self) -> Result<Vec<f64>, CliError> {
        let Some(g) = &self.amplitude_grid else {
            return Ok((0..=60).map(|i| i as f64 * 0.05).collect());
        };
        let pts = g.points()?;
        if !g.physical {
            return Ok(pts);
        }
        let e = self.epsilon().ok_or_else(|| CliError::Config("physical grid needs an epsilon".into()))?;
        Ok(pts.into_iter().map(|x| x / e).collect())
    }

    pub fn order(&self) -> Result<triscale::asymptotic_free::Order, CliError> {
        Ok(triscale::asymptotic_free::Order::from_index(self.order.unwrap_or(2))?)
    }

    pub fn require_t_end(&self) -> Result<f64, CliError> {
        match self.t_end {
            Some(t) if t > 0.0 && t.is_finite() => Ok(t),
            Some(t) => Err(CliError::Config(format!("t_end = {t} must be positive"))),
            None => Err(CliError::Config("this command needs \"t_end\"".into())),
        }
    }

    /// Tolerances from the config, overridden by command line flags.
    pub fn tolerances(&self, rel: Option<f64>, abs: Option<f64>) -> Result<Tolerances<f64>, CliError> {
        let mut tol = self.tolerances.unwrap_or_default();
        if let Some(r) = rel {
            tol.rel_tol = r;
        }
        if let Some(a) = abs {
            tol.abs_tol = a;
        }
        tol.validate()?;
        Ok(tol)
    }
}

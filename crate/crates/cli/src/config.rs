use std::path::Path;

use semiflow_core::analytic::{AnalyticFn, GridSpec};
use semiflow_core::blaschke::BlaschkeProduct;
use semiflow_core::cocycle::{ConsistencyNorm, WeightSpec};
use semiflow_core::flow::{ConformalMap, FlowModel};
use semiflow_core::Complex64;
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

/// Thresholds applied to the checks.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Integrator tolerance for ODE flows.
    pub ode: f64,
    /// Bound on quadrature- and integrator-limited identities.
    pub quadrature: f64,
    /// Bound on finite-difference round trips.
    pub fd: f64,
    /// Bound on identities that hold up to roundoff.
    pub algebraic: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { ode: 1e-10, quadrature: 1e-8, fd: 1e-6, algebraic: 1e-12 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub flow: Option<FlowModel>,
    pub weight: Option<WeightSpec>,
    pub function: Option<AnalyticFn>,
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,

    /// Starting point for `flow-trace`.
    pub z: Option<Complex64>,
    /// Horizon for `flow-trace` and single-time checks.
    pub t: Option<f64>,
    /// Random test points for the round-trip checks.
    pub points: Option<usize>,
    pub max_radius: Option<f64>,
    pub max_time: Option<f64>,
    pub h_ladder: Option<Vec<f64>>,
    pub t_ladder: Option<Vec<f64>>,
    pub norm: Option<ConsistencyNorm>,

    /// `α` for `coboundary-check`.
    pub alpha: Option<AnalyticFn>,
    /// Conformal map for `transfer-check`.
    pub conformal: Option<ConformalMap>,

    pub blaschke: Option<BlaschkeProduct>,
    pub marked: Option<Vec<usize>>,
    pub disc_radius: Option<f64>,
    pub samples_per_disc: Option<usize>,

    pub levels: Option<usize>,
    pub t_start: Option<f64>,
    pub gamma0: Option<Complex64>,
    pub rotations: Option<Vec<f64>>,
}

pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub digest: String,
}

pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let bytes = std::fs::read(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let config: ExperimentConfig =
        serde_json::from_slice(&bytes).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    config.validate()?;
    let digest = hex::encode(Sha256::digest(&bytes));
    Ok(LoadedConfig { config, digest })
}

impl ExperimentConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.tolerances;
        for (name, v) in [("ode", t.ode), ("quadrature", t.quadrature), ("fd", t.fd), ("algebraic", t.algebraic)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError(format!("tolerance '{name}' must be positive")));
            }
        }
        if let Some(r) = self.max_radius {
            if !(r > 0.0 && r < 1.0) {
                return Err(ConfigError("max_radius must lie in (0, 1)".into()));
            }
        }
        if let Some(t) = self.max_time {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ConfigError("max_time must be positive".into()));
            }
        }
        if self.points == Some(0) {
            return Err(ConfigError("points must be positive".into()));
        }
        Ok(())
    }

    pub fn flow(&self) -> Result<FlowModel, ConfigError> {
        let flow = self.flow.clone().ok_or_else(|| ConfigError("missing 'flow'".into()))?;
        flow.with_ode_tol(self.tolerances.ode).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn function(&self) -> Result<AnalyticFn, ConfigError> {
        self.function.clone().ok_or_else(|| ConfigError("missing 'function'".into()))
    }

    pub fn weight_or_zero(&self) -> WeightSpec {
        self.weight.clone().unwrap_or_else(|| WeightSpec::weight(AnalyticFn::zero()))
    }

    pub fn grid_or_default(&self) -> GridSpec {
        self.grid.clone().unwrap_or_else(|| GridSpec::uniform(12, 64, 0.98).expect("valid default grid"))
    }
}

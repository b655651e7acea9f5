//! Run configuration read from TOML; command-line flags override it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bundle::BundleParams;
use crate::correction::CorrOptions;
use crate::error::{Error, Result};
use crate::model::Mode;
use crate::solver::SolverSettings;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub epsilon: f64,
    pub alpha: f64,
    pub max_iters: usize,
    /// 0 uses every core.
    pub threads: usize,
    pub seed: u64,
    /// Couples storage energy to power, `x_es_e = d * x_es_p`, when set.
    pub battery_duration: Option<f64>,
    pub solver: SolverSettings,
    pub corr: CorrOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Scdc,
            epsilon: 1e-3,
            alpha: 0.3,
            max_iters: 500,
            threads: 0,
            seed: 0,
            battery_duration: None,
            solver: SolverSettings::default(),
            corr: CorrOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::parse(path, e.to_string()))?;
        Self::from_toml(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Validation(format!("epsilon {} must be positive", self.epsilon)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be at least 1".into()));
        }
        if let Some(d) = self.battery_duration {
            if !(d > 0.0) {
                return Err(Error::Validation("battery_duration must be positive".into()));
            }
        }
        let s = &self.solver;
        if !(s.feas_tol > 0.0 && s.opt_tol > 0.0 && s.time_limit_s > 0.0) {
            return Err(Error::Validation("solver tolerances and time limit must be positive".into()));
        }
        Ok(())
    }

    pub fn bundle_params(&self) -> BundleParams {
        BundleParams {
            epsilon: self.epsilon,
            alpha: self.alpha,
            max_iters: self.max_iters,
            threads: self.threads,
            settings: self.solver,
        }
    }
}

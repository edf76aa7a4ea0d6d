//! Flat key-value configuration (TOML syntax, no tables required).
//!
//! ```toml
//! alpha = 1.0
//! dimension = 2
//! profile = "power"        # or "anisotropic"
//! coefficient = 1.0
//! strength = 0.1           # anisotropic only
//! beta = 1.5               # optional decay triple
//! m0 = 1.5
//! r0 = 1.0
//! H = 1.0
//! R = 16.0
//! n = 512
//! ```
//!
//! Unknown keys are rejected so that typos surface as configuration errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::minimize::SolverConfig;
use crate::potential::{DecayParams, PotentialSpec, Profile};
use crate::symloop::DEFAULT_NODES;

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub dimension: usize,
    pub profile: String,
    #[serde(default = "one")]
    pub coefficient: f64,
    #[serde(default)]
    pub strength: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub m0: Option<f64>,
    #[serde(default)]
    pub r0: Option<f64>,
    /// Unit direction `e`; defaults to the first axis.
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    #[serde(default = "one", rename = "H")]
    pub energy: f64,
    #[serde(default, rename = "R")]
    pub radius: Option<f64>,
    #[serde(default = "default_nodes")]
    pub n: usize,
    #[serde(default)]
    pub tol_kkt: Option<f64>,
    #[serde(default)]
    pub tol_constraint: Option<f64>,
    #[serde(default)]
    pub max_outer: Option<usize>,
    #[serde(default)]
    pub max_inner: Option<usize>,
    #[serde(default)]
    pub collision_floor: Option<f64>,
    /// Half-width of the window used by the local-limit (Cauchy) proxy.
    #[serde(default)]
    pub window: Option<f64>,
    /// Angular threshold for the direction diagnostics.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Hypothesis sample count.
    #[serde(default)]
    pub samples: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OrbitError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| OrbitError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Builds the potential. Structural problems are config errors; the
    /// hypothesis range is checked separately.
    pub fn potential(&self) -> Result<PotentialSpec> {
        let profile = match self.profile.as_str() {
            "power" => Profile::Power {
                coefficient: self.coefficient,
            },
            "anisotropic" => Profile::Anisotropic {
                coefficient: self.coefficient,
                strength: self
                    .strength
                    .ok_or_else(|| OrbitError::Config("anisotropic profile needs 'strength'".into()))?,
            },
            other => return Err(OrbitError::Config(format!("unknown profile '{other}'"))),
        };
        let mut spec = PotentialSpec::new(self.alpha, self.dimension, profile).map_err(to_config)?;
        match (self.beta, self.m0, self.r0) {
            (Some(beta), Some(m0), Some(r0)) => spec = spec.with_decay(DecayParams { beta, m0, r0 }),
            (None, None, None) => {}
            _ => return Err(OrbitError::Config("beta, m0 and r0 must be given together".into())),
        }
        Ok(spec)
    }

    pub fn direction(&self) -> Result<Vec<f64>> {
        match &self.direction {
            Some(e) if e.len() == self.dimension => Ok(e.clone()),
            Some(_) => Err(OrbitError::Config("direction length differs from dimension".into())),
            None => {
                let mut e = vec![0.0; self.dimension];
                e[0] = 1.0;
                Ok(e)
            }
        }
    }

    pub fn solver(&self) -> SolverConfig {
        let mut c = SolverConfig::default();
        if let Some(v) = self.tol_kkt {
            c.tol_kkt = v;
        }
        if let Some(v) = self.tol_constraint {
            c.tol_constraint = v;
        }
        if let Some(v) = self.max_outer {
            c.max_outer = v;
        }
        if let Some(v) = self.max_inner {
            c.max_inner = v;
        }
        c.collision_floor = self.collision_floor;
        c
    }
}

fn to_config(e: OrbitError) -> OrbitError {
    match e {
        OrbitError::InvalidInput(s) => OrbitError::Config(s),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_power_config() {
        let c = RunConfig::from_toml_str("alpha = 1.0\ndimension = 2\nprofile = \"power\"\n").unwrap();
        assert_eq!(c.n, 512);
        assert_eq!(c.energy, 1.0);
        let spec = c.potential().unwrap();
        assert_eq!(spec.eval_potential(&[2.0, 0.0]).unwrap(), 0.5);
        assert_eq!(c.direction().unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_missing_profile_and_unknown_keys() {
        assert!(matches!(
            RunConfig::from_toml_str("alpha = 1.0\ndimension = 2\n"),
            Err(OrbitError::Config(_))
        ));
        assert!(RunConfig::from_toml_str("alpha = 1.0\ndimension = 2\nprofile = \"power\"\nalpah = 3\n").is_err());
        let c = RunConfig::from_toml_str("alpha = 1.0\ndimension = 2\nprofile = \"cubic\"\n").unwrap();
        assert!(matches!(c.potential(), Err(OrbitError::Config(_))));
    }

    #[test]
    fn anisotropic_and_decay() {
        let c = RunConfig::from_toml_str(
            "alpha = 1.5\ndimension = 3\nprofile = \"anisotropic\"\nstrength = 0.1\nbeta = 1.5\nm0 = 1.5\nr0 = 1.0\n",
        )
        .unwrap();
        let spec = c.potential().unwrap();
        assert!(spec.decay.is_some());
        let partial =
            RunConfig::from_toml_str("alpha = 1.5\ndimension = 2\nprofile = \"power\"\nbeta = 1.5\n").unwrap();
        assert!(partial.potential().is_err());
    }
}

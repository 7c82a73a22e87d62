//! Frozen acceptance thresholds, read from `expectations.toml`.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../expectations.toml");

#[derive(Debug, Clone, Deserialize)]
pub struct Expectations {
    pub version: u32,
    pub seed: u64,
    pub analytic: Analytic,
    pub surrogate: Surrogate,
    pub variance: Variance,
    pub modulus: Modulus,
    pub wild: Wild,
    pub direct: Direct,
    pub resolvent: Resolvent,
    pub lipschitz: Lipschitz,
    pub determinism: Determinism,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Analytic {
    pub family: String,
    pub t: f64,
    pub grid: usize,
    pub density_l1: f64,
    pub lyapunov_tol: f64,
    pub jump_tol: f64,
    pub j: f64,
    pub j_tol: f64,
    pub response: f64,
    pub response_tol: f64,
    pub psi: f64,
    pub psi_tol: f64,
    pub sigma_tol: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Surrogate {
    pub window: (f64, f64),
    pub observable: String,
    pub orbit_length: usize,
    pub samples: usize,
    pub ks_max: f64,
    pub mean_abs_max: f64,
    pub variance_min: f64,
    pub variance_max: f64,
    pub runtime_s: f64,
    pub runtime_workers: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Variance {
    pub window: (f64, f64),
    pub observable: String,
    pub neg_log_h: Vec<f64>,
    pub samples: usize,
    pub slope: f64,
    pub slope_tol: f64,
    pub r_squared_min: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Modulus {
    pub t: f64,
    pub grid: usize,
    pub steps: Vec<f64>,
    pub max_over_min: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Wild {
    pub window: (f64, f64),
    pub observable: String,
    pub h: f64,
    pub samples: usize,
    pub fraction_min: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Direct {
    pub window: (f64, f64),
    pub observable: String,
    pub h: f64,
    pub grid: usize,
    pub samples: usize,
    pub spearman_min: f64,
    pub sign_agreement_min: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Resolvent {
    pub t: f64,
    pub log2_sizes: Vec<u32>,
    pub location: f64,
    pub tol: f64,
    pub r_squared_min: f64,
    pub contract_grid: usize,
    pub contract_inputs: usize,
    pub contract_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Lipschitz {
    pub window: (f64, f64),
    pub observable: String,
    pub orbit_lengths: Vec<usize>,
    pub samples: usize,
    pub growth_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Determinism {
    pub samples: usize,
    pub orbit_length: usize,
}

impl Expectations {
    /// The thresholds shipped with this crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("bundled expectations.toml is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Argument(format!("expectations: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Argument(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_file_parses() {
        let e = Expectations::builtin();
        assert_eq!(e.version, 1);
        assert_eq!(e.modulus.steps.len(), 5);
        assert!(Expectations::parse("version = 1").is_err());
    }
}

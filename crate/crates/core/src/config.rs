//! Scenario configuration.
//!
//! Loaded from TOML. Every key is optional; missing keys take the defaults of
//! the reference indoor scenario (BS near IRS 2, user cluster near IRS 1,
//! roughly 50 m apart).
//!
//! ```toml
//! bs_antennas = 8
//! irs1_subsurfaces = 20
//! irs2_subsurfaces = 20
//! users = 4
//! gamma0 = 1e-3            # linear path gain at 1 m
//! alpha_near = 2.2         # user cluster <-> IRS 1, BS <-> IRS 2
//! alpha_far = 3.0          # all other links
//! noise_power_dbm = -65.0  # -inf for noiseless runs
//! tx_power_dbm = 30.0
//! powers_dbm = [20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0]
//! trials = 1000
//! seed = 1
//! nmse_mode = "literal"    # or "per-matrix"
//! rank_tol = 1e-12
//!
//! [positions]
//! bs = [1.0, 0.0, 2.0]
//! irs2 = [0.0, 0.5, 1.0]
//! irs1 = [0.0, 49.5, 1.0]
//! users = [1.0, 50.0, 0.0]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Normalization convention for the NMSE metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NmseMode {
    /// Average of per-matrix normalized errors, further divided by the entry
    /// count of one matrix.
    #[default]
    Literal,
    /// Average of per-matrix normalized errors.
    PerMatrix,
}

impl std::str::FromStr for NmseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(Self::Literal),
            "per-matrix" => Ok(Self::PerMatrix),
            other => Err(format!(
                "unknown NMSE mode `{other}` (expected literal or per-matrix)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Positions {
    pub bs: [f64; 3],
    pub irs2: [f64; 3],
    pub irs1: [f64; 3],
    /// Center of the user cluster; all users share it.
    pub users: [f64; 3],
}

impl Default for Positions {
    fn default() -> Self {
        Self {
            bs: [1.0, 0.0, 2.0],
            irs2: [0.0, 0.5, 1.0],
            irs1: [0.0, 49.5, 1.0],
            users: [1.0, 50.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub bs_antennas: usize,
    pub irs1_subsurfaces: usize,
    pub irs2_subsurfaces: usize,
    pub users: usize,
    pub positions: Positions,
    pub gamma0: f64,
    pub alpha_near: f64,
    pub alpha_far: f64,
    pub noise_power_dbm: f64,
    pub tx_power_dbm: f64,
    pub powers_dbm: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub nmse_mode: NmseMode,
    pub rank_tol: f64,
}

/// Default transmit power grid (dBm); a tool choice spanning low to high SNR.
pub const DEFAULT_POWERS_DBM: [f64; 7] = [20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0];

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            bs_antennas: 8,
            irs1_subsurfaces: 20,
            irs2_subsurfaces: 20,
            users: 4,
            positions: Positions::default(),
            gamma0: 1e-3,
            alpha_near: 2.2,
            alpha_far: 3.0,
            noise_power_dbm: -65.0,
            tx_power_dbm: 30.0,
            powers_dbm: DEFAULT_POWERS_DBM.to_vec(),
            trials: 1000,
            seed: 1,
            nmse_mode: NmseMode::Literal,
            rank_tol: 1e-12,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let counts = [
            ("bs_antennas", self.bs_antennas),
            ("irs1_subsurfaces", self.irs1_subsurfaces),
            ("irs2_subsurfaces", self.irs2_subsurfaces),
            ("users", self.users),
            ("trials", self.trials),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.gamma0.is_finite() && self.gamma0 > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "gamma0 must be positive, got {}",
                self.gamma0
            )));
        }
        for (name, v) in [
            ("alpha_near", self.alpha_near),
            ("alpha_far", self.alpha_far),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{name} must be finite")));
            }
        }
        // -inf dBm noise is the noiseless limit
        if self.noise_power_dbm.is_nan() || self.noise_power_dbm == f64::INFINITY {
            return Err(ConfigError::Invalid(
                "noise_power_dbm must be finite or -inf".into(),
            ));
        }
        for p in std::iter::once(self.tx_power_dbm).chain(self.powers_dbm.iter().copied()) {
            if !p.is_finite() {
                return Err(ConfigError::Invalid(
                    "power levels must be finite dBm values".into(),
                ));
            }
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(ConfigError::Invalid("rank_tol must lie in (0, 1)".into()));
        }
        let p = &self.positions;
        for v in [p.bs, p.irs1, p.irs2, p.users] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ConfigError::Invalid("positions must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn noise_power_watts(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }

    /// Noise power normalized by the per-user transmit power.
    pub fn normalized_noise(&self, tx_power_dbm: f64) -> f64 {
        self.noise_power_watts() / dbm_to_watts(tx_power_dbm)
    }
}

//! Run configuration read from TOML.

use std::path::Path;

use mmqkd::channel_sim::{BasisProbabilities, ChannelSpec};
use mmqkd::decoy::DecoyConfig;
use mmqkd::detector_model::{DetectorSpec, OracleGrid};
use mmqkd::keyrate::{transmissivity_from_db, EpsilonBudget, FecModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// master seed for sampling commands
    pub seed: Option<u64>,
    pub detector: Option<DetectorSpec>,
    pub channel: Option<ChannelSection>,
    #[serde(default)]
    pub decoy: DecoyConfig,
    #[serde(default)]
    pub epsilon: EpsilonBudget,
    #[serde(default)]
    pub error_correction: FecModel,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub misalignment_deg: f64,
    pub n_total: f64,
    /// used by `simulate`; `keyrate` scans `[scan] losses_db` instead
    #[serde(default)]
    pub loss_db: f64,
    #[serde(default)]
    pub bases: BasisProbabilities,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(default)]
    pub losses_db: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub n_max: usize,
    pub corners: bool,
    pub interior_samples: usize,
    pub seed: u64,
}

impl Default for OracleSection {
    fn default() -> Self {
        let g = OracleGrid::default();
        Self { n_max: 4, corners: g.corners, interior_samples: g.interior_samples, seed: g.seed }
    }
}

impl OracleSection {
    pub fn grid(&self) -> OracleGrid {
        OracleGrid { corners: self.corners, interior_samples: self.interior_samples, seed: self.seed }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn detector(&self) -> Result<&DetectorSpec, CliError> {
        self.detector.as_ref().ok_or_else(|| CliError::Config("missing [detector] section".into()))
    }

    /// Channel at the given loss, detector included.
    pub fn channel_at(&self, loss_db: f64) -> Result<ChannelSpec, CliError> {
        let c = self.channel.as_ref().ok_or_else(|| CliError::Config("missing [channel] section".into()))?;
        let spec = ChannelSpec {
            transmissivity: transmissivity_from_db(loss_db),
            misalignment_deg: c.misalignment_deg,
            detector: *self.detector()?,
            bases: c.bases,
            n_total: c.n_total,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn simulate_channel(&self) -> Result<ChannelSpec, CliError> {
        let loss = self.channel.as_ref().map_or(0.0, |c| c.loss_db);
        self.channel_at(loss)
    }

    pub fn validate_common(&self) -> Result<(), CliError> {
        self.decoy.validate()?;
        self.epsilon.validate()?;
        if self.error_correction.f_ec.is_nan() || self.error_correction.f_ec < 1.0 {
            return Err(CliError::Config(format!("f_ec = {} must be at least 1", self.error_correction.f_ec)));
        }
        if let Some(d) = &self.detector {
            d.validate()?;
        }
        if self.scan.losses_db.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(CliError::Config("losses_db entries must be finite and >= 0".into()));
        }
        Ok(())
    }
}

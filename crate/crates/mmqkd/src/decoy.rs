//! Three-intensity decoy analysis: vacuum and single-photon count bounds for one
//! outcome class from its per-intensity counts.
//!
//! Counts are `f64` because expected statistics are fractional.

use serde::{Deserialize, Serialize};

use crate::stat_bounds::hoeffding_decoy_dev;
use crate::{check_eps_sq, Error, Result};

/// Poisson sums are truncated here; for μ ≤ 1 the neglected mass is far below 1e-15.
pub const PHOTON_CUTOFF: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoyConfig {
    /// μ₁ (signal), μ₂, μ₃
    pub intensities: [f64; 3],
    pub probabilities: [f64; 3],
}

impl Default for DecoyConfig {
    fn default() -> Self {
        Self { intensities: [0.9, 0.1, 0.0], probabilities: [1.0 / 3.0; 3] }
    }
}

impl DecoyConfig {
    pub fn validate(&self) -> Result<()> {
        let [m1, m2, m3] = self.intensities;
        if !(m3 >= 0.0 && m2 > m3 && m1 > m2 + m3) || !m1.is_finite() {
            return Err(Error::Config(format!(
                "intensities {:?} must satisfy mu1 > mu2 + mu3 and mu2 > mu3 >= 0",
                self.intensities
            )));
        }
        if self.probabilities.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Config(format!(
                "intensity probabilities {:?} must be in (0, 1]",
                self.probabilities
            )));
        }
        let s: f64 = self.probabilities.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("intensity probabilities sum to {s}, not 1")));
        }
        Ok(())
    }
}

/// e^{−μ} μ^m / m!
pub fn photon_given_intensity(m: usize, mu: f64) -> f64 {
    if mu == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (1..=m).map(|i| (i as f64).ln()).sum();
    (-mu + m as f64 * mu.ln() - ln_fact).exp()
}

/// τ_m = Σ_k p_k e^{−μ_k} μ_k^m / m!
pub fn tau(m: usize, cfg: &DecoyConfig) -> f64 {
    cfg.intensities
        .iter()
        .zip(cfg.probabilities.iter())
        .map(|(&mu, &p)| p * photon_given_intensity(m, mu))
        .sum()
}

/// p(μ_k | m): intensity posterior given the photon number.
pub fn intensity_given_photon(k: usize, m: usize, cfg: &DecoyConfig) -> f64 {
    let t = tau(m, cfg);
    if t == 0.0 {
        return 0.0;
    }
    cfg.probabilities[k] * photon_given_intensity(m, cfg.intensities[k]) / t
}

/// Per-intensity counts of one outcome class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub per_intensity: [f64; 3],
}

impl OutcomeCounts {
    pub fn new(per_intensity: [f64; 3]) -> Self {
        Self { per_intensity }
    }

    pub fn total(&self) -> f64 {
        self.per_intensity.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        if self.per_intensity.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::Domain(format!("counts {:?} must be finite and >= 0", self.per_intensity)));
        }
        Ok(())
    }
}

/// Observed statistics: X-basis conclusive counts, X-basis errors, key counts,
/// and the Z-basis error rate used for error correction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observations {
    pub n_x: [f64; 3],
    pub n_x_err: [f64; 3],
    pub n_k: [f64; 3],
    pub e_z: f64,
}

impl Observations {
    pub fn x(&self) -> OutcomeCounts {
        OutcomeCounts::new(self.n_x)
    }
    pub fn x_err(&self) -> OutcomeCounts {
        OutcomeCounts::new(self.n_x_err)
    }
    pub fn key(&self) -> OutcomeCounts {
        OutcomeCounts::new(self.n_k)
    }

    /// X-basis error rate per intensity (0 where nothing was detected).
    pub fn e_x(&self) -> [f64; 3] {
        let mut e = [0.0; 3];
        for k in 0..3 {
            if self.n_x[k] > 0.0 {
                e[k] = self.n_x_err[k] / self.n_x[k];
            }
        }
        e
    }

    pub fn validate(&self) -> Result<()> {
        self.x().validate()?;
        self.x_err().validate()?;
        self.key().validate()?;
        for k in 0..3 {
            if self.n_x_err[k] > self.n_x[k] {
                return Err(Error::Domain(format!(
                    "more X errors than X detections at intensity {k}"
                )));
            }
        }
        crate::check_prob("e_z", self.e_z)
    }
}

/// n^{μk,±} = (e^{μk}/p_k)(n^{μk} ± t); the minus side is clamped at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedCounts {
    pub minus: [f64; 3],
    pub plus: [f64; 3],
}

pub fn shifted_counts(counts: &OutcomeCounts, cfg: &DecoyConfig, eps_sq: f64) -> Result<ShiftedCounts> {
    counts.validate()?;
    check_eps_sq(eps_sq)?;
    let t = hoeffding_decoy_dev(counts.total(), eps_sq);
    let mut s = ShiftedCounts { minus: [0.0; 3], plus: [0.0; 3] };
    for k in 0..3 {
        let w = cfg.intensities[k].exp() / cfg.probabilities[k];
        s.minus[k] = (w * (counts.per_intensity[k] - t)).max(0.0);
        s.plus[k] = w * (counts.per_intensity[k] + t);
    }
    Ok(s)
}

fn check_cfg(cfg: &DecoyConfig) -> Result<()> {
    if cfg.intensities[1] == cfg.intensities[2] {
        return Err(Error::Config("mu2 == mu3 leaves the vacuum bound undefined".into()));
    }
    cfg.validate()
}

fn vacuum_from(s: &ShiftedCounts, cfg: &DecoyConfig, n_o: f64) -> f64 {
    let [_, m2, m3] = cfg.intensities;
    let b = tau(0, cfg) * (m2 * s.minus[2] - m3 * s.plus[1]) / (m2 - m3);
    b.clamp(0.0, n_o)
}

fn single_lower_from(s: &ShiftedCounts, cfg: &DecoyConfig, vac: f64, n_o: f64) -> f64 {
    let [m1, m2, m3] = cfg.intensities;
    let t0 = tau(0, cfg);
    let pref = m1 * tau(1, cfg) / (m1 * (m2 - m3) - m2 * m2 + m3 * m3);
    let b = pref * (s.minus[1] - s.plus[2] - (m2 * m2 - m3 * m3) / (m1 * m1) * (s.plus[0] - vac / t0));
    b.clamp(0.0, n_o)
}

fn single_upper_from(s: &ShiftedCounts, cfg: &DecoyConfig, n_o: f64) -> f64 {
    let [_, m2, m3] = cfg.intensities;
    let b = tau(1, cfg) * (s.plus[1] - s.minus[2]) / (m2 - m3);
    b.clamp(0.0, n_o)
}

/// Lower bound on the zero-photon count.
pub fn bound_vacuum_lower(counts: &OutcomeCounts, cfg: &DecoyConfig, eps_sq: f64) -> Result<f64> {
    check_cfg(cfg)?;
    let s = shifted_counts(counts, cfg, eps_sq)?;
    Ok(vacuum_from(&s, cfg, counts.total()))
}

/// Lower bound on the single-photon count.
pub fn bound_single_lower(counts: &OutcomeCounts, cfg: &DecoyConfig, eps_sq: f64) -> Result<f64> {
    check_cfg(cfg)?;
    let s = shifted_counts(counts, cfg, eps_sq)?;
    let n_o = counts.total();
    Ok(single_lower_from(&s, cfg, vacuum_from(&s, cfg, n_o), n_o))
}

/// Upper bound on the single-photon count.
pub fn bound_single_upper(counts: &OutcomeCounts, cfg: &DecoyConfig, eps_sq: f64) -> Result<f64> {
    check_cfg(cfg)?;
    let s = shifted_counts(counts, cfg, eps_sq)?;
    Ok(single_upper_from(&s, cfg, counts.total()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds {
    pub vacuum_lower: f64,
    pub single_lower: f64,
    pub single_upper: f64,
    /// set when clamping leaves single_lower > single_upper
    pub infeasible: bool,
}

/// All three bounds for one outcome class.
pub fn decoy_bounds(counts: &OutcomeCounts, cfg: &DecoyConfig, eps_sq: f64) -> Result<DecoyBounds> {
    check_cfg(cfg)?;
    let s = shifted_counts(counts, cfg, eps_sq)?;
    let n_o = counts.total();
    let vacuum_lower = vacuum_from(&s, cfg, n_o);
    let single_lower = single_lower_from(&s, cfg, vacuum_lower, n_o);
    let single_upper = single_upper_from(&s, cfg, n_o);
    Ok(DecoyBounds { vacuum_lower, single_lower, single_upper, infeasible: single_lower > single_upper })
}

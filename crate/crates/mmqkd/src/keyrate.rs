//! Key lengths and ε accounting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_sim::{expected_observations, ChannelSpec};
use crate::decoy::{DecoyConfig, Observations};
use crate::detector_model::{closed_form_deltas, DeltaPair, DetectorSpec};
use crate::phase_error::{bound_decoy_composed, bound_mismatch, PhaseErrorQuery};
use crate::{Error, Result};

/// Failure probabilities (not squared). Missing fields default to 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonBudget {
    pub eps_at_a: f64,
    pub eps_at_b: f64,
    pub eps_at_c: f64,
    pub eps_at_d: f64,
    pub eps_ev: f64,
    pub eps_pa: f64,
}

impl Default for EpsilonBudget {
    fn default() -> Self {
        Self::uniform(1e-12)
    }
}

impl EpsilonBudget {
    pub fn uniform(eps: f64) -> Self {
        Self { eps_at_a: eps, eps_at_b: eps, eps_at_c: eps, eps_at_d: eps, eps_ev: eps, eps_pa: eps }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.eps_at_a, self.eps_at_b, self.eps_at_c, self.eps_at_d, self.eps_ev, self.eps_pa];
        if all.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Config(format!("every epsilon must be in (0, 1), got {all:?}")));
        }
        Ok(())
    }

    /// ε_AT for the decoy protocol: the nine Hoeffding events plus a, b, c.
    pub fn eps_at_decoy(&self) -> f64 {
        (9.0 * self.eps_at_d.powi(2) + self.eps_at_a.powi(2) + self.eps_at_b.powi(2) + self.eps_at_c.powi(2)).sqrt()
    }

    pub fn eps_at_single_photon(&self) -> f64 {
        (self.eps_at_a.powi(2) + self.eps_at_b.powi(2) + self.eps_at_c.powi(2)).sqrt()
    }

    /// 2ε_AT + ε_PA + ε_EV
    pub fn security_parameter_decoy(&self) -> f64 {
        2.0 * self.eps_at_decoy() + self.eps_pa + self.eps_ev
    }

    pub fn security_parameter_single_photon(&self) -> f64 {
        2.0 * self.eps_at_single_photon() + self.eps_pa + self.eps_ev
    }

    /// Bits removed for privacy amplification and error verification.
    pub fn finite_size_cost(&self) -> f64 {
        2.0 * (1.0 / (2.0 * self.eps_pa)).log2() + (2.0 / self.eps_ev).log2()
    }
}

/// Binary entropy, saturated at 1 above one half.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x > 0.5 {
        1.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

/// Bits spent on error correction.
pub trait ErrorCorrectionCost: Sync {
    fn bits(&self, n_key: f64, e_z: f64) -> f64;
}

/// f_EC · n_K · h(e_Z), optionally plus one bit for encoding the transcript.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FecModel {
    pub f_ec: f64,
    pub transcript_bit: bool,
}

impl Default for FecModel {
    fn default() -> Self {
        Self { f_ec: 1.16, transcript_bit: false }
    }
}

impl ErrorCorrectionCost for FecModel {
    fn bits(&self, n_key: f64, e_z: f64) -> f64 {
        lambda_ec_default(n_key, e_z, self.f_ec) + if self.transcript_bit { 1.0 } else { 0.0 }
    }
}

pub fn lambda_ec_default(n_key: f64, e_z: f64, f_ec: f64) -> f64 {
    f_ec * n_key * binary_entropy(e_z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyDecision {
    pub key_length: u64,
    pub lambda_ec: f64,
    pub phase_bound: f64,
    pub feasible: bool,
}

fn finish(n_eff: f64, phase_bound: f64, lambda_ec: f64, budget: &EpsilonBudget, feasible: bool) -> KeyDecision {
    let raw = n_eff * (1.0 - binary_entropy(phase_bound)) - lambda_ec - budget.finite_size_cost();
    let key_length = if feasible && raw > 0.0 { raw.floor() as u64 } else { 0 };
    KeyDecision { key_length, lambda_ec, phase_bound, feasible }
}

/// Key length for a protocol with an ideal single-photon source.
#[allow(clippy::too_many_arguments)]
pub fn key_length_single_photon(
    e_obs: f64,
    n_test: f64,
    n_key: f64,
    e_z: f64,
    deltas: DeltaPair,
    budget: &EpsilonBudget,
    ec: &dyn ErrorCorrectionCost,
) -> Result<KeyDecision> {
    budget.validate()?;
    let pb = bound_mismatch(&PhaseErrorQuery {
        e_obs,
        n_test,
        n_key,
        deltas,
        eps_a_sq: budget.eps_at_a.powi(2),
        eps_b_sq: budget.eps_at_b.powi(2),
        eps_c_sq: budget.eps_at_c.powi(2),
    })?;
    let lambda = ec.bits(n_key, e_z);
    Ok(finish(n_key, pb.value, lambda, budget, !pb.vacuous))
}

/// Key length for decoy-state BB84; key comes from single-photon rounds only.
pub fn key_length_decoy(
    obs: &Observations,
    cfg: &DecoyConfig,
    deltas: DeltaPair,
    budget: &EpsilonBudget,
    ec: &dyn ErrorCorrectionCost,
) -> Result<KeyDecision> {
    let c = bound_decoy_composed(obs, cfg, deltas, budget)?;
    let lambda = ec.bits(obs.key().total(), obs.e_z);
    Ok(finish(c.single_key_lower, c.phase_bound, lambda, budget, c.feasible))
}

/// One row of a loss scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub loss_db: f64,
    pub key_rate_per_pulse: f64,
    pub key_length: u64,
    pub phase_bound: f64,
    pub delta1: f64,
    pub delta2: f64,
}

/// Channel transmissivity for a loss in dB.
pub fn transmissivity_from_db(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Honest expected statistics at each loss, pushed through the decoy key length.
/// δ₁, δ₂ come from the closed form for `tolerance`; the channel itself uses the
/// nominal detector of `channel`. Output order follows `losses_db`.
pub fn scan_loss(
    channel: &ChannelSpec,
    cfg: &DecoyConfig,
    tolerance: &DetectorSpec,
    budget: &EpsilonBudget,
    ec: &dyn ErrorCorrectionCost,
    losses_db: &[f64],
) -> Result<Vec<ScanPoint>> {
    let deltas = closed_form_deltas(tolerance)?;
    losses_db
        .par_iter()
        .map(|&loss_db| {
            let mut ch = channel.clone();
            ch.transmissivity = transmissivity_from_db(loss_db);
            let obs = expected_observations(&ch, cfg)?;
            let d = key_length_decoy(&obs, cfg, deltas, budget, ec)?;
            Ok(ScanPoint {
                loss_db,
                key_rate_per_pulse: d.key_length as f64 / ch.n_total,
                key_length: d.key_length,
                phase_bound: d.phase_bound,
                delta1: deltas.delta1,
                delta2: deltas.delta2,
            })
        })
        .collect()
}

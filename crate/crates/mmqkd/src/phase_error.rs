//! Upper bounds on the phase error rate of the key rounds.

use serde::{Deserialize, Serialize};

use crate::decoy::{decoy_bounds, DecoyBounds, DecoyConfig, Observations};
use crate::detector_model::DeltaPair;
use crate::keyrate::EpsilonBudget;
use crate::stat_bounds::{gamma_bin, gamma_serf};
use crate::{check_eps_sq, check_prob, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorQuery {
    pub e_obs: f64,
    pub n_test: f64,
    pub n_key: f64,
    pub deltas: DeltaPair,
    pub eps_a_sq: f64,
    pub eps_b_sq: f64,
    pub eps_c_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBound {
    pub value: f64,
    /// the bound carries no information (capped at 1)
    pub vacuous: bool,
}

impl PhaseBound {
    fn vacuous() -> Self {
        Self { value: 1.0, vacuous: true }
    }
}

/// e_obs + γ_serf, capped at 1. Empty test or key sets give 1.
pub fn bound_perfect(e_obs: f64, n_test: f64, n_key: f64, eps_sq: f64) -> Result<f64> {
    check_prob("e_obs", e_obs)?;
    check_eps_sq(eps_sq)?;
    if !(n_test > 0.0 && n_key > 0.0) {
        return Ok(1.0);
    }
    Ok((e_obs + gamma_serf(n_test, n_key, eps_sq)?).min(1.0))
}

/// (e_obs + γ_serf + δ₁ + γ_bin(n_K, δ₁)) / (1 − δ₂ − γ_bin(n_K, δ₂)), capped at 1.
///
/// γ_bin takes an integer trial count; fractional n_K is floored, which can only
/// enlarge the deviation.
pub fn bound_mismatch(q: &PhaseErrorQuery) -> Result<PhaseBound> {
    check_prob("e_obs", q.e_obs)?;
    for e in [q.eps_a_sq, q.eps_b_sq, q.eps_c_sq] {
        check_eps_sq(e)?;
    }
    let (d1, d2) = (q.deltas.delta1, q.deltas.delta2);
    if !(d1 >= 0.0 && d2 >= 0.0) {
        return Err(crate::Error::Domain(format!("negative mismatch metrics ({d1}, {d2})")));
    }
    if !(q.n_test > 0.0) || !(q.n_key >= 1.0) {
        return Ok(PhaseBound::vacuous());
    }
    let nk = q.n_key.floor() as u64;
    // γ_bin needs a probability; δ₁ above 1 already makes the bound vacuous
    if d1 > 1.0 || d2 >= 1.0 {
        return Ok(PhaseBound::vacuous());
    }
    let denom = 1.0 - d2 - gamma_bin(nk, d2, q.eps_c_sq)?;
    if denom <= 0.0 {
        return Ok(PhaseBound::vacuous());
    }
    let num = q.e_obs + gamma_serf(q.n_test, q.n_key, q.eps_a_sq)? + d1 + gamma_bin(nk, d1, q.eps_b_sq)?;
    let v = num / denom;
    if v >= 1.0 {
        return Ok(PhaseBound::vacuous());
    }
    Ok(PhaseBound { value: v, vacuous: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComposedBound {
    pub phase_bound: f64,
    /// single-photon X error rate bound B₁ᵁ(X≠)/B₁ᴸ(X), clamped to [0, 1]
    pub e1_upper: f64,
    pub single_test_lower: f64,
    pub single_key_lower: f64,
    pub feasible: bool,
    pub x: DecoyBounds,
    pub x_err: DecoyBounds,
    pub key: DecoyBounds,
}

/// Decoy bounds on every outcome class chained into [`bound_mismatch`].
pub fn bound_decoy_composed(
    obs: &Observations,
    cfg: &DecoyConfig,
    deltas: DeltaPair,
    budget: &EpsilonBudget,
) -> Result<ComposedBound> {
    obs.validate()?;
    budget.validate()?;
    let eps_d = budget.eps_at_d * budget.eps_at_d;
    let x = decoy_bounds(&obs.x(), cfg, eps_d)?;
    let x_err = decoy_bounds(&obs.x_err(), cfg, eps_d)?;
    let key = decoy_bounds(&obs.key(), cfg, eps_d)?;

    let mut feasible = !(x.infeasible || x_err.infeasible || key.infeasible);
    feasible &= x.single_lower > 0.0 && key.single_lower > 0.0;
    let e1_upper = if x.single_lower > 0.0 {
        (x_err.single_upper / x.single_lower).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let phase_bound = if feasible {
        let pb = bound_mismatch(&PhaseErrorQuery {
            e_obs: e1_upper,
            n_test: x.single_lower,
            n_key: key.single_lower,
            deltas,
            eps_a_sq: budget.eps_at_a * budget.eps_at_a,
            eps_b_sq: budget.eps_at_b * budget.eps_at_b,
            eps_c_sq: budget.eps_at_c * budget.eps_at_c,
        })?;
        pb.value
    } else {
        1.0
    };
    Ok(ComposedBound {
        phase_bound,
        e1_upper,
        single_test_lower: x.single_lower,
        single_key_lower: key.single_lower,
        feasible,
        x,
        x_err,
        key,
    })
}

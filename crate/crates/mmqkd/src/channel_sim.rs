//! Honest channel: phase-randomized coherent pulses through a lossy channel with
//! a fixed polarization misalignment, detected by two threshold detectors.
//!
//! The detector efficiency stays inside the detector model; only the channel
//! transmissivity thins the pulse before it. A double click is assigned to a
//! random bit, so it counts as half an error in expectation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::decoy::{photon_given_intensity, DecoyConfig, Observations, PHOTON_CUTOFF};
use crate::detector_model::DetectorSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisProbabilities {
    pub p_z_a: f64,
    pub p_x_a: f64,
    pub p_z_b: f64,
    pub p_x_b: f64,
    /// fraction of matched Z rounds used for testing
    pub p_z_test: f64,
}

impl Default for BasisProbabilities {
    fn default() -> Self {
        Self { p_z_a: 0.5, p_x_a: 0.5, p_z_b: 0.5, p_x_b: 0.5, p_z_test: 0.05 }
    }
}

impl BasisProbabilities {
    fn validate(&self) -> Result<()> {
        let all = [self.p_z_a, self.p_x_a, self.p_z_b, self.p_x_b, self.p_z_test];
        if all.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Config(format!("basis probabilities {all:?} must be in (0, 1)")));
        }
        if (self.p_z_a + self.p_x_a - 1.0).abs() > 1e-9 || (self.p_z_b + self.p_x_b - 1.0).abs() > 1e-9 {
            return Err(Error::Config("each party's basis probabilities must sum to 1".into()));
        }
        Ok(())
    }

    fn x_test(&self) -> f64 {
        self.p_x_a * self.p_x_b
    }
    fn z_key(&self) -> f64 {
        self.p_z_a * self.p_z_b * (1.0 - self.p_z_test)
    }
    fn z_test(&self) -> f64 {
        self.p_z_a * self.p_z_b * self.p_z_test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub transmissivity: f64,
    pub misalignment_deg: f64,
    pub detector: DetectorSpec,
    #[serde(default)]
    pub bases: BasisProbabilities,
    pub n_total: f64,
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.transmissivity > 0.0 && self.transmissivity <= 1.0) {
            return Err(Error::Config(format!("transmissivity {} must be in (0, 1]", self.transmissivity)));
        }
        if !self.misalignment_deg.is_finite() {
            return Err(Error::Config("misalignment angle must be finite".into()));
        }
        if !(self.n_total > 0.0) || !self.n_total.is_finite() {
            return Err(Error::Config(format!("n_total {} must be positive", self.n_total)));
        }
        self.detector.validate()?;
        self.bases.validate()
    }

    /// Per-photon arrival probabilities at the correct and the wrong detector.
    fn arrival(&self) -> (f64, f64) {
        let th = self.misalignment_deg.to_radians();
        let e = self.transmissivity * self.detector.eta_det;
        (e * th.cos().powi(2), e * th.sin().powi(2))
    }
}

/// Matched-basis outcome probabilities: no click, correct bit, wrong bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOutcome {
    pub none: f64,
    pub correct: f64,
    pub error: f64,
}

impl RoundOutcome {
    pub fn conclusive(&self) -> f64 {
        self.correct + self.error
    }

    fn from_no_click(none: f64, no_correct: f64, no_wrong: f64) -> Self {
        // P(only correct fires) = P(wrong silent) − P(both silent), and so on
        let double = 1.0 - no_correct - no_wrong + none;
        RoundOutcome {
            none,
            correct: (no_wrong - none) + 0.5 * double,
            error: (no_correct - none) + 0.5 * double,
        }
    }
}

/// Outcome probabilities for a coherent pulse of mean photon number `mu`.
pub fn coherent_outcome(ch: &ChannelSpec, mu: f64) -> RoundOutcome {
    let (q0, q1) = ch.arrival();
    let d = ch.detector.d_det;
    let s0 = (1.0 - d) * (-mu * q0).exp();
    let s1 = (1.0 - d) * (-mu * q1).exp();
    RoundOutcome::from_no_click(s0 * s1, s0, s1)
}

/// Outcome probabilities for exactly `m` photons.
pub fn fock_outcome(ch: &ChannelSpec, m: usize) -> RoundOutcome {
    let (q0, q1) = ch.arrival();
    let d = ch.detector.d_det;
    let m = m as i32;
    let none = (1.0 - d).powi(2) * (1.0 - q0 - q1).powi(m);
    RoundOutcome::from_no_click(none, (1.0 - d) * (1.0 - q0).powi(m), (1.0 - d) * (1.0 - q1).powi(m))
}

/// Expected counts; deterministic.
pub fn expected_observations(ch: &ChannelSpec, cfg: &DecoyConfig) -> Result<Observations> {
    ch.validate()?;
    cfg.validate()?;
    let b = &ch.bases;
    let mut obs = Observations::default();
    let (mut zt_con, mut zt_err) = (0.0, 0.0);
    for k in 0..3 {
        let o = coherent_outcome(ch, cfg.intensities[k]);
        let rounds = ch.n_total * cfg.probabilities[k];
        obs.n_x[k] = rounds * b.x_test() * o.conclusive();
        obs.n_x_err[k] = rounds * b.x_test() * o.error;
        obs.n_k[k] = rounds * b.z_key() * o.conclusive();
        zt_con += rounds * b.z_test() * o.conclusive();
        zt_err += rounds * b.z_test() * o.error;
    }
    obs.e_z = if zt_con > 0.0 { zt_err / zt_con } else { 0.0 };
    Ok(obs)
}

/// Sampled statistics together with the true zero- and one-photon counts of
/// each decoy outcome class, ordered X, X≠, K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedSample {
    pub observations: Observations,
    pub vacuum: [f64; 3],
    pub single: [f64; 3],
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability checked above").sample(rng)
}

/// Multinomial split of n over weights (need not be normalized).
fn multinomial<const K: usize>(rng: &mut ChaCha8Rng, n: u64, w: [f64; K]) -> [u64; K] {
    let mut out = [0u64; K];
    let mut left = n;
    let mut mass: f64 = w.iter().sum();
    for i in 0..K {
        if left == 0 {
            break;
        }
        if i == K - 1 || mass <= 0.0 {
            out[i] = left;
            break;
        }
        let x = binomial(rng, left, (w[i] / mass).min(1.0));
        out[i] = x;
        left -= x;
        mass -= w[i];
    }
    out
}

fn photon_cutoff(mu: f64) -> usize {
    let mut m = 0;
    let mut tail = 1.0;
    while m < PHOTON_CUTOFF {
        tail -= photon_given_intensity(m, mu);
        if tail < 1e-20 {
            break;
        }
        m += 1;
    }
    m
}

/// One honest run of `n_total` rounds, sampled exactly through nested binomial
/// splits (intensity, photon number, round type, outcome). Photon numbers above
/// the cutoff where the Poisson tail drops below 1e-20 are merged into it.
pub fn sample_tagged(ch: &ChannelSpec, cfg: &DecoyConfig, seed: u64) -> Result<TaggedSample> {
    ch.validate()?;
    cfg.validate()?;
    if ch.n_total > 2f64.powi(62) || ch.n_total.fract() != 0.0 {
        return Err(Error::Config("sampling needs an integer n_total below 2^62".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = &ch.bases;
    let mut t = TaggedSample { observations: Observations::default(), vacuum: [0.0; 3], single: [0.0; 3] };
    let (mut zt_con, mut zt_err) = (0u64, 0u64);
    let per_k = multinomial(&mut rng, ch.n_total as u64, cfg.probabilities);
    for k in 0..3 {
        let mu = cfg.intensities[k];
        let cut = photon_cutoff(mu);
        let mut w = vec![0.0; cut + 1];
        for (m, wm) in w.iter_mut().enumerate() {
            *wm = photon_given_intensity(m, mu);
        }
        let mut left = per_k[k];
        let mut mass: f64 = w.iter().sum();
        for m in 0..=cut {
            let nm = if m == cut { left } else { binomial(&mut rng, left, (w[m] / mass).min(1.0)) };
            left -= nm;
            mass -= w[m];
            if nm == 0 {
                continue;
            }
            let o = fock_outcome(ch, m);
            let [x, zk, zt, _] = multinomial(&mut rng, nm, [b.x_test(), b.z_key(), b.z_test(), 1.0 - b.x_test() - b.z_key() - b.z_test()]);
            let [_, xc, xe] = multinomial(&mut rng, x, [o.none, o.correct, o.error]);
            let [_, kc, ke] = multinomial(&mut rng, zk, [o.none, o.correct, o.error]);
            let [_, tc, te] = multinomial(&mut rng, zt, [o.none, o.correct, o.error]);
            let obs = &mut t.observations;
            obs.n_x[k] += (xc + xe) as f64;
            obs.n_x_err[k] += xe as f64;
            obs.n_k[k] += (kc + ke) as f64;
            zt_con += tc + te;
            zt_err += te;
            let tags = [(xc + xe) as f64, xe as f64, (kc + ke) as f64];
            let slot = match m {
                0 => &mut t.vacuum,
                1 => &mut t.single,
                _ => continue,
            };
            for i in 0..3 {
                slot[i] += tags[i];
            }
        }
    }
    t.observations.e_z = if zt_con > 0 { zt_err as f64 / zt_con as f64 } else { 0.0 };
    Ok(t)
}

/// Sampled statistics; deterministic given the seed.
pub fn sample_observations(ch: &ChannelSpec, cfg: &DecoyConfig, seed: u64) -> Result<Observations> {
    Ok(sample_tagged(ch, cfg, seed)?.observations)
}

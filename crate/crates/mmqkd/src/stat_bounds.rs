//! Deviation terms used by the phase-error and decoy estimates.
//!
//! `binomial_tail` is the upper tail of Binomial(n, δ) at the integer threshold
//! ⌈n(δ+c)⌉. For large n the tail is evaluated as a regularized incomplete beta
//! integral: the binomial mass at the threshold (saddle-point form, accurate for
//! n up to 10¹² and beyond) times a modified-Lentz continued fraction.

use crate::{check_eps_sq, check_prob, Error, Result};

/// Arguments of Λ(n; δ; c).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailQuery {
    pub n: u64,
    pub delta: f64,
    pub c: f64,
}

impl TailQuery {
    pub fn new(n: u64, delta: f64, c: f64) -> Self {
        Self { n, delta, c }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("tail query needs n >= 1".into()));
        }
        check_prob("delta", self.delta)?;
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return Err(Error::Domain(format!("deviation c = {} must be finite and >= 0", self.c)));
        }
        Ok(())
    }
}

const CF_MAX_ITER: usize = 50_000_000;

/// Λ(n; δ; c).
pub fn binomial_tail(q: TailQuery) -> Result<f64> {
    q.validate()?;
    tail_at(q.n, q.delta, threshold(q.n, q.delta, q.c))
}

/// ⌈n(δ+c)⌉, with products that land within a few ulps above an integer
/// snapped back down (10·(0.1+0.2) must give 3, not 4).
pub fn threshold(n: u64, delta: f64, c: f64) -> u64 {
    let t = n as f64 * (delta + c);
    let tol = 8.0 * f64::EPSILON * t.max(1.0);
    let k = (t - tol).ceil().max(0.0);
    if k >= n as f64 + 1.0 {
        n + 1
    } else {
        k as u64
    }
}

/// P(X ≥ k) for X ~ Binomial(n, p).
pub fn tail_at(n: u64, p: f64, k: u64) -> Result<f64> {
    check_prob("p", p)?;
    if k == 0 {
        return Ok(1.0);
    }
    if k > n || p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let q = 1.0 - p;
    let a = k as f64;
    let b = (n - k + 1) as f64;
    let v = if p < (a + 1.0) / (a + b + 2.0) {
        binom_pmf(n, k, p) * q * beta_cf(a, b, p)?
    } else {
        // lower tail P(X ≤ k-1) is the upper tail of the complementary count
        1.0 - binom_pmf(n, k - 1, p) * p * beta_cf(b, a, q)?
    };
    Ok(v.clamp(0.0, 1.0))
}

/// Binomial mass via Loader's saddle-point expansion.
pub fn binom_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let q = 1.0 - p;
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    if k == 0 {
        return (nf * (-p).ln_1p()).exp();
    }
    if k == n {
        return (nf * p.ln()).exp();
    }
    let x = k as f64;
    let lc = stirlerr(n) - stirlerr(k) - stirlerr(n - k) - bd0(x, nf * p) - bd0(nf - x, nf * q);
    let lf = (2.0 * std::f64::consts::PI).ln() + x.ln() + (-x / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

// ln(n!) - [(n+1/2)ln n - n + ln√(2π)]
#[allow(clippy::excessive_precision)]
const STIRLERR_SMALL: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_258,
    0.041_340_695_955_409_294,
    0.027_677_925_684_998_339,
    0.020_790_672_103_765_093,
    0.016_644_691_189_821_192,
    0.013_876_128_823_070_748,
    0.011_896_709_945_891_770,
    0.010_411_265_261_972_096,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_871,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_530,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n < 16 {
        return STIRLERR_SMALL[n as usize];
    }
    let x = n as f64;
    let nn = x * x;
    if n > 500 {
        (S0 - S1 / nn) / x
    } else if n > 80 {
        (S0 - (S1 - S2 / nn) / nn) / x
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / x
    }
}

// x ln(x/m) + m - x, without cancellation when x ≈ m
fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

// continued fraction for I_x(a, b), modified Lentz
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    const FPMIN: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() <= EPS {
            return Ok(h);
        }
    }
    Err(Error::Numeric(format!(
        "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )))
}

/// γ_bin(n, δ): least c ≥ 0 with Λ(n; δ; c) ≤ ε².
///
/// The search runs over integer thresholds, which is the grid c moves on anyway,
/// so the result is exact: Λ at the returned c is ≤ ε² and Λ at c − 1/n is > ε².
pub fn gamma_bin(n: u64, delta: f64, eps_sq: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("gamma_bin needs n >= 1".into()));
    }
    check_prob("delta", delta)?;
    check_eps_sq(eps_sq)?;
    if delta == 0.0 {
        return Ok(0.0);
    }
    let k = min_threshold(n, delta, eps_sq)?;
    Ok((k as f64 / n as f64 - delta).max(0.0))
}

/// Least k with P(X ≥ k) ≤ ε², X ~ Binomial(n, δ).
pub fn min_threshold(n: u64, delta: f64, eps_sq: f64) -> Result<u64> {
    let nf = n as f64;
    // Hoeffding: P(X ≥ nδ + t) ≤ exp(-2t²/n)
    let t = (nf * (1.0 / eps_sq).ln() / 2.0).sqrt();
    let mut hi = ((nf * delta + t).ceil() + 1.0).min(nf + 1.0) as u64;
    if tail_at(n, delta, hi)? > eps_sq {
        hi = n + 1;
    }
    // the median is at least ⌊nδ⌋, so that tail has mass ≥ 1/2
    let mut lo = if eps_sq < 0.5 { (nf * delta).floor() as u64 } else { 0 };
    if lo >= hi || tail_at(n, delta, lo)? <= eps_sq {
        lo = 0;
    }
    if lo == 0 && tail_at(n, delta, 0)? <= eps_sq {
        return Ok(0);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if tail_at(n, delta, mid)? <= eps_sq {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// f_serf(n_X, n_K) = n_K n_X² / ((n_K + n_X)(n_X + 1)).
pub fn f_serf(n_test: f64, n_key: f64) -> f64 {
    n_key * n_test * n_test / ((n_key + n_test) * (n_test + 1.0))
}

/// γ_serf = sqrt(ln(1/ε²) / f_serf). Counts may be fractional (decoy bounds).
pub fn gamma_serf(n_test: f64, n_key: f64, eps_sq: f64) -> Result<f64> {
    check_eps_sq(eps_sq)?;
    if !(n_test > 0.0) || !(n_key > 0.0) {
        return Err(Error::Degenerate(format!(
            "serfling term needs positive counts (n_test={n_test}, n_key={n_key})"
        )));
    }
    Ok(((1.0 / eps_sq).ln() / f_serf(n_test, n_key)).sqrt())
}

/// t = sqrt((n_O / 2) ln(2/ε²)).
pub fn hoeffding_decoy_dev(n_outcome: f64, eps_sq: f64) -> f64 {
    (n_outcome.max(0.0) / 2.0 * (2.0 / eps_sq).ln()).sqrt()
}

//! Reference implementations used only by the tests.
#![allow(dead_code)]

use mmqkd::detector_model::{min_eigenvalue, psd_sqrt, Basis, PovmBlock};
use nalgebra::DMatrix;

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// ln C(n, i) for i = 0..=n by a compensated running sum of ln((n-j)/(j+1)).
pub fn ln_choose_row(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let (mut s, mut c) = (0.0f64, 0.0f64);
    out.push(0.0);
    for j in 0..n {
        let x = ((n - j) as f64).ln() - ((j + 1) as f64).ln();
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
        out.push(s + c);
    }
    out
}

/// P(X ≥ k), X ~ Binomial(n, p), by direct summation of the upper terms.
pub fn exact_tail(n: u64, p: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n || p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let lc = ln_choose_row(n);
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    compensated_sum((k..=n).map(|i| (lc[i as usize] + i as f64 * lp + (n - i) as f64 * lq).exp()))
}

/// Smallest k with exact_tail ≤ eps_sq, by scanning.
pub fn exact_min_threshold(n: u64, p: f64, eps_sq: f64) -> u64 {
    let lc = ln_choose_row(n);
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let terms: Vec<f64> = (0..=n).map(|i| (lc[i as usize] + i as f64 * lp + (n - i) as f64 * lq).exp()).collect();
    // running tails from the top
    let mut tail = vec![0.0; n as usize + 2];
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for i in (0..=n as usize).rev() {
        let x = terms[i];
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
        tail[i] = s + c;
    }
    (0..=n + 1).find(|&k| tail[k as usize] <= eps_sq).unwrap()
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// X-mode Fock state |n_plus, n_minus⟩ in the Z-mode Fock basis, by expanding
/// (a0† + a1†)^{n+} (a0† − a1†)^{n−} / sqrt(2^N n+! n−!) as a polynomial.
pub fn x_fock_by_expansion(n_plus: usize, n_minus: usize) -> Vec<f64> {
    let n = n_plus + n_minus;
    // coefficients of a0†^i a1†^(N-i)
    let mut poly = vec![0.0f64; n + 1];
    poly[0] = 1.0; // degree in a0† tracked by index
    let mut deg = 0;
    let mul = |poly: &mut Vec<f64>, deg: &mut usize, sign: f64| {
        let mut next = vec![0.0f64; n + 1];
        for i in 0..=*deg {
            next[i + 1] += poly[i]; // a0†
            next[i] += sign * poly[i]; // ± a1†
        }
        *poly = next;
        *deg += 1;
    };
    for _ in 0..n_plus {
        mul(&mut poly, &mut deg, 1.0);
    }
    for _ in 0..n_minus {
        mul(&mut poly, &mut deg, -1.0);
    }
    let fact = |k: usize| (1..=k).map(|x| x as f64).product::<f64>();
    let norm = (2f64.powi(n as i32) * fact(n_plus) * fact(n_minus)).sqrt();
    // a0†^i a1†^(N-i)|0⟩ = sqrt(i! (N-i)!) |i, N-i⟩
    (0..=n).map(|i| poly[i] * (fact(i) * fact(n - i)).sqrt() / norm).collect()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// First failed structural property of a block, if any: positivity, ≤ I,
/// completeness, F̃ ≥ F_con and √F̃ √F' G √F' √F̃ reproducing the operators.
pub fn block_violation(b: &PovmBlock, tol: f64) -> Option<String> {
    let d = b.dim();
    let id = DMatrix::<f64>::identity(d, d);
    for basis in [Basis::Z, Basis::X] {
        let m = b.basis(basis);
        let named = [
            ("bot", &m.bot),
            ("neq", &m.neq),
            ("eq", &m.eq),
            ("f_con", &m.f_con),
            ("f_con_prime", &m.f_con_prime),
            ("g_neq", &m.g_neq),
            ("g_eq", &m.g_eq),
        ];
        for (name, op) in named {
            if min_eigenvalue(op) < -tol {
                return Some(format!("{basis:?} {name} not positive"));
            }
            if min_eigenvalue(&(&id - op)) < -tol {
                return Some(format!("{basis:?} {name} exceeds identity"));
            }
        }
        if max_abs(&(&m.neq + &m.eq + &m.bot - &id)) >= tol {
            return Some(format!("{basis:?} outcomes incomplete"));
        }
        if max_abs(&(&m.g_neq + &m.g_eq - &id)) >= tol {
            return Some(format!("{basis:?} G incomplete"));
        }
        if min_eigenvalue(&(&b.f_tilde - &m.f_con)) < -tol {
            return Some(format!("{basis:?} F_con not dominated"));
        }
        let sf = psd_sqrt(&b.f_tilde);
        let sp = psd_sqrt(&m.f_con_prime);
        if max_abs(&(&sf * &sp * &m.g_neq * &sp * &sf - &m.neq)) >= tol
            || max_abs(&(&sf * &sp * &m.g_eq * &sp * &sf - &m.eq)) >= tol
        {
            return Some(format!("{basis:?} reconstruction off"));
        }
    }
    None
}

//! Threshold-detector POVMs on fixed total-photon-number blocks, and the
//! mismatch metrics δ₁, δ₂.
//!
//! Bob's two modes are written in the Z-mode Fock basis |N₀, N−N₀⟩. X-basis
//! operators are diagonal in the X-mode Fock basis and are brought over with the
//! spin-N/2 rotation at angle π/2 (a Wigner small-d matrix). Alice's qubit is the
//! left tensor factor, so a block has dimension 2(N+1) with index a·(N+1) + N₀.
//!
//! Detector order in [`DetectorParams`] is Z₀, Z₁, X₀, X₁.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest photon block the Wigner rotation is trusted for (the alternating
/// sum loses digits beyond this).
pub const MAX_BLOCK_PHOTONS: usize = 20;

/// Eigenvalues below this are treated as zero in pseudo-inverses and supports.
pub const PINV_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub eta_det: f64,
    pub d_det: f64,
    #[serde(default)]
    pub delta_eta: f64,
    #[serde(default)]
    pub delta_dc: f64,
}

impl DetectorSpec {
    pub fn new(eta_det: f64, d_det: f64, delta_eta: f64, delta_dc: f64) -> Self {
        Self { eta_det, d_det, delta_eta, delta_dc }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.eta_det > 0.0 && self.eta_det <= 1.0) {
            return bad(format!("eta_det = {} must be in (0, 1]", self.eta_det));
        }
        if !(self.d_det >= 0.0 && self.d_det < 1.0) {
            return bad(format!("d_det = {} must be in [0, 1)", self.d_det));
        }
        for (name, v) in [("delta_eta", self.delta_eta), ("delta_dc", self.delta_dc)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} must be in [0, 1]"));
            }
        }
        if self.eta_max() > 1.0 + 1e-15 {
            return bad(format!("eta_det(1 + delta_eta) = {} exceeds 1", self.eta_max()));
        }
        if self.d_max() >= 1.0 {
            return bad(format!("d_det(1 + delta_dc) = {} must be < 1", self.d_max()));
        }
        Ok(())
    }

    pub fn eta_min(&self) -> f64 {
        self.eta_det * (1.0 - self.delta_eta)
    }
    pub fn eta_max(&self) -> f64 {
        self.eta_det * (1.0 + self.delta_eta)
    }
    pub fn d_min(&self) -> f64 {
        self.d_det * (1.0 - self.delta_dc)
    }
    pub fn d_max(&self) -> f64 {
        self.d_det * (1.0 + self.delta_dc)
    }
    /// η_min / η_max.
    pub fn eta_ratio(&self) -> f64 {
        (1.0 - self.delta_eta) / (1.0 + self.delta_eta)
    }

    /// Dark counts that may vanish on one detector but not another: the
    /// closed-form δ₁ is then 4 and no key survives.
    pub fn closed_form_is_vacuous(&self) -> bool {
        self.d_min() <= 0.0 && self.d_max() > 0.0
    }

    /// Nominal (honest) detector parameters.
    pub fn nominal(&self) -> DetectorParams {
        DetectorParams { eta: [self.eta_det; 4], dc: [self.d_det; 4] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeltaPair {
    pub delta1: f64,
    pub delta2: f64,
}

impl DeltaPair {
    pub const ZERO: DeltaPair = DeltaPair { delta1: 0.0, delta2: 0.0 };

    pub fn new(delta1: f64, delta2: f64) -> Self {
        Self { delta1, delta2 }
    }
}

/// Worst case over the tolerance box, in closed form.
///
/// `d_min = 0 < d_max` yields δ₁ = 4; check [`DetectorSpec::closed_form_is_vacuous`].
pub fn closed_form_deltas(spec: &DetectorSpec) -> Result<DeltaPair> {
    spec.validate()?;
    let dmin = spec.d_min();
    let dmax = spec.d_max();
    let er = spec.eta_ratio();
    // 1 − (1 − d)², written without cancellation
    let click_min = dmin * (2.0 - dmin);
    let click_max = dmax * (2.0 - dmax);
    // dark-count-only ratio; with no dark counts at all both blocks agree
    let ratio = if click_max > 0.0 { click_min / click_max } else { 1.0 };
    let tail = (1.0 - dmin).powi(2) * (1.0 - er);
    let d1 = 4.0 * f64::max(1.0 - ratio.sqrt(), 1.0 - (1.0 - tail).sqrt());
    let d2 = f64::max(1.0 - ratio, tail);
    Ok(DeltaPair::new(d1.clamp(0.0, 4.0), d2.clamp(0.0, 1.0)))
}

/// Efficiencies and dark-count probabilities of the four detectors Z₀, Z₁, X₀, X₁.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub eta: [f64; 4],
    pub dc: [f64; 4],
}

impl DetectorParams {
    pub fn eta_max(&self) -> f64 {
        self.eta.iter().cloned().fold(0.0, f64::max)
    }
    pub fn d_max(&self) -> f64 {
        self.dc.iter().cloned().fold(0.0, f64::max)
    }

    /// Common loss pulled into the channel: the best detector becomes lossless.
    pub fn renormalized(&self) -> DetectorParams {
        let m = self.eta_max();
        let mut out = *self;
        if m > 0.0 {
            for e in out.eta.iter_mut() {
                *e /= m;
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        for v in self.eta.iter().chain(self.dc.iter()) {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Domain(format!("detector parameter {v} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Z,
    X,
}

/// Measurement operators of one basis (Alice and Bob both in it) on a block.
#[derive(Debug, Clone)]
pub struct BasisPovm {
    pub bot: DMatrix<f64>,
    pub neq: DMatrix<f64>,
    pub eq: DMatrix<f64>,
    /// I − Γ_⊥
    pub f_con: DMatrix<f64>,
    /// basis-dependent part of the filter, after the common filter F̃
    pub f_con_prime: DMatrix<f64>,
    /// error / no-error measurement that follows the conclusive filter
    pub g_neq: DMatrix<f64>,
    pub g_eq: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct PovmBlock {
    pub total_photons: usize,
    pub z: BasisPovm,
    pub x: BasisPovm,
    pub f_tilde: DMatrix<f64>,
    /// √F'_Z G^X_≠ √F'_Z
    pub gf_zx_neq: DMatrix<f64>,
    /// √F'_X G^X_≠ √F'_X
    pub gf_xx_neq: DMatrix<f64>,
}

impl PovmBlock {
    pub fn dim(&self) -> usize {
        2 * (self.total_photons + 1)
    }

    pub fn basis(&self, b: Basis) -> &BasisPovm {
        match b {
            Basis::Z => &self.z,
            Basis::X => &self.x,
        }
    }

    /// δ₁⁽ᴺ⁾ and δ₂⁽ᴺ⁾ for this block.
    pub fn deltas(&self) -> DeltaPair {
        let diff = &self.gf_zx_neq - &self.gf_xx_neq;
        let id = DMatrix::<f64>::identity(self.dim(), self.dim());
        DeltaPair::new(2.0 * spectral_norm(&diff), spectral_norm(&(id - &self.z.f_con_prime)))
    }
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// Wigner small-d matrix d^{N/2}(β), rows and columns indexed by N₀ = j + m.
pub fn wigner_d(total_photons: usize, beta: f64) -> DMatrix<f64> {
    let n = total_photons as i64;
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    let lf: Vec<f64> = (0..=total_photons).map(ln_factorial).collect();
    let dim = total_photons + 1;
    DMatrix::from_fn(dim, dim, |row, col| {
        let (p, q) = (row as i64, col as i64); // p ↔ m', q ↔ m
        let pref = 0.5 * (lf[q as usize] + lf[(n - q) as usize] + lf[p as usize] + lf[(n - p) as usize]);
        let k_lo = (q - p).max(0);
        let k_hi = q.min(n - p);
        let mut sum = 0.0;
        for k in k_lo..=k_hi {
            let denom = lf[(q - k) as usize] + lf[k as usize] + lf[(n - p - k) as usize] + lf[(k - q + p) as usize];
            let cp = (n + q - p - 2 * k) as i32;
            let sp = (2 * k - q + p) as i32;
            let sign = if (k - q + p) % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (pref - denom).exp() * c.powi(cp) * s.powi(sp);
        }
        sum
    })
}

/// Columns are the X-mode Fock states |N₊, N₋⟩ (column index N₊) written in
/// the Z-mode Fock basis, each up to a sign (−1)^{N₋}.
pub fn x_mode_basis(total_photons: usize) -> DMatrix<f64> {
    wigner_d(total_photons, std::f64::consts::FRAC_PI_2)
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Apply f to the eigenvalues of a symmetric matrix.
pub fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(f);
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, |v| v.max(0.0).sqrt())
}

/// (√M)⁺ with eigenvalues below [`PINV_CUTOFF`] dropped.
pub fn pinv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, |v| if v > PINV_CUTOFF { 1.0 / v.sqrt() } else { 0.0 })
}

/// Projector onto the support of M.
pub fn support(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, |v| if v > PINV_CUTOFF { 1.0 } else { 0.0 })
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Bob's click statistics in a basis for N₀ photons in mode 0 and N₁ in mode 1:
/// (no click, report 0, report 1). Double clicks are split evenly.
pub fn bob_outcomes(eta: [f64; 2], dc: [f64; 2], n0: usize, n1: usize) -> [f64; 3] {
    // log of the no-click probability, so tiny click probabilities keep their digits
    let ln_silent = |e: f64, d: f64, k: usize| (-d).ln_1p() + if k == 0 { 0.0 } else { k as f64 * (-e).ln_1p() };
    let (l0, l1) = (ln_silent(eta[0], dc[0], n0), ln_silent(eta[1], dc[1], n1));
    let (c0, c1) = (l0.exp(), l1.exp());
    let (k0, k1) = (-l0.exp_m1(), -l1.exp_m1());
    let double = k0 * k1;
    [c0 * c1, k0 * c1 + 0.5 * double, c0 * k1 + 0.5 * double]
}

fn alice_projectors(b: Basis) -> [DMatrix<f64>; 2] {
    match b {
        Basis::Z => [
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
        ],
        Basis::X => [
            DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]),
            DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]),
        ],
    }
}

fn basis_povm(
    b: Basis,
    n: usize,
    params: &DetectorParams,
    u_x: &DMatrix<f64>,
    sqrt_ft_pinv: &DMatrix<f64>,
    ft_support: &DMatrix<f64>,
) -> BasisPovm {
    let off = match b {
        Basis::Z => 0,
        Basis::X => 2,
    };
    let eta = [params.eta[off], params.eta[off + 1]];
    let dc = [params.dc[off], params.dc[off + 1]];
    let dimb = n + 1;
    let mut diag = [vec![0.0; dimb], vec![0.0; dimb], vec![0.0; dimb]];
    for n0 in 0..=n {
        let o = bob_outcomes(eta, dc, n0, n - n0);
        for i in 0..3 {
            diag[i][n0] = o[i];
        }
    }
    let to_z = |d: &Vec<f64>| {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d));
        match b {
            Basis::Z => m,
            Basis::X => u_x * m * u_x.transpose(),
        }
    };
    let (bob_bot, bob0, bob1) = (to_z(&diag[0]), to_z(&diag[1]), to_z(&diag[2]));
    let [pa0, pa1] = alice_projectors(b);
    let ia = DMatrix::<f64>::identity(2, 2);
    let id = DMatrix::<f64>::identity(2 * dimb, 2 * dimb);

    let bot = kron(&ia, &bob_bot);
    let neq = kron(&pa0, &bob1) + kron(&pa1, &bob0);
    let eq = kron(&pa0, &bob0) + kron(&pa1, &bob1);
    // summed rather than I − ⊥: the conclusive weight can be ~1e-7 and is inverted below
    let f_con = &neq + &eq;
    let f_con_prime = sqrt_ft_pinv * &f_con * sqrt_ft_pinv + (&id - ft_support);
    let s = pinv_sqrt(&f_con);
    let g_neq = &s * &neq * &s;
    let g_eq = &s * &eq * &s + (&id - support(&f_con));
    BasisPovm { bot, neq, eq, f_con, f_con_prime, g_neq, g_eq }
}

/// All operators of one photon-number block for both matched bases.
pub fn build_block_povms(total_photons: usize, params: &DetectorParams) -> Result<PovmBlock> {
    if total_photons > MAX_BLOCK_PHOTONS {
        return Err(Error::Domain(format!(
            "photon block N = {total_photons} exceeds the supported cutoff {MAX_BLOCK_PHOTONS}"
        )));
    }
    params.validate()?;
    let n = total_photons;
    let dim = 2 * (n + 1);
    let u_x = x_mode_basis(n);
    // F̃ only depends on the total photon number, so it is a multiple of I here
    let ln_silent = 2.0 * (-params.d_max()).ln_1p() + if n == 0 { 0.0 } else { n as f64 * (-params.eta_max()).ln_1p() };
    let f = -ln_silent.exp_m1();
    let f_tilde = DMatrix::<f64>::identity(dim, dim) * f;
    let sqrt_ft_pinv = pinv_sqrt(&f_tilde);
    let ft_support = support(&f_tilde);
    let z = basis_povm(Basis::Z, n, params, &u_x, &sqrt_ft_pinv, &ft_support);
    let x = basis_povm(Basis::X, n, params, &u_x, &sqrt_ft_pinv, &ft_support);
    let sz = psd_sqrt(&z.f_con_prime);
    let sx = psd_sqrt(&x.f_con_prime);
    let gf_zx_neq = &sz * &x.g_neq * &sz;
    let gf_xx_neq = &sx * &x.g_neq * &sx;
    Ok(PovmBlock { total_photons: n, z, x, f_tilde, gf_zx_neq, gf_xx_neq })
}

/// δ₁, δ₂ at one parameter point, maximized over blocks N ≤ n_max.
/// Common loss is pulled out first.
pub fn point_deltas(params: &DetectorParams, n_max: usize) -> Result<DeltaPair> {
    let p = params.renormalized();
    let mut out = DeltaPair::ZERO;
    for n in 0..=n_max {
        let d = build_block_povms(n, &p)?.deltas();
        if !d.delta1.is_finite() || !d.delta2.is_finite() {
            return Err(Error::Numeric(format!("non-finite δ on photon block {n}")));
        }
        out.delta1 = out.delta1.max(d.delta1);
        out.delta2 = out.delta2.max(d.delta2);
    }
    Ok(out)
}

/// Which points of the tolerance box the oracle visits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGrid {
    /// all 2⁸ corners of the four (η, d) intervals
    pub corners: bool,
    /// Latin-hypercube interior samples
    pub interior_samples: usize,
    pub seed: u64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self { corners: true, interior_samples: 32, seed: 0x5eed }
    }
}

/// Parameter points of the tolerance box visited by the oracle.
pub fn box_points(spec: &DetectorSpec, grid: &OracleGrid) -> Vec<DetectorParams> {
    let (el, eh) = (spec.eta_min(), spec.eta_max());
    let (dl, dh) = (spec.d_min(), spec.d_max());
    let mut pts = Vec::new();
    if grid.corners {
        for mask in 0u32..256 {
            let mut p = DetectorParams { eta: [0.0; 4], dc: [0.0; 4] };
            for i in 0..4 {
                p.eta[i] = if mask >> i & 1 == 1 { eh } else { el };
                p.dc[i] = if mask >> (i + 4) & 1 == 1 { dh } else { dl };
            }
            pts.push(p);
        }
    }
    let m = grid.interior_samples;
    if m > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
        // one stratified permutation per coordinate
        let mut strata: Vec<Vec<usize>> = Vec::with_capacity(8);
        for _ in 0..8 {
            let mut perm: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            strata.push(perm);
        }
        for s in 0..m {
            let mut u = [0.0; 8];
            for (c, uc) in u.iter_mut().enumerate() {
                *uc = (strata[c][s] as f64 + rng.random::<f64>()) / m as f64;
            }
            let mut p = DetectorParams { eta: [0.0; 4], dc: [0.0; 4] };
            for i in 0..4 {
                p.eta[i] = el + (eh - el) * u[i];
                p.dc[i] = dl + (dh - dl) * u[i + 4];
            }
            pts.push(p);
        }
    }
    pts
}

/// Numerical δ₁, δ₂: explicit operators, eigenvalue norms, maximized over
/// photon blocks N ≤ n_max and over the tolerance box.
pub fn oracle_deltas(spec: &DetectorSpec, n_max: usize, grid: &OracleGrid) -> Result<DeltaPair> {
    spec.validate()?;
    if n_max < 1 {
        return Err(Error::Domain("oracle needs n_max >= 1".into()));
    }
    let pts = box_points(spec, grid);
    let per: Result<Vec<DeltaPair>> = pts.par_iter().map(|p| point_deltas(p, n_max)).collect();
    Ok(per?.into_iter().fold(DeltaPair::ZERO, |a, d| {
        DeltaPair::new(a.delta1.max(d.delta1), a.delta2.max(d.delta2))
    }))
}

mod common;

use common::{block_violation, max_abs, x_fock_by_expansion};
use mmqkd::detector_model::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn params(eta: [f64; 4], dc: [f64; 4]) -> DetectorParams {
    DetectorParams { eta, dc }
}

fn id(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

#[test]
fn closed_form_zero_tolerance() {
    let d = closed_form_deltas(&DetectorSpec::new(0.7, 1e-6, 0.0, 0.0)).unwrap();
    assert_eq!(d, DeltaPair::ZERO);
}

#[test]
fn closed_form_one_percent() {
    let d = closed_form_deltas(&DetectorSpec::new(0.7, 1e-6, 0.01, 0.01)).unwrap();
    // 40-digit evaluation of the max-form bounds
    assert!((d.delta1 - 0.039_801_965_347_762_37).abs() < 1e-12, "{d:?}");
    assert!((d.delta2 - 0.019_801_970_396_034_654).abs() < 1e-12, "{d:?}");
}

#[test]
fn closed_form_no_dark_floor_is_vacuous() {
    let s = DetectorSpec::new(0.7, 1e-6, 0.01, 1.0);
    assert!(s.closed_form_is_vacuous());
    assert_eq!(closed_form_deltas(&s).unwrap().delta1, 4.0);
    // no dark counts anywhere: only the efficiency spread matters
    let clean = DetectorSpec::new(0.7, 0.0, 0.01, 0.0);
    assert!(!clean.closed_form_is_vacuous());
    let d = closed_form_deltas(&clean).unwrap();
    let tail = 1.0 - 0.99 / 1.01;
    assert!((d.delta2 - tail).abs() < 1e-15);
    assert!((d.delta1 - 4.0 * (1.0 - (1.0f64 - tail).sqrt())).abs() < 1e-15);
}

#[test]
fn detector_tolerances_validated() {
    assert!(DetectorSpec::new(0.7, 1e-6, 0.5, 0.0).validate().is_err());
    assert!(DetectorSpec::new(0.0, 1e-6, 0.0, 0.0).validate().is_err());
    assert!(DetectorSpec::new(0.7, 0.6, 0.0, 1.0).validate().is_err());
    assert!(DetectorSpec::new(0.7, 1e-6, 0.02, 1.0).validate().is_ok());
}

#[test]
fn rotation_columns_are_x_fock_states() {
    for n in 0..=10 {
        let u = x_mode_basis(n);
        for np in 0..=n {
            let want = x_fock_by_expansion(np, n - np);
            let col = u.column(np);
            let dot: f64 = col.iter().zip(want.iter()).map(|(a, b)| a * b).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-12, "N={n} n+={np}: overlap {dot}");
        }
        assert!(max_abs(&(u.transpose() * &u - id(n + 1))) < 1e-12);
    }
}

#[test]
fn vacuum_block_entries() {
    let p = params([0.6, 0.7, 0.65, 0.68], [1e-6, 2e-6, 3e-6, 1.5e-6]);
    let b = build_block_povms(0, &p).unwrap();
    // 1 − (1 − d)² expanded to avoid cancellation
    let ft = 2.0 * 3e-6 - 3e-6f64 * 3e-6;
    assert!((b.f_tilde[(0, 0)] / ft - 1.0).abs() < 1e-14);
    let conclusive = 1e-6 + 2e-6 - 1e-6 * 2e-6;
    assert!((b.z.f_con[(0, 0)] / conclusive - 1.0).abs() < 1e-14);
    assert!((b.z.bot[(0, 0)] - (1.0 - 1e-6) * (1.0 - 2e-6)).abs() < 1e-15);
    assert!((b.x.bot[(0, 0)] - (1.0 - 3e-6) * (1.0 - 1.5e-6)).abs() < 1e-15);
}

#[test]
fn unit_efficiency_single_photon_is_complete() {
    let p = params([1.0; 4], [0.0; 4]);
    let b = build_block_povms(1, &p).unwrap();
    for basis in [Basis::Z, Basis::X] {
        let m = b.basis(basis);
        assert!(max_abs(&(&m.neq + &m.eq - id(4))) < 1e-14);
        assert!(max_abs(&m.bot) < 1e-15);
    }
}

#[test]
fn two_photon_completeness() {
    let p = params([0.99, 1.0, 0.995, 0.998], [1e-6; 4]);
    let b = build_block_povms(2, &p).unwrap();
    for basis in [Basis::Z, Basis::X] {
        let m = b.basis(basis);
        assert!(max_abs(&(&m.neq + &m.eq + &m.bot - id(6))) < 1e-12);
    }
}

#[test]
fn oracle_zero_tolerance() {
    let d = oracle_deltas(&DetectorSpec::new(0.7, 1e-6, 0.0, 0.0), 6, &OracleGrid::default()).unwrap();
    assert!(d.delta1.abs() < 1e-10 && d.delta2.abs() < 1e-10, "{d:?}");
}

#[test]
fn oracle_below_closed_form_one_percent() {
    let s = DetectorSpec::new(0.7, 1e-6, 0.01, 0.01);
    let o = oracle_deltas(&s, 4, &OracleGrid::default()).unwrap();
    assert!(o.delta1 <= 0.0398 + 1e-9 && o.delta2 <= 0.0199 + 1e-9, "{o:?}");
    let c = closed_form_deltas(&s).unwrap();
    assert!(o.delta1 <= c.delta1 + 1e-9 && o.delta2 <= c.delta2 + 1e-9);
    assert!(o.delta1 <= 0.039_801_965_347_762_37 + 1e-9, "{o:?}");
    assert!(o.delta2 <= 0.019_801_970_396_034_654 + 1e-9, "{o:?}");
    assert!(o.delta1 > 0.0 && o.delta2 > 0.0);
}

#[test]
fn oracle_refuses_zero_cutoff() {
    assert!(oracle_deltas(&DetectorSpec::new(0.7, 1e-6, 0.01, 0.01), 0, &OracleGrid::default()).is_err());
}

#[test]
fn delta2_worst_case_sits_on_a_corner() {
    // dense interior sampling never beats the corners, block by block
    let s = DetectorSpec::new(0.7, 1e-6, 0.02, 0.02);
    let corners = box_points(&s, &OracleGrid { corners: true, interior_samples: 0, seed: 1 });
    let interior = box_points(&s, &OracleGrid { corners: false, interior_samples: 400, seed: 2 });
    for n in 0..=3 {
        let worst = |pts: &[DetectorParams]| {
            pts.iter()
                .map(|p| build_block_povms(n, &p.renormalized()).unwrap().deltas().delta2)
                .fold(0.0, f64::max)
        };
        let c = worst(&corners);
        let i = worst(&interior);
        assert!(i <= c + 1e-12, "N={n}: interior {i} > corner {c}");
    }
}

fn check_block(b: &PovmBlock, tol: f64) {
    if let Some(v) = block_violation(b, tol) {
        panic!("block {}: {v}", b.total_photons);
    }
}

#[test]
fn structure_on_blocks_up_to_six() {
    let s = DetectorSpec::new(0.7, 1e-6, 0.02, 0.02);
    let pts = box_points(&s, &OracleGrid { corners: true, interior_samples: 0, seed: 0 });
    for p in pts.iter().step_by(17) {
        for n in 0..=6 {
            check_block(&build_block_povms(n, p).unwrap(), 1e-10);
            check_block(&build_block_povms(n, &p.renormalized()).unwrap(), 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_blocks_are_valid(
        n in 0usize..=6,
        eta in proptest::array::uniform4(0.05f64..1.0),
        dc in proptest::array::uniform4(0.0f64..0.05),
    ) {
        check_block(&build_block_povms(n, &params(eta, dc)).unwrap(), 1e-10);
    }

    #[test]
    fn closed_form_monotone_in_tolerances(a in 0.0f64..0.3, b in 0.0f64..0.3, da in 0.0f64..0.05, db in 0.0f64..0.05) {
        let base = closed_form_deltas(&DetectorSpec::new(0.7, 1e-6, a, b)).unwrap();
        let up_eta = closed_form_deltas(&DetectorSpec::new(0.7, 1e-6, a + da, b)).unwrap();
        let up_dc = closed_form_deltas(&DetectorSpec::new(0.7, 1e-6, a, b + db)).unwrap();
        prop_assert!(up_eta.delta1 >= base.delta1 - 1e-15 && up_eta.delta2 >= base.delta2 - 1e-15);
        prop_assert!(up_dc.delta1 >= base.delta1 - 1e-15 && up_dc.delta2 >= base.delta2 - 1e-15);
        prop_assert!(base.delta1 <= 4.0 && base.delta2 <= 1.0);
    }

    #[test]
    fn oracle_dominated_by_closed_form(de in 0.0f64..0.05, dd in 0.0f64..0.05, eta in 0.3f64..0.9, d in 1e-7f64..1e-4) {
        let s = DetectorSpec::new(eta, d, de, dd);
        let o = oracle_deltas(&s, 3, &OracleGrid { corners: true, interior_samples: 4, seed: 9 }).unwrap();
        let c = closed_form_deltas(&s).unwrap();
        prop_assert!(o.delta1 <= c.delta1 + 1e-9, "{:?} vs {:?}", o, c);
        prop_assert!(o.delta2 <= c.delta2 + 1e-9, "{:?} vs {:?}", o, c);
    }
}

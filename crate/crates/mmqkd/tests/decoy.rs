use mmqkd::channel_sim::{sample_tagged, ChannelSpec};
use mmqkd::decoy::*;
use mmqkd::detector_model::DetectorSpec;
use mmqkd::stat_bounds::hoeffding_decoy_dev;
use proptest::prelude::*;

fn reference() -> DecoyConfig {
    DecoyConfig::default()
}

#[test]
fn poisson_examples() {
    assert_eq!(photon_given_intensity(0, 0.0), 1.0);
    assert_eq!(photon_given_intensity(3, 0.0), 0.0);
    assert!((photon_given_intensity(1, 0.9) - 0.9 * (-0.9f64).exp()).abs() < 1e-15);
    assert!((photon_given_intensity(1, 0.9) - 0.365_912_693_766_539_9).abs() < 1e-12);
    assert!((photon_given_intensity(2, 0.1) - 0.004_524_187_090_179_798).abs() < 1e-15);
}

#[test]
fn tau_examples() {
    let t0 = tau(0, &reference());
    assert!((t0 - 0.770_469_025_925_519_5).abs() < 1e-12, "{t0}");
    let single = DecoyConfig { intensities: [0.5, 0.2, 0.0], probabilities: [1.0, 0.0, 0.0] };
    for m in 0..6 {
        assert_eq!(tau(m, &single), photon_given_intensity(m, 0.5));
    }
    let total: f64 = (0..=PHOTON_CUTOFF).map(|m| tau(m, &reference())).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn posterior_sums_to_one() {
    for m in 0..8 {
        let s: f64 = (0..3).map(|k| intensity_given_photon(k, m, &reference())).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    // the vacuum intensity cannot emit photons
    assert_eq!(intensity_given_photon(2, 1, &reference()), 0.0);
}

#[test]
fn config_validation() {
    assert!(reference().validate().is_ok());
    assert!(DecoyConfig { intensities: [0.3, 0.2, 0.15], probabilities: [1.0 / 3.0; 3] }.validate().is_err());
    assert!(DecoyConfig { intensities: [0.9, 0.1, 0.1], probabilities: [1.0 / 3.0; 3] }.validate().is_err());
    assert!(DecoyConfig { intensities: [0.9, 0.1, 0.0], probabilities: [0.5, 0.5, 0.0] }.validate().is_err());
    assert!(DecoyConfig { intensities: [0.9, 0.1, 0.0], probabilities: [0.5, 0.3, 0.3] }.validate().is_err());
}

#[test]
fn zero_counts_give_zero_bounds() {
    let c = OutcomeCounts::default();
    let s = shifted_counts(&c, &reference(), 1e-24).unwrap();
    assert_eq!(s.minus, [0.0; 3]);
    assert_eq!(s.plus, [0.0; 3]);
    let b = decoy_bounds(&c, &reference(), 1e-24).unwrap();
    assert_eq!((b.vacuum_lower, b.single_lower, b.single_upper), (0.0, 0.0, 0.0));
    assert!(!b.infeasible);
}

#[test]
fn shifted_example() {
    let c = OutcomeCounts::new([5e5, 1e6, 5e5]);
    let s = shifted_counts(&c, &reference(), 1e-24).unwrap();
    assert!((hoeffding_decoy_dev(2e6, 1e-24) - 7480.320_141_037_885).abs() < 1e-6);
    assert!((s.minus[1] - 3_290_711.657_393_631).abs() < 1e-3, "{}", s.minus[1]);
    for k in 0..3 {
        let mid = reference().intensities[k].exp() / reference().probabilities[k] * c.per_intensity[k];
        assert!(s.minus[k] <= mid && mid <= s.plus[k]);
        assert!(((s.plus[k] - mid) - (mid - s.minus[k])).abs() < 1e-6 * mid);
    }
}

#[test]
fn vacuum_decoy_isolates_zero_photon_yield() {
    let c = OutcomeCounts::new([4e6, 6e5, 2e4]);
    let cfg = reference();
    let s = shifted_counts(&c, &cfg, 1e-10).unwrap();
    let b = bound_vacuum_lower(&c, &cfg, 1e-10).unwrap();
    assert!((b - (tau(0, &cfg) * s.minus[2]).min(c.total())).abs() < 1e-9 * b.max(1.0));
}

#[test]
fn equal_decoy_intensities_rejected() {
    let cfg = DecoyConfig { intensities: [0.9, 0.1, 0.1], probabilities: [1.0 / 3.0; 3] };
    assert!(bound_vacuum_lower(&OutcomeCounts::new([1.0, 1.0, 1.0]), &cfg, 1e-10).is_err());
}

fn channel(loss_db: f64, n_total: f64) -> ChannelSpec {
    ChannelSpec {
        transmissivity: 10f64.powf(-loss_db / 10.0),
        misalignment_deg: 2.0,
        detector: DetectorSpec::new(0.7, 1e-6, 0.0, 0.0),
        bases: Default::default(),
        n_total,
    }
}

#[test]
fn honest_runs_are_sandwiched() {
    let ch = channel(10.0, 1e8);
    let cfg = reference();
    let mut failures = 0;
    for seed in 0..1000u64 {
        let t = sample_tagged(&ch, &cfg, seed).unwrap();
        let o = &t.observations;
        for (i, counts) in [o.x(), o.x_err(), o.key()].iter().enumerate() {
            let b = decoy_bounds(counts, &cfg, 1e-24).unwrap();
            if b.vacuum_lower > t.vacuum[i] || b.single_lower > t.single[i] || b.single_upper < t.single[i] {
                failures += 1;
            }
        }
    }
    assert_eq!(failures, 0);
}

proptest! {
    #[test]
    fn plus_counts_grow_with_any_count(c in proptest::array::uniform3(0.0f64..1e7), k in 0usize..3, bump in 0.0f64..1e6) {
        let cfg = reference();
        let base = shifted_counts(&OutcomeCounts::new(c), &cfg, 1e-20).unwrap();
        let mut c2 = c;
        c2[k] += bump;
        let up = shifted_counts(&OutcomeCounts::new(c2), &cfg, 1e-20).unwrap();
        for j in 0..3 {
            prop_assert!(up.plus[j] >= base.plus[j]);
        }
    }

    #[test]
    fn upper_bound_grows_with_decoy_counts(c in proptest::array::uniform3(0.0f64..1e7), k in 0usize..2, bump in 0.0f64..1e6) {
        let cfg = reference();
        let base = bound_single_upper(&OutcomeCounts::new(c), &cfg, 1e-20).unwrap();
        let mut c2 = c;
        c2[k] += bump;
        let up = bound_single_upper(&OutcomeCounts::new(c2), &cfg, 1e-20).unwrap();
        prop_assert!(up + 1e-9 * up.abs() >= base);
    }

    #[test]
    fn clamped_and_flagged(c in proptest::array::uniform3(0.0f64..1e9), le in -30.0f64..-1.0) {
        let cfg = reference();
        let counts = OutcomeCounts::new(c);
        let b = decoy_bounds(&counts, &cfg, 10f64.powf(le)).unwrap();
        for v in [b.vacuum_lower, b.single_lower, b.single_upper] {
            prop_assert!(v >= 0.0 && v <= counts.total());
        }
        prop_assert_eq!(b.infeasible, b.single_lower > b.single_upper);
    }
}

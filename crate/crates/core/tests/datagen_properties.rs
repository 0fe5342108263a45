use bme680_surrogates::datagen::{
    fill_range_transform, generate_mesh, generate_sequence_dataset, matern52, sample_gp_sequence, MeshSpec,
    SequenceSpec,
};
use bme680_surrogates::oracle::reference_output;
use bme680_surrogates::{CalibrationConstants, Quantity};
use proptest::prelude::*;

fn c0() -> CalibrationConstants {
    CalibrationConstants::fixture_c0()
}

fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let cov = x.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum::<f64>() / (n - lag as f64);
    cov / var
}

/// Lag-ℓ autocorrelation pooled over 200 independent draws.
#[test]
fn lag_autocorrelation_matches_kernel() {
    let (n, ell) = (1000usize, 20.0);
    let mut sum = 0.0;
    for seed in 0..200 {
        let path = sample_gp_sequence(&SequenceSpec { length: n, lengthscale: ell, seed }).unwrap();
        sum += autocorrelation(&path, 20);
    }
    let rho = sum / 200.0;
    let k = matern52(20.0, ell);
    assert!((k - 0.523_994_1).abs() < 1e-6);
    assert!((rho - k).abs() < 0.05, "empirical {rho} vs kernel {k}");
    // The quoted reference figure is also within the band.
    assert!((rho - 0.52864).abs() < 0.05);
}

#[test]
fn per_index_mean_is_zero() {
    let (n, seeds) = (50usize, 400u64);
    let mut means = vec![0.0; n];
    for seed in 0..seeds {
        let p = sample_gp_sequence(&SequenceSpec::new(n, seed)).unwrap();
        for (m, v) in means.iter_mut().zip(p) {
            *m += v / seeds as f64;
        }
    }
    let bound = 3.0 / (seeds as f64).sqrt();
    // 3σ per index; allow the odd excursion among 50 indices.
    let outside = means.iter().filter(|m| m.abs() > bound).count();
    assert!(outside <= 2, "{means:?}");
}

#[test]
fn blocked_sampler_keeps_correlation_across_blocks() {
    let path = sample_gp_sequence(&SequenceSpec::new(5000, 3)).unwrap();
    assert_eq!(path.len(), 5000);
    let rho = autocorrelation(&path, 20);
    assert!((rho - matern52(20.0, 20.0)).abs() < 0.2, "{rho}");
}

#[test]
fn labels_are_reproducible_bit_for_bit() {
    let c = c0();
    for q in Quantity::ALL {
        let d = generate_sequence_dataset(q, SequenceSpec::new(300, 9), &c).unwrap();
        for (row, t) in d.inputs.iter().zip(&d.targets) {
            assert_eq!(reference_output(q, row, &c).unwrap().to_bits(), t.to_bits());
        }
        let m = generate_mesh(q, MeshSpec::new(7, true).unwrap(), &c).unwrap();
        assert!(m.check_labels(&c).unwrap());
    }
}

#[test]
fn inverse_refined_spacing_is_uniform() {
    let c = c0();
    for q in Quantity::ALL {
        let levels = 20;
        let d = generate_mesh(q, MeshSpec::new(levels, true).unwrap(), &c).unwrap();
        let r = q.range();
        let step = r.span() / (levels - 1) as f64;
        // The quantity's own axis is the inner (fastest) one.
        for (k, t) in d.targets.iter().enumerate() {
            let expect = r.min + (k % levels) as f64 * step;
            assert!((t - expect).abs() <= 1e-9 * r.span(), "{q} {k}: {t} vs {expect}");
        }
    }
}

#[test]
fn sequence_targets_fill_operating_range() {
    let c = c0();
    let d = generate_sequence_dataset(Quantity::Temperature, SequenceSpec::new(1000, 4), &c).unwrap();
    assert_eq!(d.len(), 1000);
    let lo = d.targets.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = d.targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((lo + 40.0).abs() < 1e-6 * 125.0 && (hi - 85.0).abs() < 1e-6 * 125.0, "{lo} {hi}");
}

proptest! {
    #[test]
    fn fill_range_hits_endpoints_and_keeps_order(seq in prop::collection::vec(-1e3..1e3f64, 2..64), scale in 0.01..100.0f64) {
        let lo = seq.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = seq.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(hi > lo);
        let out = fill_range_transform(&seq, -40.0, 85.0).unwrap();
        prop_assert_eq!(out.iter().cloned().fold(f64::INFINITY, f64::min), -40.0);
        prop_assert_eq!(out.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 85.0);
        for i in 0..seq.len() {
            for j in 0..seq.len() {
                if seq[i] < seq[j] {
                    prop_assert!(out[i] <= out[j]);
                }
            }
        }
        let scaled: Vec<f64> = seq.iter().map(|v| v * scale).collect();
        let again = fill_range_transform(&scaled, -40.0, 85.0).unwrap();
        for (a, b) in out.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-9 * 125.0);
        }
    }

    #[test]
    fn kernel_is_decreasing(r1 in 0.0..200.0f64, r2 in 0.0..200.0f64) {
        prop_assume!(r1 < r2);
        prop_assert!(matern52(r1, 20.0) > matern52(r2, 20.0));
    }
}

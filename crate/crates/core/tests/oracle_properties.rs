use bme680_surrogates::oracle::{
    convert_humidity, convert_pressure, convert_temperature, invert_humidity, invert_pressure, invert_temperature,
    reference_output, ADC_16BIT_MAX, ADC_20BIT_MAX,
};
use bme680_surrogates::{CalibrationConstants, Quantity};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c0() -> CalibrationConstants {
    CalibrationConstants::fixture_c0()
}

#[test]
fn round_trip_1000_targets_per_quantity() {
    let c = c0();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = Quantity::Temperature.range();
    for _ in 0..1000 {
        let target = rng.random_range(t.min..=t.max);
        let x = invert_temperature(target, &c).unwrap();
        assert!((0.0..=ADC_20BIT_MAX).contains(&x));
        assert!((convert_temperature(x, &c).temperature - target).abs() <= 1e-6 * t.span());
    }
    for q in [Quantity::Pressure, Quantity::Humidity] {
        let r = q.range();
        for _ in 0..1000 {
            let temp = rng.random_range(t.min..=t.max);
            let target = rng.random_range(r.min..=r.max);
            let tr = convert_temperature(invert_temperature(temp, &c).unwrap(), &c);
            let back = match q {
                Quantity::Pressure => {
                    let x = invert_pressure(target, tr.t_fine, &c).unwrap();
                    convert_pressure(x, tr.t_fine, &c).unwrap()
                }
                _ => {
                    let x = invert_humidity(target, tr.temperature, &c).unwrap();
                    assert!((0.0..=ADC_16BIT_MAX).contains(&x));
                    convert_humidity(x, tr.temperature, &c)
                }
            };
            assert!((back - target).abs() <= 1e-6 * r.span(), "{q}: {target} -> {back}");
        }
    }
}

#[test]
fn humidity_stays_in_range_over_all_codes() {
    let c = c0();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let temps: Vec<f64> = (0..100).map(|_| rng.random_range(-40.0..=85.0)).collect();
    for code in 0..=65535u32 {
        for &t in &temps {
            let h = convert_humidity(code as f64, t, &c);
            assert!((0.0..=100.0).contains(&h));
        }
    }
}

/// Least-squares fit of `a x² + b x + c` over the whole 20-bit domain.
#[test]
fn temperature_is_exactly_quadratic() {
    let c = c0();
    let xs: Vec<f64> = (0..=4096).map(|k| k as f64 * ADC_20BIT_MAX / 4096.0).collect();
    let z: Vec<f64> = xs.iter().map(|x| x / ADC_20BIT_MAX * 2.0 - 1.0).collect();
    let a = DMatrix::from_fn(xs.len(), 3, |i, j| z[i].powi(j as i32));
    let y = DVector::from_iterator(xs.len(), xs.iter().map(|&x| convert_temperature(x, &c).temperature));
    let coef = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * &y));
    let resid = (&a * coef - y).amax();
    assert!(resid < 1e-9 * Quantity::Temperature.range().span(), "residual {resid:e}");
}

proptest! {
    #[test]
    fn temperature_round_trip(x in 0.0..=ADC_20BIT_MAX) {
        let c = c0();
        let t = convert_temperature(x, &c).temperature;
        if Quantity::Temperature.range().contains(t) {
            let back = invert_temperature(t, &c).unwrap();
            prop_assert!((convert_temperature(back, &c).temperature - t).abs() <= 1e-6 * 125.0);
        }
    }

    #[test]
    fn pressure_inverse_is_monotone(t in -40.0..85.0f64, p1 in 30_000.0..110_000.0f64, p2 in 30_000.0..110_000.0f64) {
        prop_assume!((p1 - p2).abs() > 1.0);
        let c = c0();
        let tf = convert_temperature(invert_temperature(t, &c).unwrap(), &c).t_fine;
        let (lo, hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
        let (xl, xh) = (invert_pressure(lo, tf, &c).unwrap(), invert_pressure(hi, tf, &c).unwrap());
        // Pressure falls as the raw code rises.
        prop_assert!(xl > xh);
    }

    #[test]
    fn humidity_inverse_is_monotone(t in -40.0..85.0f64, h1 in 0.5..99.5f64, h2 in 0.5..99.5f64) {
        prop_assume!((h1 - h2).abs() > 1e-3);
        let c = c0();
        let temp = convert_temperature(invert_temperature(t, &c).unwrap(), &c).temperature;
        let (lo, hi) = if h1 < h2 { (h1, h2) } else { (h2, h1) };
        prop_assert!(invert_humidity(lo, temp, &c).unwrap() < invert_humidity(hi, temp, &c).unwrap());
    }

    #[test]
    fn forward_routines_are_pure(t in 0.0..=ADC_20BIT_MAX, p in 0.0..=ADC_20BIT_MAX) {
        let c = c0();
        let a = reference_output(Quantity::Pressure, &[t, p], &c).unwrap();
        let b = reference_output(Quantity::Pressure, &[t, p], &c).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }
}

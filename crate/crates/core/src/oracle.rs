//! Floating-point BME680 compensation routines and their numerical inverses.
//!
//! These are the ground truth every surrogate is trained against. All
//! routines work in double precision and accept raw codes as reals so that
//! inverted (non-integer) codes can be labelled without rounding.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest 20-bit code (temperature and pressure ADC).
pub const ADC_20BIT_MAX: f64 = 1_048_575.0;
/// Largest 16-bit code (humidity ADC).
pub const ADC_16BIT_MAX: f64 = 65_535.0;

const BISECTION_ITERATIONS: usize = 80;
const INVERSE_TOLERANCE: f64 = 1e-6;
const DIVISOR_EPS: f64 = 1e-12;

/// Per-sensor calibration parameters, already decoded to reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConstants {
    pub par_t1: f64,
    pub par_t2: f64,
    pub par_t3: f64,
    pub par_p1: f64,
    pub par_p2: f64,
    pub par_p3: f64,
    pub par_p4: f64,
    pub par_p5: f64,
    pub par_p6: f64,
    pub par_p7: f64,
    pub par_p8: f64,
    pub par_p9: f64,
    pub par_p10: f64,
    pub par_h1: f64,
    pub par_h2: f64,
    pub par_h3: f64,
    pub par_h4: f64,
    pub par_h5: f64,
    pub par_h6: f64,
    pub par_h7: f64,
}

const FIXTURE_C0: &str = include_str!("../fixtures/calib_c0.json");

impl CalibrationConstants {
    /// The shipped reference calibration set used by tests and defaults.
    pub fn fixture_c0() -> Self {
        Self::from_json(FIXTURE_C0).expect("shipped fixture is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let calib: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidCalibration(e.to_string()))?;
        calib.validate()?;
        Ok(calib)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    fn fields(&self) -> [(&'static str, f64); 20] {
        [
            ("par_t1", self.par_t1),
            ("par_t2", self.par_t2),
            ("par_t3", self.par_t3),
            ("par_p1", self.par_p1),
            ("par_p2", self.par_p2),
            ("par_p3", self.par_p3),
            ("par_p4", self.par_p4),
            ("par_p5", self.par_p5),
            ("par_p6", self.par_p6),
            ("par_p7", self.par_p7),
            ("par_p8", self.par_p8),
            ("par_p9", self.par_p9),
            ("par_p10", self.par_p10),
            ("par_h1", self.par_h1),
            ("par_h2", self.par_h2),
            ("par_h3", self.par_h3),
            ("par_h4", self.par_h4),
            ("par_h5", self.par_h5),
            ("par_h6", self.par_h6),
            ("par_h7", self.par_h7),
        ]
    }

    /// Checks finiteness and strict monotonicity of the temperature map
    /// over the 20-bit domain (sampled).
    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.fields() {
            if !value.is_finite() {
                return Err(Error::InvalidCalibration(format!("{name} is not finite")));
            }
        }
        const SAMPLES: usize = 4096;
        let mut prev = convert_temperature(0.0, self).temperature;
        let mut direction = 0.0f64;
        for k in 1..=SAMPLES {
            let x = ADC_20BIT_MAX * k as f64 / SAMPLES as f64;
            let t = convert_temperature(x, self).temperature;
            let step = t - prev;
            if step == 0.0 || (direction != 0.0 && step.signum() != direction) {
                return Err(Error::InvalidCalibration(
                    "temperature map is not strictly monotone over the raw domain".into(),
                ));
            }
            direction = step.signum();
            prev = t;
        }
        Ok(())
    }
}

/// Physical quantity converted by the sensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Temperature,
    Pressure,
    Humidity,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::Temperature, Quantity::Pressure, Quantity::Humidity];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Temperature => "temperature",
            Quantity::Pressure => "pressure",
            Quantity::Humidity => "humidity",
        }
    }

    pub fn range(self) -> OperatingRange {
        match self {
            Quantity::Temperature => OperatingRange::new(-40.0, 85.0),
            Quantity::Pressure => OperatingRange::new(30_000.0, 110_000.0),
            Quantity::Humidity => OperatingRange::new(0.0, 100.0),
        }
    }

    /// Number of raw inputs consumed by a conversion of this quantity.
    pub fn input_dim(self) -> usize {
        match self {
            Quantity::Temperature => 1,
            Quantity::Pressure | Quantity::Humidity => 2,
        }
    }

    /// Raw code domain of each input column: `adc_t` then `adc_p` or `adc_h`.
    pub fn input_domains(self) -> Vec<(f64, f64)> {
        match self {
            Quantity::Temperature => vec![(0.0, ADC_20BIT_MAX)],
            Quantity::Pressure => vec![(0.0, ADC_20BIT_MAX), (0.0, ADC_20BIT_MAX)],
            Quantity::Humidity => vec![(0.0, ADC_20BIT_MAX), (0.0, ADC_16BIT_MAX)],
        }
    }

    pub fn input_names(self) -> &'static [&'static str] {
        match self {
            Quantity::Temperature => &["adc_t"],
            Quantity::Pressure => &["adc_t", "adc_p"],
            Quantity::Humidity => &["adc_t", "adc_h"],
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Quantity::Temperature => "degC",
            Quantity::Pressure => "Pa",
            Quantity::Humidity => "%RH",
        }
    }

    /// Humidity outputs are clamped into `[0, 100]` by every routine.
    pub fn output_clamp(self) -> Option<(f64, f64)> {
        match self {
            Quantity::Humidity => Some((0.0, 100.0)),
            _ => None,
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temperature" => Ok(Quantity::Temperature),
            "pressure" => Ok(Quantity::Pressure),
            "humidity" => Ok(Quantity::Humidity),
            other => Err(Error::InvalidArgument(format!("unknown quantity `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingRange {
    pub min: f64,
    pub max: f64,
}

impl OperatingRange {
    pub fn new(min: f64, max: f64) -> Self {
        assert!(min < max, "operating range must satisfy min < max");
        Self { min, max }
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawReading {
    pub adc_t: u32,
    pub adc_p: u32,
    pub adc_h: u16,
}

impl RawReading {
    pub fn new(adc_t: u32, adc_p: u32, adc_h: u16) -> Result<Self> {
        if adc_t > ADC_20BIT_MAX as u32 || adc_p > ADC_20BIT_MAX as u32 {
            return Err(Error::InvalidArgument("raw code exceeds 20 bits".into()));
        }
        Ok(Self { adc_t, adc_p, adc_h })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvertedReading {
    pub temperature: f64,
    pub pressure: f64,
    pub humidity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemperatureReading {
    pub temperature: f64,
    pub t_fine: f64,
}

pub fn convert_temperature(adc_t: f64, calib: &CalibrationConstants) -> TemperatureReading {
    debug_assert!((0.0..=ADC_20BIT_MAX).contains(&adc_t), "adc_t out of domain: {adc_t}");
    let var1 = ((adc_t / 16384.0) - (calib.par_t1 / 1024.0)) * calib.par_t2;
    let d = (adc_t / 131072.0) - (calib.par_t1 / 8192.0);
    let var2 = (d * d) * (calib.par_t3 * 16.0);
    let t_fine = var1 + var2;
    TemperatureReading { temperature: t_fine / 5120.0, t_fine }
}

pub fn convert_pressure(adc_p: f64, t_fine: f64, calib: &CalibrationConstants) -> Result<f64> {
    debug_assert!((0.0..=ADC_20BIT_MAX).contains(&adc_p), "adc_p out of domain: {adc_p}");
    let mut var1 = (t_fine / 2.0) - 64000.0;
    let mut var2 = var1 * var1 * (calib.par_p6 / 131072.0);
    var2 += var1 * calib.par_p5 * 2.0;
    var2 = (var2 / 4.0) + (calib.par_p4 * 65536.0);
    var1 = (((calib.par_p3 * var1 * var1) / 16384.0) + (calib.par_p2 * var1)) / 524288.0;
    var1 = (1.0 + (var1 / 32768.0)) * calib.par_p1;
    if var1.abs() < DIVISOR_EPS {
        return Err(Error::DegenerateCalibration(var1));
    }
    let mut press = 1048576.0 - adc_p;
    press = ((press - (var2 / 4096.0)) * 6250.0) / var1;
    let v1 = (calib.par_p9 * press * press) / 2147483648.0;
    let v2 = press * (calib.par_p8 / 32768.0);
    let s = press / 256.0;
    let v3 = s * s * s * (calib.par_p10 / 131072.0);
    Ok(press + (v1 + v2 + v3 + (calib.par_p7 * 128.0)) / 16.0)
}

/// Humidity before the `[0, 100]` clamp.
pub fn convert_humidity_unclamped(adc_h: f64, temperature: f64, calib: &CalibrationConstants) -> f64 {
    let var1 = adc_h - ((calib.par_h1 * 16.0) + ((calib.par_h3 / 2.0) * temperature));
    let var2 = var1
        * ((calib.par_h2 / 262144.0)
            * (1.0
                + ((calib.par_h4 / 16384.0) * temperature)
                + ((calib.par_h5 / 1048576.0) * temperature * temperature)));
    let var3 = calib.par_h6 / 16384.0;
    let var4 = calib.par_h7 / 2097152.0;
    var2 + ((var3 + (var4 * temperature)) * var2 * var2)
}

pub fn convert_humidity(adc_h: f64, temperature: f64, calib: &CalibrationConstants) -> f64 {
    debug_assert!((0.0..=ADC_16BIT_MAX).contains(&adc_h), "adc_h out of domain: {adc_h}");
    convert_humidity_unclamped(adc_h, temperature, calib).clamp(0.0, 100.0)
}

pub fn convert(raw: RawReading, calib: &CalibrationConstants) -> Result<ConvertedReading> {
    let t = convert_temperature(raw.adc_t as f64, calib);
    Ok(ConvertedReading {
        temperature: t.temperature,
        pressure: convert_pressure(raw.adc_p as f64, t.t_fine, calib)?,
        humidity: convert_humidity(raw.adc_h as f64, t.temperature, calib),
    })
}

/// Reference conversion for one input row laid out as in [`Quantity::input_names`].
pub fn reference_output(quantity: Quantity, row: &[f64], calib: &CalibrationConstants) -> Result<f64> {
    let t = convert_temperature(row[0], calib);
    match quantity {
        Quantity::Temperature => Ok(t.temperature),
        Quantity::Pressure => convert_pressure(row[1], t.t_fine, calib),
        Quantity::Humidity => Ok(convert_humidity(row[1], t.temperature, calib)),
    }
}

/// Closed-form inverse of the temperature routine.
///
/// With `u = adc/131072 - t1/8192` the fine temperature is
/// `16·t3·u² + 8·t2·u`, so the preimage is a quadratic root.
pub fn invert_temperature(target: f64, calib: &CalibrationConstants) -> Result<f64> {
    let no_root = || Error::NoRoot { quantity: "temperature", target };
    if !target.is_finite() {
        return Err(no_root());
    }
    let a = 16.0 * calib.par_t3;
    let b = 8.0 * calib.par_t2;
    let c = -5120.0 * target;
    let to_code = |u: f64| (u + calib.par_t1 / 8192.0) * 131072.0;

    let mut candidates = Vec::with_capacity(2);
    if a == 0.0 {
        if b == 0.0 {
            return Err(no_root());
        }
        candidates.push(-c / b);
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Err(no_root());
        }
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        candidates.push(q / a);
        if q != 0.0 {
            candidates.push(c / q);
        }
    }
    let tol = INVERSE_TOLERANCE * Quantity::Temperature.range().span();
    candidates
        .into_iter()
        .map(to_code)
        .filter_map(|x| {
            // Absorb round-off right at the domain edges.
            let x = if x < 0.0 && x > -1e-6 { 0.0 } else { x };
            let x = if x > ADC_20BIT_MAX && x < ADC_20BIT_MAX + 1e-6 { ADC_20BIT_MAX } else { x };
            (0.0..=ADC_20BIT_MAX).contains(&x).then_some(x)
        })
        .find(|&x| (convert_temperature(x, calib).temperature - target).abs() <= tol)
        .ok_or_else(no_root)
}

/// Bisection for a monotone `f` on `[0, hi]`. Returns the code whose image
/// is closest to `target`.
fn bisect(
    f: &dyn Fn(f64) -> Result<f64>,
    target: f64,
    hi: f64,
    quantity: &'static str,
    tol: f64,
) -> Result<f64> {
    let no_root = || Error::NoRoot { quantity, target };
    let (mut a, mut b) = (0.0, hi);
    let (fa, fb) = (f(a)?, f(b)?);
    let increasing = fb >= fa;
    let (lo_v, hi_v) = if increasing { (fa, fb) } else { (fb, fa) };
    if !target.is_finite() || target < lo_v - tol || target > hi_v + tol {
        return Err(no_root());
    }
    let (mut best, mut best_err) = if (fa - target).abs() <= (fb - target).abs() {
        (a, (fa - target).abs())
    } else {
        (b, (fb - target).abs())
    };
    for _ in 0..BISECTION_ITERATIONS {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid)?;
        let err = (fm - target).abs();
        if err < best_err {
            best = mid;
            best_err = err;
        }
        if (fm < target) == increasing {
            a = mid;
        } else {
            b = mid;
        }
    }
    if best_err <= tol {
        Ok(best)
    } else {
        Err(no_root())
    }
}

pub fn invert_pressure(target: f64, t_fine: f64, calib: &CalibrationConstants) -> Result<f64> {
    let tol = INVERSE_TOLERANCE * Quantity::Pressure.range().span();
    bisect(&|x| convert_pressure(x, t_fine, calib), target, ADC_20BIT_MAX, "pressure", tol)
}

/// Inverse of the clamped humidity routine. At the clamp boundaries the
/// preimage is an interval; 100 maps to its smallest code and 0 to its
/// largest code, so the returned code converts back exactly.
pub fn invert_humidity(target: f64, temperature: f64, calib: &CalibrationConstants) -> Result<f64> {
    let no_root = || Error::NoRoot { quantity: "humidity", target };
    let f = |x: f64| convert_humidity(x, temperature, calib);
    if target == 100.0 || target == 0.0 {
        let saturating = target == 100.0;
        let hit = |v: f64| if saturating { v >= 100.0 } else { v > 0.0 };
        // `lo` never hits, `hi` always hits.
        let (mut lo, mut hi) = (0.0, ADC_16BIT_MAX);
        if saturating {
            if !hit(f(hi)) {
                return Err(no_root());
            }
            if hit(f(lo)) {
                return Ok(lo);
            }
        } else {
            if hit(f(lo)) {
                return Err(no_root());
            }
            if !hit(f(hi)) {
                return Ok(hi);
            }
        }
        for _ in 0..BISECTION_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if hit(f(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return Ok(if saturating { hi } else { lo });
    }
    let tol = INVERSE_TOLERANCE * Quantity::Humidity.range().span();
    bisect(&|x| Ok(f(x)), target, ADC_16BIT_MAX, "humidity", tol)
}

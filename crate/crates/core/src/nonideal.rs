//! Fixed-point quantization and OTA transfer-curve substitution.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cenn::Transconductance;
use crate::error::{Error, Result};

/// Signed Nb-bit grid over `[-1, 1 - 2/2^Nb]`, two's-complement style.
///
/// Level `k` (for `k in 0..2^Nb`) sits at `-1 + k * 2 / 2^Nb`, so the signed
/// code `k - 2^(Nb-1)` times `2^-(Nb-1)` gives the value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantSpec {
    bits: u32,
}

impl QuantSpec {
    pub const MIN_BITS: u32 = 2;
    pub const MAX_BITS: u32 = 16;

    pub fn new(bits: u32) -> Result<Self> {
        if !(Self::MIN_BITS..=Self::MAX_BITS).contains(&bits) {
            return Err(Error::Domain(format!(
                "quantization needs {}..={} bits, got {bits}",
                Self::MIN_BITS,
                Self::MAX_BITS
            )));
        }
        Ok(Self { bits })
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    /// Spacing between adjacent levels.
    pub fn step(self) -> f64 {
        2.0 / (1u64 << self.bits) as f64
    }

    pub fn max_level(self) -> f64 {
        1.0 - self.step()
    }

    pub fn min_code(self) -> i64 {
        -(1i64 << (self.bits - 1))
    }

    pub fn max_code(self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }

    /// Signed integer code of the nearest level (ties to even).
    pub fn code(self, x: f64) -> i64 {
        let half = (1u64 << (self.bits - 1)) as f64;
        let scaled = (x.clamp(-1.0, self.max_level()) * half).round_ties_even();
        (scaled as i64).clamp(self.min_code(), self.max_code())
    }

    pub fn value(self, code: i64) -> f64 {
        code as f64 / (1u64 << (self.bits - 1)) as f64
    }

    pub fn quantize(self, x: f64) -> f64 {
        self.value(self.code(x))
    }
}

/// Convenience wrapper around [`QuantSpec::quantize`].
pub fn quantize(x: f64, q: QuantSpec) -> f64 {
    q.quantize(x)
}

/// How a program is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    #[default]
    Ideal,
    /// Weights quantized once, every CeNN step output quantized after `sat`.
    Quantized,
    /// Template products pass through an OTA transfer curve.
    Nonideal,
}

impl FromStr for ExecMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Self::Ideal),
            "quantized" => Ok(Self::Quantized),
            "nonideal" => Ok(Self::Nonideal),
            other => Err(Error::Domain(format!(
                "unknown mode '{other}' (expected ideal, quantized or nonideal)"
            ))),
        }
    }
}

impl ExecMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ideal => "ideal",
            Self::Quantized => "quantized",
            Self::Nonideal => "nonideal",
        }
    }
}

/// Normalized OTA output current as a function of differential input voltage.
///
/// Voltages are in the same normalized units as cell states (1 V per unit);
/// currents are normalized so the ideal OTA has unit slope.
#[derive(Debug, Clone, PartialEq)]
pub struct OtaCurve {
    v: Vec<f64>,
    i: Vec<f64>,
}

const SYMMETRY_TOL: f64 = 1e-3;
const SLOPE_TOL: f64 = 0.01;

impl OtaCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let (v, i): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        let curve = Self { v, i };
        curve.validate()?;
        Ok(curve)
    }

    /// Straight line `i = v` over `[-1, 1]`; reproduces the ideal OTA exactly.
    pub fn ideal() -> Self {
        let pts = (-100..=100).map(|k| {
            let v = k as f64 / 100.0;
            (v, v)
        });
        Self::new(pts.collect()).expect("ideal curve is valid")
    }

    /// Linear to +-0.2, then `sign(v) * (0.2 + 0.4 tanh((|v| - 0.2) / 0.4))`,
    /// sampled every 0.01 over `[-1, 1]`.
    pub fn default_saturating() -> Self {
        Self::saturating(0.2, 0.4, 100)
    }

    /// Saturating family: linear up to `knee`, then a tanh shoulder of height
    /// `swing` with matching slope at the knee.
    pub fn saturating(knee: f64, swing: f64, samples_per_unit: i32) -> Self {
        let f = |v: f64| {
            let m = v.abs();
            if m <= knee {
                v
            } else {
                v.signum() * (knee + swing * ((m - knee) / swing).tanh())
            }
        };
        let pts = (-samples_per_unit..=samples_per_unit).map(|k| {
            let v = k as f64 / samples_per_unit as f64;
            (v, f(v))
        });
        Self::new(pts.collect()).expect("saturating curve is valid")
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.v.iter().copied().zip(self.i.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.v[0], self.v[self.v.len() - 1])
    }

    fn validate(&self) -> Result<()> {
        if self.v.len() < 2 {
            return Err(Error::Curve {
                row: self.v.len(),
                message: "need at least two samples".into(),
            });
        }
        for row in 0..self.v.len() {
            if !self.v[row].is_finite() || !self.i[row].is_finite() {
                return Err(Error::Curve {
                    row,
                    message: "non-finite sample".into(),
                });
            }
            if row > 0 && self.v[row] <= self.v[row - 1] {
                return Err(Error::Curve {
                    row,
                    message: format!("voltage {} does not increase", self.v[row]),
                });
            }
            if row > 0 && self.i[row] < self.i[row - 1] {
                return Err(Error::Curve {
                    row,
                    message: format!("current {} decreases", self.i[row]),
                });
            }
        }
        let (lo, hi) = self.domain();
        if !(lo < 0.0 && hi > 0.0) {
            return Err(Error::Curve {
                row: 0,
                message: "domain must straddle 0".into(),
            });
        }
        for row in 0..self.v.len() {
            let v = self.v[row];
            if -v < lo || -v > hi {
                continue;
            }
            let asym = self.i[row] + self.eval(-v);
            if asym.abs() > SYMMETRY_TOL {
                return Err(Error::Curve {
                    row,
                    message: format!("odd symmetry violated by {asym:.3e}"),
                });
            }
        }
        let h = self.v.iter().map(|v| v.abs()).filter(|&m| m > 0.0).fold(f64::INFINITY, f64::min);
        let h = h.min(-lo).min(hi);
        let slope = (self.eval(h) - self.eval(-h)) / (2.0 * h);
        if (slope - 1.0).abs() > SLOPE_TOL {
            return Err(Error::Curve {
                row: self.v.partition_point(|&v| v < 0.0),
                message: format!("slope at 0 is {slope:.4}, expected 1 within 1%"),
            });
        }
        Ok(())
    }

    /// Piecewise-linear lookup, clamped to the end samples outside the domain.
    ///
    /// Interpolation is anchored at the bracket end nearer zero, which makes an
    /// identity table reproduce `v` exactly.
    pub fn eval(&self, v: f64) -> f64 {
        let n = self.v.len();
        if v <= self.v[0] {
            return self.i[0];
        }
        if v >= self.v[n - 1] {
            return self.i[n - 1];
        }
        let hi = self.v.partition_point(|&s| s <= v);
        let lo = hi - 1;
        if self.v[lo] == v {
            return self.i[lo];
        }
        let (a, b) = if self.v[lo].abs() <= self.v[hi].abs() { (lo, hi) } else { (hi, lo) };
        let slope = (self.i[b] - self.i[a]) / (self.v[b] - self.v[a]);
        self.i[a] + (v - self.v[a]) * slope
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut pts = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
            if fields.len() != 2 {
                return Err(Error::parse(origin, format!("line {}: expected two columns", lineno + 1)));
            }
            let num = |f: &str| {
                f.parse::<f64>()
                    .map_err(|e| Error::parse(origin, format!("line {}: {e}", lineno + 1)))
            };
            pts.push((num(fields[0])?, num(fields[1])?));
        }
        Self::new(pts)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# v_diff i_out\n");
        for (v, i) in self.points() {
            // `{}` prints the shortest string that round-trips
            let _ = writeln!(out, "{v} {i}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_ota_curve(path: &Path) -> Result<OtaCurve> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    OtaCurve::parse(&text, &path.display().to_string())
}

/// `gain * f(v_diff)` where `f` is the curve lookup.
pub fn apply_ota_curve(gain: f64, v_diff: f64, curve: &OtaCurve) -> f64 {
    gain * curve.eval(v_diff)
}

impl Transconductance for OtaCurve {
    #[inline]
    fn current(&self, gain: f64, v: f64) -> f64 {
        apply_ota_curve(gain, v, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q4() -> QuantSpec {
        QuantSpec::new(4).unwrap()
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0, q4()), 0.0);
        assert_eq!(quantize(1.0, q4()), 0.875);
        assert_eq!(quantize(-1.0, q4()), -1.0);
        assert_eq!(quantize(-7.0, q4()), -1.0);
        // 0.0625 is halfway between 0 and 0.125: ties to the even code 0
        assert_eq!(quantize(0.0625, q4()), 0.0);
        assert_eq!(quantize(0.1875, q4()), 0.25);
    }

    #[test]
    fn bit_range() {
        assert!(QuantSpec::new(1).is_err());
        assert!(QuantSpec::new(17).is_err());
        let q = QuantSpec::new(8).unwrap();
        assert_eq!(q.min_code(), -128);
        assert_eq!(q.max_code(), 127);
        assert_eq!(q.code(1.0), 127);
    }

    #[test]
    fn mode_parse() {
        assert_eq!("quantized".parse::<ExecMode>().unwrap(), ExecMode::Quantized);
        assert!("fast".parse::<ExecMode>().is_err());
    }

    #[test]
    fn ideal_curve_is_exact() {
        let c = OtaCurve::ideal();
        for k in -2000..=2000 {
            let v = k as f64 / 1999.0;
            assert_eq!(c.eval(v), v.clamp(-1.0, 1.0), "v = {v}");
        }
        assert_eq!(c.eval(0.123456789), 0.123456789);
    }

    #[test]
    fn default_curve_shape() {
        let c = OtaCurve::default_saturating();
        assert_eq!(apply_ota_curve(0.7, 0.0, &c), 0.0);
        let ideal = 0.5 * 0.1;
        assert!((apply_ota_curve(0.5, 0.1, &c) - ideal).abs() <= 0.01 * ideal);
        assert!(apply_ota_curve(0.5, 0.5, &c).abs() < 0.25);
        assert!(apply_ota_curve(-0.5, 0.5, &c).abs() < 0.25);
        // clamped outside the table
        assert_eq!(c.eval(3.0), c.eval(1.0));
    }

    #[test]
    fn reversed_rows_rejected() {
        let mut pts: Vec<_> = OtaCurve::ideal().points().collect();
        pts.reverse();
        match OtaCurve::new(pts) {
            Err(Error::Curve { row, .. }) => assert_eq!(row, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn asymmetric_rejected() {
        let pts = vec![(-1.0, -0.5), (0.0, 0.0), (1.0, 1.0)];
        assert!(matches!(OtaCurve::new(pts), Err(Error::Curve { .. })));
    }

    #[test]
    fn wrong_slope_rejected() {
        let pts = vec![(-1.0, -0.9), (0.0, 0.0), (1.0, 0.9)];
        let err = OtaCurve::new(pts).unwrap_err();
        assert!(err.to_string().contains("slope"));
    }

    #[test]
    fn text_round_trip_is_bit_identical() {
        let c = OtaCurve::default_saturating();
        let back = OtaCurve::parse(&c.to_text(), "mem").unwrap();
        assert_eq!(c, back);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("curve.txt");
        c.save(&p).unwrap();
        assert_eq!(load_ota_curve(&p).unwrap(), c);
    }

    #[test]
    fn parse_errors_name_line() {
        let err = OtaCurve::parse("0 0\n1 x\n", "f.txt").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}

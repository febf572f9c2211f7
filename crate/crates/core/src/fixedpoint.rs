//! Signed fixed-point arithmetic in an `m,n` format.
//!
//! A format carries one sign bit, `m` integer bits and `n` fractional bits, so a
//! value is a raw two's-complement integer counting steps of `2^-n`. The
//! representable range is `[-2^m, 2^m - 2^-n]`.
//!
//! Every operation is carried out on `i128` first, so products and sums are
//! exact before they are rounded back to `n` fractional bits and passed
//! through the selected [`OverflowMode`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shape of a fixed-point word: `int_bits` integer bits, `frac_bits`
/// fractional bits and an implicit sign bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FixedFormat {
    int_bits: u32,
    frac_bits: u32,
}

impl FixedFormat {
    /// Widest supported word, sign bit included.
    pub const MAX_TOTAL_BITS: u32 = 64;

    pub fn new(int_bits: u32, frac_bits: u32) -> Result<Self, FixedError> {
        if int_bits as u64 + frac_bits as u64 + 1 > Self::MAX_TOTAL_BITS as u64 {
            return Err(FixedError::InvalidFormat {
                int_bits,
                frac_bits,
                reason: "word wider than 64 bits",
            });
        }
        Ok(FixedFormat { int_bits, frac_bits })
    }

    pub fn int_bits(&self) -> u32 {
        self.int_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Word length including the sign bit.
    pub fn total_bits(&self) -> u32 {
        self.int_bits + self.frac_bits + 1
    }

    pub fn raw_max(&self) -> i64 {
        ((1i128 << (self.int_bits + self.frac_bits)) - 1) as i64
    }

    pub fn raw_min(&self) -> i64 {
        (-(1i128 << (self.int_bits + self.frac_bits))) as i64
    }

    /// Weight of one raw step, `2^-n`.
    pub fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Largest representable value, `2^m - 2^-n`. Exact whenever the word
    /// fits in an `f64` mantissa (53 bits).
    pub fn v_max(&self) -> f64 {
        self.raw_max() as f64 * self.lsb()
    }

    /// Smallest representable value, `-2^m`.
    pub fn v_min(&self) -> f64 {
        -(self.int_bits as f64).exp2()
    }

    pub fn contains_raw(&self, raw: i128) -> bool {
        raw >= self.raw_min() as i128 && raw <= self.raw_max() as i128
    }

    /// Number of distinct values in the format, `2^(m+n+1)`.
    pub fn cardinality(&self) -> u128 {
        1u128 << self.total_bits()
    }
}

impl fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.int_bits, self.frac_bits)
    }
}

impl FromStr for FixedFormat {
    type Err = FixedError;

    /// Parses `"m,n"`. Surrounding `<...>` or `⟨...⟩` are tolerated.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FixedError::ParseFormat(s.to_string());
        let inner = s.trim().trim_start_matches(['<', '⟨']).trim_end_matches(['>', '⟩']);
        let (m, n) = inner.split_once(',').ok_or_else(bad)?;
        let m = m.trim().parse::<u32>().map_err(|_| bad())?;
        let n = n.trim().parse::<u32>().map_err(|_| bad())?;
        FixedFormat::new(m, n)
    }
}

impl TryFrom<String> for FixedFormat {
    type Error = FixedError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<FixedFormat> for String {
    fn from(fmt: FixedFormat) -> String {
        fmt.to_string()
    }
}

/// How a value that falls between two representable neighbours is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingMode {
    /// Round to nearest, ties to even.
    #[default]
    #[serde(alias = "nearest_ties_even", alias = "nearest-ties-even")]
    Nearest,
    /// Drop the fractional excess, rounding toward zero.
    #[serde(alias = "truncate_toward_zero", alias = "truncate-toward-zero")]
    Truncate,
    /// Round toward negative infinity.
    Floor,
}

impl RoundingMode {
    pub const ALL: [RoundingMode; 3] = [RoundingMode::Nearest, RoundingMode::Truncate, RoundingMode::Floor];

    fn round_f64(self, x: f64) -> f64 {
        match self {
            RoundingMode::Nearest => x.round_ties_even(),
            RoundingMode::Truncate => x.trunc(),
            RoundingMode::Floor => x.floor(),
        }
    }
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoundingMode::Nearest => "nearest",
            RoundingMode::Truncate => "truncate",
            RoundingMode::Floor => "floor",
        })
    }
}

impl FromStr for RoundingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest" | "nearest-ties-even" | "nearest_ties_even" => Ok(RoundingMode::Nearest),
            "truncate" | "truncate-toward-zero" | "truncate_toward_zero" => Ok(RoundingMode::Truncate),
            "floor" => Ok(RoundingMode::Floor),
            other => Err(format!(
                "unknown rounding mode {other:?} (expected nearest, truncate or floor)"
            )),
        }
    }
}

/// What happens when a result leaves `[v_min, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowMode {
    /// Report the excursion as an error.
    #[default]
    Detect,
    /// Clamp to the nearest bound.
    Saturate,
    /// Reduce modulo `2^(m+1)`, two's-complement style.
    #[serde(alias = "wrap")]
    Wraparound,
}

impl fmt::Display for OverflowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverflowMode::Detect => "detect",
            OverflowMode::Saturate => "saturate",
            OverflowMode::Wraparound => "wraparound",
        })
    }
}

impl FromStr for OverflowMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "detect" => Ok(OverflowMode::Detect),
            "saturate" => Ok(OverflowMode::Saturate),
            "wrap" | "wraparound" => Ok(OverflowMode::Wraparound),
            other => Err(format!(
                "unknown overflow mode {other:?} (expected detect, saturate or wraparound)"
            )),
        }
    }
}

/// Which end of the range was crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Max,
    Min,
}

/// An out-of-range result, carrying the unclamped raw value (in units of the
/// format's `2^-n`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OverflowEvent {
    pub wide_raw: i128,
    pub format: FixedFormat,
    pub bound: Bound,
}

impl fmt::Display for OverflowEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, limit) = match self.bound {
            Bound::Max => ("v_max", self.format.raw_max()),
            Bound::Min => ("v_min", self.format.raw_min()),
        };
        write!(
            f,
            "value {} exceeds {name} = {} of format {}",
            rational_string(self.wide_raw, self.format.frac_bits()),
            rational_string(limit as i128, self.format.frac_bits()),
            self.format
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixedError {
    #[error("invalid fixed-point format {int_bits},{frac_bits}: {reason}")]
    InvalidFormat {
        int_bits: u32,
        frac_bits: u32,
        reason: &'static str,
    },
    #[error("cannot parse fixed-point format {0:?}, expected \"m,n\"")]
    ParseFormat(String),
    #[error("operand formats differ ({0} vs {1})")]
    FormatMismatch(FixedFormat, FixedFormat),
    #[error("overflow: {0}")]
    Overflow(OverflowEvent),
    #[error("raw value {raw} is outside format {format}")]
    RawOutOfRange { raw: i128, format: FixedFormat },
    #[error("cannot quantize non-finite value {0}")]
    NonFinite(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("intermediate result exceeds 128 bits")]
    WideOverflow,
}

/// A value of a [`FixedFormat`]; its real value is exactly `raw * 2^-n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedValue {
    raw: i64,
    format: FixedFormat,
}

impl FixedValue {
    pub fn from_raw(raw: i64, format: FixedFormat) -> Result<Self, FixedError> {
        if !format.contains_raw(raw as i128) {
            return Err(FixedError::RawOutOfRange {
                raw: raw as i128,
                format,
            });
        }
        Ok(FixedValue { raw, format })
    }

    pub fn zero(format: FixedFormat) -> Self {
        FixedValue { raw: 0, format }
    }

    pub fn max_value(format: FixedFormat) -> Self {
        FixedValue {
            raw: format.raw_max(),
            format,
        }
    }

    pub fn min_value(format: FixedFormat) -> Self {
        FixedValue {
            raw: format.raw_min(),
            format,
        }
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> FixedFormat {
        self.format
    }

    /// Real value as `f64`; exact while `|raw| <= 2^53`.
    pub fn to_f64(&self) -> f64 {
        self.raw as f64 * self.format.lsb()
    }

    /// Exact value as a reduced fraction, e.g. `"63/32"`.
    pub fn to_rational(&self) -> String {
        rational_string(self.raw as i128, self.format.frac_bits())
    }
}

impl fmt::Display for FixedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Renders `raw * 2^-frac_bits` as a reduced fraction.
pub fn rational_string(raw: i128, frac_bits: u32) -> String {
    if raw == 0 {
        return "0".to_string();
    }
    let shift = raw.trailing_zeros().min(frac_bits);
    let num = raw >> shift;
    let den_bits = frac_bits - shift;
    if den_bits == 0 {
        num.to_string()
    } else {
        format!("{num}/{}", 1u128 << den_bits)
    }
}

/// Integer division `num / den` rounded per `mode`. `den` must be non-zero.
pub fn div_round(num: i128, den: i128, mode: RoundingMode) -> i128 {
    assert!(den != 0, "div_round by zero");
    let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match mode {
        RoundingMode::Floor => q,
        RoundingMode::Truncate => {
            if num < 0 && r != 0 {
                q + 1
            } else {
                q
            }
        }
        RoundingMode::Nearest => {
            let upper = den - r;
            if r > upper || (r == upper && q.rem_euclid(2) == 1) {
                q + 1
            } else {
                q
            }
        }
    }
}

/// Two's-complement reduction of `wide` into the format's raw range.
pub fn wrap_raw(wide: i128, format: FixedFormat) -> i64 {
    let bits = format.total_bits();
    let modulus = 1i128 << bits;
    let mut r = wide.rem_euclid(modulus);
    if r > format.raw_max() as i128 {
        r -= modulus;
    }
    r as i64
}

pub fn saturate_raw(wide: i128, format: FixedFormat) -> i64 {
    wide.clamp(format.raw_min() as i128, format.raw_max() as i128) as i64
}

/// Brings a wide raw result into range according to `mode`. In detect mode
/// an out-of-range value is returned as the error.
pub fn handle_range(wide: i128, format: FixedFormat, mode: OverflowMode) -> Result<i64, OverflowEvent> {
    if format.contains_raw(wide) {
        return Ok(wide as i64);
    }
    match mode {
        OverflowMode::Detect => Err(OverflowEvent {
            wide_raw: wide,
            format,
            bound: if wide > 0 { Bound::Max } else { Bound::Min },
        }),
        OverflowMode::Saturate => Ok(saturate_raw(wide, format)),
        OverflowMode::Wraparound => Ok(wrap_raw(wide, format)),
    }
}

fn in_format(wide: i128, format: FixedFormat, mode: OverflowMode) -> Result<FixedValue, FixedError> {
    handle_range(wide, format, mode)
        .map(|raw| FixedValue { raw, format })
        .map_err(FixedError::Overflow)
}

/// Quantizes a real number to `format` under the given rounding rule, then
/// handles any excursion with `overflow`.
pub fn quantize(
    x: f64,
    format: FixedFormat,
    rounding: RoundingMode,
    overflow: OverflowMode,
) -> Result<FixedValue, FixedError> {
    if !x.is_finite() {
        return Err(FixedError::NonFinite(x));
    }
    let mut scaled = x * (format.frac_bits() as f64).exp2();
    if !scaled.is_finite() {
        // Only reachable for |x| near f64::MAX with many fractional bits.
        match overflow {
            OverflowMode::Wraparound => {
                let period = ((format.int_bits() + 1) as f64).exp2();
                scaled = x.rem_euclid(period) * (format.frac_bits() as f64).exp2();
            }
            _ => scaled = scaled.clamp(-1e300, 1e300),
        }
    }
    let mut rounded = rounding.round_f64(scaled);
    // Keep the value inside i128 without changing its class modulo 2^w.
    const LIMIT: f64 = 1.0e37;
    if rounded.abs() >= LIMIT {
        rounded = match overflow {
            OverflowMode::Wraparound => rounded.rem_euclid((format.total_bits() as f64).exp2()),
            _ => rounded.signum() * LIMIT,
        };
    }
    in_format(rounded as i128, format, overflow)
}

fn same_format(a: &FixedValue, b: &FixedValue) -> Result<FixedFormat, FixedError> {
    if a.format != b.format {
        return Err(FixedError::FormatMismatch(a.format, b.format));
    }
    Ok(a.format)
}

pub fn fx_add(a: FixedValue, b: FixedValue, overflow: OverflowMode) -> Result<FixedValue, FixedError> {
    let format = same_format(&a, &b)?;
    in_format(a.raw as i128 + b.raw as i128, format, overflow)
}

pub fn fx_sub(a: FixedValue, b: FixedValue, overflow: OverflowMode) -> Result<FixedValue, FixedError> {
    let format = same_format(&a, &b)?;
    in_format(a.raw as i128 - b.raw as i128, format, overflow)
}

/// Exact product re-rounded to `n` fractional bits.
pub fn fx_mul(
    a: FixedValue,
    b: FixedValue,
    rounding: RoundingMode,
    overflow: OverflowMode,
) -> Result<FixedValue, FixedError> {
    let format = same_format(&a, &b)?;
    let wide = a.raw as i128 * b.raw as i128;
    let scale = 1i128 << format.frac_bits();
    in_format(div_round(wide, scale, rounding), format, overflow)
}

pub fn fx_div(
    a: FixedValue,
    b: FixedValue,
    rounding: RoundingMode,
    overflow: OverflowMode,
) -> Result<FixedValue, FixedError> {
    let format = same_format(&a, &b)?;
    if b.raw == 0 {
        return Err(FixedError::DivisionByZero);
    }
    let num = (a.raw as i128) << format.frac_bits();
    in_format(div_round(num, b.raw as i128, rounding), format, overflow)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmt(m: u32, n: u32) -> FixedFormat {
        FixedFormat::new(m, n).unwrap()
    }

    fn val(x: f64, f: FixedFormat) -> FixedValue {
        quantize(x, f, RoundingMode::Nearest, OverflowMode::Detect).unwrap()
    }

    #[test]
    fn range_bounds() {
        assert_eq!(fmt(4, 10).v_max(), 15.9990234375);
        assert_eq!(fmt(1, 5).v_min(), -2.0);
        assert_eq!(fmt(1, 5).v_max(), 1.96875);
        assert_eq!(fmt(0, 0).v_max(), 0.0);
        assert_eq!(fmt(0, 0).v_min(), -1.0);
        assert_eq!(fmt(31, 32).raw_max(), i64::MAX);
        assert_eq!(fmt(31, 32).raw_min(), i64::MIN);
    }

    #[test]
    fn format_width_limit() {
        assert!(FixedFormat::new(31, 32).is_ok());
        assert!(matches!(
            FixedFormat::new(32, 32),
            Err(FixedError::InvalidFormat { .. })
        ));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("4,10".parse::<FixedFormat>().unwrap(), fmt(4, 10));
        assert_eq!(" 1, 5 ".parse::<FixedFormat>().unwrap(), fmt(1, 5));
        assert_eq!("<7,6>".parse::<FixedFormat>().unwrap(), fmt(7, 6));
        assert!("4;10".parse::<FixedFormat>().is_err());
        assert!("-1,3".parse::<FixedFormat>().is_err());
        assert_eq!(fmt(4, 10).to_string(), "4,10");
    }

    #[test]
    fn quantize_examples() {
        let f = fmt(1, 5);
        assert_eq!(val(0.3, f).raw(), 10);
        assert_eq!(val(0.3, f).to_f64(), 0.3125);
        for m in RoundingMode::ALL {
            assert_eq!(quantize(0.0, f, m, OverflowMode::Detect).unwrap().raw(), 0);
        }
        let sat = quantize(1.97, f, RoundingMode::Nearest, OverflowMode::Saturate).unwrap();
        assert_eq!(sat.to_f64(), 1.96875);
        // 1.97 rounds onto v_max itself; 1.99 rounds past it
        assert_eq!(val(1.97, f).raw(), 63);
        let err = quantize(1.99, f, RoundingMode::Nearest, OverflowMode::Detect).unwrap_err();
        assert!(matches!(err, FixedError::Overflow(ev) if ev.bound == Bound::Max && ev.wide_raw == 64));
        let sat = quantize(1.99, f, RoundingMode::Nearest, OverflowMode::Saturate).unwrap();
        assert_eq!(sat.raw(), 63);
    }

    #[test]
    fn quantize_rounding_modes() {
        let f = fmt(1, 2);
        let q = |x, m| quantize(x, f, m, OverflowMode::Detect).unwrap().raw();
        // 0.375 = 1.5 steps, -0.375 = -1.5 steps
        assert_eq!(q(0.375, RoundingMode::Nearest), 2);
        assert_eq!(q(0.125, RoundingMode::Nearest), 0);
        assert_eq!(q(-0.375, RoundingMode::Nearest), -2);
        assert_eq!(q(0.375, RoundingMode::Truncate), 1);
        assert_eq!(q(-0.375, RoundingMode::Truncate), -1);
        assert_eq!(q(-0.375, RoundingMode::Floor), -2);
    }

    #[test]
    fn quantize_rejects_non_finite() {
        let f = fmt(1, 5);
        assert!(matches!(
            quantize(f64::NAN, f, RoundingMode::Nearest, OverflowMode::Saturate),
            Err(FixedError::NonFinite(_))
        ));
    }

    #[test]
    fn quantize_huge_values() {
        let f = fmt(3, 60);
        let s = quantize(1e300, f, RoundingMode::Nearest, OverflowMode::Saturate).unwrap();
        assert_eq!(s.raw(), f.raw_max());
        let w = quantize(1e300, f, RoundingMode::Nearest, OverflowMode::Wraparound).unwrap();
        assert!(f.contains_raw(w.raw() as i128));
        // 2^200 is a multiple of the wrap period
        let p = quantize(2f64.powi(200), f, RoundingMode::Nearest, OverflowMode::Wraparound).unwrap();
        assert_eq!(p.raw(), 0);
    }

    #[test]
    fn add_examples() {
        let f = fmt(1, 5);
        let a = val(1.96875, f);
        let b = val(1.0, f);
        assert_eq!(fx_add(a, b, OverflowMode::Wraparound).unwrap().to_f64(), -1.03125);
        assert_eq!(fx_add(a, b, OverflowMode::Saturate).unwrap().to_f64(), 1.96875);
        let err = fx_add(a, b, OverflowMode::Detect).unwrap_err();
        assert!(matches!(err, FixedError::Overflow(ev) if ev.wide_raw == 95));
    }

    #[test]
    fn mul_examples() {
        let f = fmt(1, 5);
        let h = val(0.5, f);
        let p = fx_mul(h, h, RoundingMode::Nearest, OverflowMode::Detect).unwrap();
        assert_eq!(p.to_f64(), 0.25);
        // -2 * -2 = 4 leaves the range
        let lo = FixedValue::min_value(f);
        assert!(fx_mul(lo, lo, RoundingMode::Nearest, OverflowMode::Detect).is_err());
        let s = fx_mul(lo, lo, RoundingMode::Nearest, OverflowMode::Saturate).unwrap();
        assert_eq!(s.raw(), f.raw_max());
    }

    #[test]
    fn div_and_sub() {
        let f = fmt(1, 5);
        let q = fx_div(val(0.5, f), val(1.0, f), RoundingMode::Nearest, OverflowMode::Detect).unwrap();
        assert_eq!(q.to_f64(), 0.5);
        let third = fx_div(val(1.0, f), val(-1.5, f), RoundingMode::Nearest, OverflowMode::Detect).unwrap();
        // -2/3 = -21.33 steps
        assert_eq!(third.raw(), -21);
        assert_eq!(
            fx_div(
                val(1.0, f),
                FixedValue::zero(f),
                RoundingMode::Nearest,
                OverflowMode::Detect
            ),
            Err(FixedError::DivisionByZero)
        );
        assert_eq!(
            fx_sub(val(0.5, f), val(1.0, f), OverflowMode::Detect).unwrap().to_f64(),
            -0.5
        );
    }

    #[test]
    fn format_mismatch() {
        let a = val(0.5, fmt(1, 5));
        let b = val(0.5, fmt(2, 5));
        assert!(matches!(
            fx_add(a, b, OverflowMode::Detect),
            Err(FixedError::FormatMismatch(_, _))
        ));
    }

    #[test]
    fn div_round_modes() {
        assert_eq!(div_round(5, 2, RoundingMode::Nearest), 2);
        assert_eq!(div_round(7, 2, RoundingMode::Nearest), 4);
        assert_eq!(div_round(-5, 2, RoundingMode::Nearest), -2);
        assert_eq!(div_round(-7, 2, RoundingMode::Floor), -4);
        assert_eq!(div_round(-7, 2, RoundingMode::Truncate), -3);
        assert_eq!(div_round(7, -2, RoundingMode::Truncate), -3);
        assert_eq!(div_round(10, 3, RoundingMode::Nearest), 3);
        assert_eq!(div_round(11, 3, RoundingMode::Nearest), 4);
    }

    #[test]
    fn rationals() {
        let f = fmt(1, 5);
        assert_eq!(FixedValue::max_value(f).to_rational(), "63/32");
        assert_eq!(val(0.5, f).to_rational(), "1/2");
        assert_eq!(FixedValue::min_value(f).to_rational(), "-2");
        assert_eq!(rational_string(0, 5), "0");
    }

    #[test]
    fn serde_names() {
        let f: FixedFormat = serde_json::from_str("\"4,10\"").unwrap();
        assert_eq!(f, fmt(4, 10));
        assert_eq!(serde_json::to_string(&f).unwrap(), "\"4,10\"");
        let o: OverflowMode = serde_json::from_str("\"wrap\"").unwrap();
        assert_eq!(o, OverflowMode::Wraparound);
        assert_eq!("wrap".parse::<OverflowMode>().unwrap(), OverflowMode::Wraparound);
        assert_eq!("truncate".parse::<RoundingMode>().unwrap(), RoundingMode::Truncate);
        assert!("round".parse::<RoundingMode>().is_err());
    }
}

//! Transfer functions, coefficient quantization, the double-precision
//! direct-form I recursion and a few closed-form fixture designers.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedpoint::{quantize, FixedError, FixedFormat, FixedValue, OverflowMode, RoundingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polynomial {
    Numerator,
    Denominator,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("{0:?} coefficient list is empty")]
    Empty(Polynomial),
    #[error("leading denominator coefficient a_0 must be non-zero")]
    ZeroLeading,
    #[error("{which:?} coefficient {index} is not finite")]
    NonFinite { which: Polynomial, index: usize },
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidSampleRate(f64),
    #[error("{which:?} coefficient {index} = {value} is outside format {format} [{}, {}]", format.v_min(), format.v_max())]
    CoefficientOutOfRange {
        which: Polynomial,
        index: usize,
        value: f64,
        format: FixedFormat,
    },
    #[error("a_0 = {value} quantizes to zero in format {format}")]
    QuantizedLeadingZero { value: f64, format: FixedFormat },
    #[error("cutoff {fc_hz} Hz must lie strictly between 0 and fs/2 = {} Hz", fs_hz / 2.0)]
    FrequencyOutOfRange { fc_hz: f64, fs_hz: f64 },
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(f64, f64),
    #[error("invalid design parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Fixed(#[from] FixedError),
}

/// `H(z) = (b_0 + b_1 z^-1 + ...) / (a_0 + a_1 z^-1 + ...)` at a given sample
/// rate. `a_0` is kept as designed, never normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransferFunction")]
pub struct TransferFunction {
    b: Vec<f64>,
    a: Vec<f64>,
    fs_hz: f64,
}

#[derive(Deserialize)]
struct RawTransferFunction {
    b: Vec<f64>,
    a: Vec<f64>,
    fs_hz: f64,
}

impl TryFrom<RawTransferFunction> for TransferFunction {
    type Error = FilterError;

    fn try_from(raw: RawTransferFunction) -> Result<Self, Self::Error> {
        TransferFunction::new(raw.b, raw.a, raw.fs_hz)
    }
}

impl TransferFunction {
    pub fn new(b: Vec<f64>, a: Vec<f64>, fs_hz: f64) -> Result<Self, FilterError> {
        if b.is_empty() {
            return Err(FilterError::Empty(Polynomial::Numerator));
        }
        if a.is_empty() {
            return Err(FilterError::Empty(Polynomial::Denominator));
        }
        for (which, coeffs) in [(Polynomial::Numerator, &b), (Polynomial::Denominator, &a)] {
            if let Some(index) = coeffs.iter().position(|c| !c.is_finite()) {
                return Err(FilterError::NonFinite { which, index });
            }
        }
        if a[0] == 0.0 {
            return Err(FilterError::ZeroLeading);
        }
        if !(fs_hz.is_finite() && fs_hz > 0.0) {
            return Err(FilterError::InvalidSampleRate(fs_hz));
        }
        Ok(TransferFunction { b, a, fs_hz })
    }

    /// FIR filter with denominator `[1]`.
    pub fn fir(taps: Vec<f64>, fs_hz: f64) -> Result<Self, FilterError> {
        TransferFunction::new(taps, vec![1.0], fs_hz)
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    pub fn is_fir(&self) -> bool {
        self.a[1..].iter().all(|&c| c == 0.0)
    }

    pub fn order(&self) -> usize {
        self.b.len().max(self.a.len()) - 1
    }

    /// Series connection, multiplying numerators and denominators out.
    pub fn cascade(&self, other: &TransferFunction) -> Result<TransferFunction, FilterError> {
        if self.fs_hz != other.fs_hz {
            return Err(FilterError::SampleRateMismatch(self.fs_hz, other.fs_hz));
        }
        TransferFunction::new(convolve(&self.b, &other.b), convolve(&self.a, &other.a), self.fs_hz)
    }

    /// Numerator multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<TransferFunction, FilterError> {
        TransferFunction::new(self.b.iter().map(|c| c * gain).collect(), self.a.clone(), self.fs_hz)
    }
}

pub fn convolve(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + y.len() - 1];
    for (i, xi) in x.iter().enumerate() {
        for (j, yj) in y.iter().enumerate() {
            out[i + j] += xi * yj;
        }
    }
    out
}

/// A transfer function whose coefficients have been quantized to one format.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFilter {
    b: Vec<FixedValue>,
    a: Vec<FixedValue>,
    format: FixedFormat,
    rounding: RoundingMode,
    origin: TransferFunction,
}

impl QuantizedFilter {
    pub fn b(&self) -> &[FixedValue] {
        &self.b
    }

    pub fn a(&self) -> &[FixedValue] {
        &self.a
    }

    pub fn format(&self) -> FixedFormat {
        self.format
    }

    pub fn rounding(&self) -> RoundingMode {
        self.rounding
    }

    /// The design this filter was quantized from.
    pub fn origin(&self) -> &TransferFunction {
        &self.origin
    }

    pub fn is_fir(&self) -> bool {
        self.a[1..].iter().all(|c| c.raw() == 0)
    }

    pub fn b_real(&self) -> Vec<f64> {
        self.b.iter().map(FixedValue::to_f64).collect()
    }

    pub fn a_real(&self) -> Vec<f64> {
        self.a.iter().map(FixedValue::to_f64).collect()
    }

    /// The quantized coefficients read back as reals.
    pub fn to_transfer_function(&self) -> TransferFunction {
        TransferFunction {
            b: self.b_real(),
            a: self.a_real(),
            fs_hz: self.origin.fs_hz,
        }
    }
}

/// Quantizes every coefficient (including `a_0`) to `format`. A coefficient
/// outside the representable range is an error, never saturated.
pub fn quantize_filter(
    tf: &TransferFunction,
    format: FixedFormat,
    rounding: RoundingMode,
) -> Result<QuantizedFilter, FilterError> {
    let q = |which: Polynomial, coeffs: &[f64]| -> Result<Vec<FixedValue>, FilterError> {
        coeffs
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                quantize(value, format, rounding, OverflowMode::Detect).map_err(|e| match e {
                    FixedError::Overflow(_) => FilterError::CoefficientOutOfRange {
                        which,
                        index,
                        value,
                        format,
                    },
                    other => FilterError::Fixed(other),
                })
            })
            .collect()
    };
    let b = q(Polynomial::Numerator, &tf.b)?;
    let a = q(Polynomial::Denominator, &tf.a)?;
    if a[0].raw() == 0 {
        return Err(FilterError::QuantizedLeadingZero { value: tf.a[0], format });
    }
    Ok(QuantizedFilter {
        b,
        a,
        format,
        rounding,
        origin: tf.clone(),
    })
}

/// Runs the direct-form I difference equation in double precision from a
/// zero initial state:
/// `a_0 y[n] = sum_i b_i x[n-i] - sum_{j>=1} a_j y[n-j]`.
pub fn filter_real(tf: &TransferFunction, input: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(input.len());
    for n in 0..input.len() {
        let mut acc = 0.0;
        for (i, bi) in tf.b.iter().enumerate().take(n + 1) {
            acc += bi * input[n - i];
        }
        for (j, aj) in tf.a.iter().enumerate().skip(1).take(n) {
            acc -= aj * y[n - j];
        }
        y.push(acc / tf.a[0]);
    }
    y
}

pub fn impulse_response(tf: &TransferFunction, len: usize) -> Vec<f64> {
    let mut impulse = vec![0.0; len];
    if let Some(first) = impulse.first_mut() {
        *first = 1.0;
    }
    filter_real(tf, &impulse)
}

/// Impulse response of the quantized coefficients, computed in double
/// precision so only coefficient error shows up.
pub fn impulse_response_quantized(qf: &QuantizedFilter, len: usize) -> Vec<f64> {
    impulse_response(&qf.to_transfer_function(), len)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ButterworthType {
    Lowpass,
    Highpass,
}

fn check_cutoff(fc_hz: f64, fs_hz: f64) -> Result<(), FilterError> {
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(FilterError::InvalidSampleRate(fs_hz));
    }
    if !(fc_hz > 0.0 && fc_hz < fs_hz / 2.0) {
        return Err(FilterError::FrequencyOutOfRange { fc_hz, fs_hz });
    }
    Ok(())
}

/// Second-order Butterworth section via the bilinear transform with cutoff
/// prewarping. Unity gain at DC (lowpass) or Nyquist (highpass), -3 dB at
/// `fc_hz`.
pub fn design_butterworth2(kind: ButterworthType, fc_hz: f64, fs_hz: f64) -> Result<TransferFunction, FilterError> {
    check_cutoff(fc_hz, fs_hz)?;
    let k = (PI * fc_hz / fs_hz).tan();
    let k2 = k * k;
    let norm = 1.0 / (1.0 + SQRT_2 * k + k2);
    let a = vec![1.0, 2.0 * (k2 - 1.0) * norm, (1.0 - SQRT_2 * k + k2) * norm];
    let b = match kind {
        ButterworthType::Lowpass => {
            let g = k2 * norm;
            vec![g, 2.0 * g, g]
        }
        ButterworthType::Highpass => vec![norm, -2.0 * norm, norm],
    };
    TransferFunction::new(b, a, fs_hz)
}

/// `taps`-point moving average.
pub fn design_fir_movingavg(taps: usize, fs_hz: f64) -> Result<TransferFunction, FilterError> {
    if taps == 0 {
        return Err(FilterError::InvalidParameter(
            "moving average needs at least one tap".into(),
        ));
    }
    TransferFunction::fir(vec![1.0 / taps as f64; taps], fs_hz)
}

/// Hann-windowed sinc lowpass of even `order` (`order + 1` taps), scaled to
/// unity DC gain.
pub fn design_fir_hann(order: usize, fc_hz: f64, fs_hz: f64) -> Result<TransferFunction, FilterError> {
    if order == 0 || !order.is_multiple_of(2) {
        return Err(FilterError::InvalidParameter(format!(
            "window order must be even and positive, got {order}"
        )));
    }
    check_cutoff(fc_hz, fs_hz)?;
    let cutoff = 2.0 * fc_hz / fs_hz;
    let center = (order / 2) as f64;
    let mut taps: Vec<f64> = (0..=order)
        .map(|i| {
            let t = i as f64 - center;
            let sinc = if t == 0.0 {
                1.0
            } else {
                (PI * cutoff * t).sin() / (PI * cutoff * t)
            };
            // endpoints excluded so no tap is zeroed by the window
            let window = 0.5 - 0.5 * (2.0 * PI * (i + 1) as f64 / (order + 2) as f64).cos();
            cutoff * sinc * window
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    // enforce exact symmetry against rounding in the window evaluation
    for i in 0..order / 2 {
        let avg = 0.5 * (taps[i] + taps[order - i]);
        taps[i] = avg;
        taps[order - i] = avg;
    }
    TransferFunction::fir(taps, fs_hz)
}

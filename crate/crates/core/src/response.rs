//! Sampled frequency response and the magnitude/phase acceptance predicates.
//!
//! A response is the `N`-point sampled DTFT of an impulse response,
//! `H_k = sum_n h[n] e^{-j 2 pi k n / N}`, bin `k` sitting at the digital
//! frequency `2 pi k / N`. Because filter coefficients are real only the
//! half grid `k = 0..=N/2` is checked.
//!
//! Band membership uses closed intervals on bin frequencies. Gains are given
//! in dB and compared in linear magnitude.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filtermodel::{impulse_response, QuantizedFilter, TransferFunction};

/// Default grid size.
pub const DEFAULT_GRID: usize = 1024;

/// Relative tail mass tolerated when truncating an IIR impulse response.
pub const TAIL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResponseError {
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("impulse response of length {len} does not fit a {grid}-point grid")]
    ResponseTooLong { len: usize, grid: usize },
    #[error(
        "impulse response not negligible after {grid} samples (tail estimate {tail_estimate:e}); try a grid of at least {suggested_grid}"
    )]
    TruncationInsufficient {
        grid: usize,
        tail_estimate: f64,
        suggested_grid: usize,
    },
    #[error("spec is for a {actual} filter, expected {expected}")]
    WrongKind { expected: BandKind, actual: BandKind },
    #[error("spec has no {0} to check")]
    MissingFrequency(&'static str),
    #[error("spec gives the {frequency} but not the gain {gain}")]
    MissingGain {
        frequency: &'static str,
        gain: &'static str,
    },
    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),
    #[error("responses have different grids ({0} vs {1})")]
    GridMismatch(usize, usize),
    #[error("phase threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandKind {
    Lowpass,
    Highpass,
    Bandpass,
}

impl fmt::Display for BandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BandKind::Lowpass => "lowpass",
            BandKind::Highpass => "highpass",
            BandKind::Bandpass => "bandpass",
        })
    }
}

/// A band edge in rad/sample: a single frequency for lowpass/highpass, an
/// ordered pair for bandpass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Edge {
    Single(f64),
    Pair(f64, f64),
}

impl Edge {
    fn values(&self) -> Vec<f64> {
        match *self {
            Edge::Single(w) => vec![w],
            Edge::Pair(lo, hi) => vec![lo, hi],
        }
    }
}

/// The design contract being verified. Any edge may be absent; each present
/// edge needs its gain.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterSpecBand {
    pub kind: Option<BandKind>,
    pub passband: Option<Edge>,
    pub stopband: Option<Edge>,
    pub cutoff: Option<Edge>,
    pub ap_db: Option<f64>,
    pub ar_db: Option<f64>,
    pub ac_db: Option<f64>,
    /// Radians.
    pub phase_threshold: Option<f64>,
}

impl FilterSpecBand {
    pub fn new(kind: BandKind) -> Self {
        FilterSpecBand {
            kind: Some(kind),
            ..Default::default()
        }
    }

    pub fn passband(mut self, edge: Edge, ap_db: f64) -> Self {
        self.passband = Some(edge);
        self.ap_db = Some(ap_db);
        self
    }

    pub fn stopband(mut self, edge: Edge, ar_db: f64) -> Self {
        self.stopband = Some(edge);
        self.ar_db = Some(ar_db);
        self
    }

    pub fn cutoff(mut self, edge: Edge, ac_db: f64) -> Self {
        self.cutoff = Some(edge);
        self.ac_db = Some(ac_db);
        self
    }

    pub fn phase_threshold(mut self, radians: f64) -> Self {
        self.phase_threshold = Some(radians);
        self
    }

    pub fn band_kind(&self) -> Result<BandKind, ResponseError> {
        self.kind
            .ok_or_else(|| ResponseError::InvalidSpec("filter kind is missing".into()))
    }

    /// Checks the structural invariants: frequencies inside `(0, pi)`, edge
    /// shapes matching the kind, ordering, and `Ap > Ar`.
    pub fn validate(&self) -> Result<(), ResponseError> {
        let kind = self.band_kind()?;
        let invalid = |msg: String| Err(ResponseError::InvalidSpec(msg));
        let edges = [
            ("passband", self.passband),
            ("stopband", self.stopband),
            ("cutoff", self.cutoff),
        ];
        for (name, edge) in edges {
            let Some(edge) = edge else { continue };
            for w in edge.values() {
                if !(w.is_finite() && w > 0.0 && w < PI) {
                    return invalid(format!("{name} frequency {w} rad/sample is outside (0, pi)"));
                }
            }
            match (kind, edge) {
                (BandKind::Bandpass, Edge::Single(_)) => {
                    return invalid(format!("bandpass {name} needs a frequency pair"))
                }
                (BandKind::Lowpass | BandKind::Highpass, Edge::Pair(..)) => {
                    return invalid(format!("{kind} {name} takes a single frequency"))
                }
                (_, Edge::Pair(lo, hi)) if lo >= hi => {
                    return invalid(format!("{name} pair ({lo}, {hi}) is not increasing"))
                }
                _ => {}
            }
        }
        if kind == BandKind::Bandpass && (self.cutoff.is_some() || self.ac_db.is_some()) {
            return invalid("bandpass specs take no cutoff clause".into());
        }
        for (name, gain) in [("ap_db", self.ap_db), ("ar_db", self.ar_db), ("ac_db", self.ac_db)] {
            if let Some(g) = gain {
                if !g.is_finite() {
                    return invalid(format!("{name} = {g} is not finite"));
                }
            }
        }
        if let (Some(ap), Some(ar)) = (self.ap_db, self.ar_db) {
            if ap <= ar {
                return invalid(format!(
                    "passband gain Ap = {ap} dB must exceed stopband gain Ar = {ar} dB"
                ));
            }
        }
        match (kind, self.passband, self.stopband) {
            (BandKind::Lowpass, Some(Edge::Single(wp)), Some(Edge::Single(wr))) if wp >= wr => {
                return invalid(format!("lowpass needs wp < wr, got wp = {wp}, wr = {wr}"))
            }
            (BandKind::Highpass, Some(Edge::Single(wp)), Some(Edge::Single(wr))) if wr >= wp => {
                return invalid(format!("highpass needs wr < wp, got wr = {wr}, wp = {wp}"))
            }
            (BandKind::Bandpass, Some(Edge::Pair(p1, p2)), Some(Edge::Pair(r1, r2))) if !(r1 < p1 && p2 < r2) => {
                return invalid(format!(
                    "bandpass needs wr1 < wp1 < wp2 < wr2, got ({r1}, {p1}, {p2}, {r2})"
                ))
            }
            _ => {}
        }
        if let Some(t) = self.phase_threshold {
            if !(t.is_finite() && t > 0.0) {
                return Err(ResponseError::InvalidThreshold(t));
            }
        }
        Ok(())
    }
}

/// A filter spec with band edges in Hz, as written in job files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpecHz {
    pub kind: BandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wp_hz: Option<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wr_hz: Option<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wc_hz: Option<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ac_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_threshold_rad: Option<f64>,
}

impl FilterSpecHz {
    pub fn new(kind: BandKind) -> Self {
        FilterSpecHz {
            kind,
            wp_hz: None,
            wr_hz: None,
            wc_hz: None,
            ap_db: None,
            ar_db: None,
            ac_db: None,
            phase_threshold_rad: None,
        }
    }

    /// Converts to rad/sample with `w = 2 pi f / fs` and validates.
    pub fn to_band(&self, fs_hz: f64) -> Result<FilterSpecBand, ResponseError> {
        let w = |f: f64| 2.0 * PI * f / fs_hz;
        let conv = |e: Option<Edge>| {
            e.map(|e| match e {
                Edge::Single(f) => Edge::Single(w(f)),
                Edge::Pair(lo, hi) => Edge::Pair(w(lo), w(hi)),
            })
        };
        let band = FilterSpecBand {
            kind: Some(self.kind),
            passband: conv(self.wp_hz),
            stopband: conv(self.wr_hz),
            cutoff: conv(self.wc_hz),
            ap_db: self.ap_db,
            ar_db: self.ar_db,
            ac_db: self.ac_db,
            phase_threshold: self.phase_threshold_rad,
        };
        band.validate()?;
        Ok(band)
    }
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    20.0 * lin.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSource {
    Ideal,
    Fixed,
}

/// `N` complex samples of a frequency response on the grid `2 pi k / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    bins: Vec<Complex64>,
    source: ResponseSource,
}

impl FrequencyResponse {
    pub fn new(bins: Vec<Complex64>, source: ResponseSource) -> Self {
        FrequencyResponse { bins, source }
    }

    pub fn with_source(mut self, source: ResponseSource) -> Self {
        self.source = source;
        self
    }

    pub fn source(&self) -> ResponseSource {
        self.source
    }

    pub fn grid(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn bin(&self, k: usize) -> Complex64 {
        self.bins[k]
    }

    /// Digital frequency of bin `k` in rad/sample.
    pub fn freq(&self, k: usize) -> f64 {
        bin_frequency(k, self.grid())
    }

    pub fn magnitude(&self, k: usize) -> f64 {
        self.bins[k].norm()
    }

    pub fn phase(&self, k: usize) -> f64 {
        self.bins[k].arg()
    }

    /// Bins `0..=N/2`.
    pub fn half_grid(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.grid() / 2
    }

    pub fn max_magnitude(&self) -> f64 {
        self.bins.iter().map(|h| h.norm()).fold(0.0, f64::max)
    }
}

pub fn bin_frequency(k: usize, grid: usize) -> f64 {
    2.0 * PI * k as f64 / grid as f64
}

/// `e^{-j 2 pi m / N}` for `m = 0..N`.
fn twiddles(grid: usize) -> Vec<Complex64> {
    (0..grid)
        .map(|m| {
            let theta = -2.0 * PI * m as f64 / grid as f64;
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect()
}

/// Direct evaluation of the `N`-point sampled DTFT. Each bin is an
/// independent sequential sum, so the parallel map is bit-identical to a
/// serial loop.
pub fn sampled_dtft(h: &[f64], grid: usize) -> Result<FrequencyResponse, ResponseError> {
    if grid < 2 {
        return Err(ResponseError::GridTooSmall(grid));
    }
    if h.len() > grid {
        return Err(ResponseError::ResponseTooLong { len: h.len(), grid });
    }
    let tw = twiddles(grid);
    let bins = (0..grid)
        .into_par_iter()
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, &hn) in h.iter().enumerate() {
                acc += tw[(k * n) % grid] * hn;
            }
            acc
        })
        .collect();
    Ok(FrequencyResponse::new(bins, ResponseSource::Ideal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMethod {
    /// Sampled DTFT of the impulse response truncated to the grid size.
    #[default]
    ImpulseTruncation,
    /// `B(e^{jw}) / A(e^{jw})` evaluated at each bin.
    RationalEval,
}

/// Estimates `sum_{n >= N} |h[n]|` from the geometric decay over the last
/// tenth of the samples. `None` when the response is not decaying. A tail
/// already at the rounding level of the peak sample counts as decayed.
pub fn tail_estimate(h: &[f64]) -> Option<f64> {
    if h.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let peak = h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let window = (h.len() / 10).max(4).min(h.len());
    let half = window / 2;
    if half == 0 {
        return Some(0.0);
    }
    let end = h.len();
    let older: f64 = h[end - 2 * half..end - half].iter().map(|x| x.abs()).sum();
    let newer: f64 = h[end - half..].iter().map(|x| x.abs()).sum();
    if newer <= f64::EPSILON * peak {
        return Some(newer);
    }
    if older == 0.0 {
        return None;
    }
    let ratio = newer / older;
    if ratio >= 1.0 {
        return None;
    }
    Some(newer * ratio / (1.0 - ratio))
}

fn impulse_truncation(tf: &TransferFunction, grid: usize) -> Result<FrequencyResponse, ResponseError> {
    if grid < 2 {
        return Err(ResponseError::GridTooSmall(grid));
    }
    if tf.is_fir() {
        let a0 = tf.a()[0];
        let taps: Vec<f64> = tf.b().iter().map(|b| b / a0).collect();
        return sampled_dtft(&taps, grid);
    }
    let h = impulse_response(tf, grid);
    let insufficient = |tail_estimate: f64, suggested_grid: usize| ResponseError::TruncationInsufficient {
        grid,
        tail_estimate,
        suggested_grid,
    };
    let Some(tail) = tail_estimate(&h) else {
        return Err(insufficient(f64::INFINITY, grid.saturating_mul(4)));
    };
    let resp = sampled_dtft(&h, grid)?;
    let limit = TAIL_TOLERANCE * resp.max_magnitude();
    if tail >= limit {
        return Err(insufficient(tail, grid.saturating_mul(2)));
    }
    Ok(resp)
}

fn rational_eval(tf: &TransferFunction, grid: usize) -> Result<FrequencyResponse, ResponseError> {
    if grid < 2 {
        return Err(ResponseError::GridTooSmall(grid));
    }
    let tw = twiddles(grid);
    let poly =
        |c: &[f64], k: usize| -> Complex64 { c.iter().enumerate().map(|(i, &ci)| tw[(k * i) % grid] * ci).sum() };
    let bins = (0..grid)
        .into_par_iter()
        .map(|k| poly(tf.b(), k) / poly(tf.a(), k))
        .collect();
    Ok(FrequencyResponse::new(bins, ResponseSource::Ideal))
}

/// Frequency response of the designed (ideal) filter.
pub fn response_of(
    tf: &TransferFunction,
    grid: usize,
    method: ResponseMethod,
) -> Result<FrequencyResponse, ResponseError> {
    match method {
        ResponseMethod::ImpulseTruncation => impulse_truncation(tf, grid),
        ResponseMethod::RationalEval => rational_eval(tf, grid),
    }
}

/// Frequency response of the quantized coefficients.
pub fn response_of_quantized(
    qf: &QuantizedFilter,
    grid: usize,
    method: ResponseMethod,
) -> Result<FrequencyResponse, ResponseError> {
    response_of(&qf.to_transfer_function(), grid, method).map(|r| r.with_source(ResponseSource::Fixed))
}

/// Magnitude status: success, passband, stopband or cutoff failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MagnitudeStatus {
    S,
    FP,
    FS,
    FC,
}

impl MagnitudeStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            MagnitudeStatus::S => "S",
            MagnitudeStatus::FP => "FP",
            MagnitudeStatus::FS => "FS",
            MagnitudeStatus::FC => "FC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Passband,
    Stopband,
    Cutoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    /// Magnitude must not fall below the bound.
    Floor,
    /// Magnitude must not rise above the bound.
    Ceiling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeWitness {
    pub bin: usize,
    pub freq_rad: f64,
    pub magnitude: f64,
    pub magnitude_db: f64,
    pub bound: f64,
    pub bound_db: f64,
    pub region: Region,
    pub limit: Limit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeVerdict {
    pub status: MagnitudeStatus,
    pub witness: Option<MagnitudeWitness>,
}

impl MagnitudeVerdict {
    pub fn passed(&self) -> bool {
        self.status == MagnitudeStatus::S
    }
}

/// One clause of a magnitude assertion: bins in `[lo, hi]` (or the single
/// `bin`) must respect `bound` in the direction `limit`.
#[derive(Debug, Clone, Copy)]
struct Clause {
    region: Region,
    bins: ClauseBins,
    bound_db: f64,
    limit: Limit,
}

#[derive(Debug, Clone, Copy)]
enum ClauseBins {
    Interval(f64, f64),
    Nearest(usize),
}

impl Clause {
    fn covers(&self, k: usize, grid: usize) -> bool {
        match self.bins {
            ClauseBins::Interval(lo, hi) => {
                let w = bin_frequency(k, grid);
                lo <= w && w <= hi
            }
            ClauseBins::Nearest(bin) => bin == k,
        }
    }

    fn violated_by(&self, magnitude: f64) -> bool {
        let bound = db_to_lin(self.bound_db);
        match self.limit {
            Limit::Floor => magnitude < bound,
            Limit::Ceiling => magnitude > bound,
        }
    }

    fn status(&self) -> MagnitudeStatus {
        match self.region {
            Region::Passband => MagnitudeStatus::FP,
            Region::Stopband => MagnitudeStatus::FS,
            Region::Cutoff => MagnitudeStatus::FC,
        }
    }
}

/// Bin closest to `w` on the half grid.
pub fn nearest_bin(w: f64, grid: usize) -> usize {
    ((w * grid as f64 / (2.0 * PI)).round() as usize).min(grid / 2)
}

fn gain_for(
    edge: Option<Edge>,
    gain: Option<f64>,
    frequency: &'static str,
    gain_name: &'static str,
) -> Result<Option<(Edge, f64)>, ResponseError> {
    match (edge, gain) {
        (None, _) => Ok(None),
        (Some(_), None) => Err(ResponseError::MissingGain {
            frequency,
            gain: gain_name,
        }),
        (Some(e), Some(g)) => Ok(Some((e, g))),
    }
}

fn single(edge: Edge) -> f64 {
    match edge {
        Edge::Single(w) => w,
        Edge::Pair(lo, _) => lo,
    }
}

fn pair(edge: Edge) -> (f64, f64) {
    match edge {
        Edge::Single(w) => (w, w),
        Edge::Pair(lo, hi) => (lo, hi),
    }
}

fn clauses_for(spec: &FilterSpecBand, grid: usize) -> Result<Vec<Clause>, ResponseError> {
    spec.validate()?;
    let kind = spec.band_kind()?;
    let pass = gain_for(spec.passband, spec.ap_db, "passband frequency", "ap_db")?;
    let stop = gain_for(spec.stopband, spec.ar_db, "stopband frequency", "ar_db")?;
    let cut = gain_for(spec.cutoff, spec.ac_db, "cutoff frequency", "ac_db")?;
    let mut clauses = Vec::new();
    match kind {
        BandKind::Lowpass => {
            if let Some((e, g)) = pass {
                clauses.push(Clause {
                    region: Region::Passband,
                    bins: ClauseBins::Interval(0.0, single(e)),
                    bound_db: g,
                    limit: Limit::Floor,
                });
            }
            if let Some((e, g)) = cut {
                clauses.push(Clause {
                    region: Region::Cutoff,
                    bins: ClauseBins::Nearest(nearest_bin(single(e), grid)),
                    bound_db: g,
                    limit: Limit::Ceiling,
                });
            }
            if let Some((e, g)) = stop {
                clauses.push(Clause {
                    region: Region::Stopband,
                    bins: ClauseBins::Interval(single(e), PI),
                    bound_db: g,
                    limit: Limit::Ceiling,
                });
            }
        }
        BandKind::Highpass => {
            if let Some((e, g)) = stop {
                clauses.push(Clause {
                    region: Region::Stopband,
                    bins: ClauseBins::Interval(0.0, single(e)),
                    bound_db: g,
                    limit: Limit::Ceiling,
                });
            }
            if let Some((e, g)) = cut {
                clauses.push(Clause {
                    region: Region::Cutoff,
                    bins: ClauseBins::Nearest(nearest_bin(single(e), grid)),
                    bound_db: g,
                    limit: Limit::Floor,
                });
            }
            if let Some((e, g)) = pass {
                clauses.push(Clause {
                    region: Region::Passband,
                    bins: ClauseBins::Interval(single(e), PI),
                    bound_db: g,
                    limit: Limit::Floor,
                });
            }
        }
        BandKind::Bandpass => {
            if let Some((e, g)) = stop {
                let (r1, r2) = pair(e);
                clauses.push(Clause {
                    region: Region::Stopband,
                    bins: ClauseBins::Interval(0.0, r1),
                    bound_db: g,
                    limit: Limit::Ceiling,
                });
                clauses.push(Clause {
                    region: Region::Stopband,
                    bins: ClauseBins::Interval(r2, PI),
                    bound_db: g,
                    limit: Limit::Ceiling,
                });
            }
            if let Some((e, g)) = pass {
                let (p1, p2) = pair(e);
                clauses.push(Clause {
                    region: Region::Passband,
                    bins: ClauseBins::Interval(p1, p2),
                    bound_db: g,
                    limit: Limit::Floor,
                });
            }
        }
    }
    if clauses.is_empty() {
        return Err(ResponseError::MissingFrequency(match kind {
            BandKind::Bandpass => "passband or stopband pair",
            _ => "passband, cutoff or stopband frequency",
        }));
    }
    Ok(clauses)
}

fn evaluate(resp: &FrequencyResponse, clauses: &[Clause]) -> MagnitudeVerdict {
    let grid = resp.grid();
    // lowest-frequency violation wins; ties go to clause order
    for k in resp.half_grid() {
        let magnitude = resp.magnitude(k);
        for c in clauses {
            if c.covers(k, grid) && c.violated_by(magnitude) {
                return MagnitudeVerdict {
                    status: c.status(),
                    witness: Some(MagnitudeWitness {
                        bin: k,
                        freq_rad: resp.freq(k),
                        magnitude,
                        magnitude_db: lin_to_db(magnitude),
                        bound: db_to_lin(c.bound_db),
                        bound_db: c.bound_db,
                        region: c.region,
                        limit: c.limit,
                    }),
                };
            }
        }
    }
    MagnitudeVerdict {
        status: MagnitudeStatus::S,
        witness: None,
    }
}

fn expect_kind(spec: &FilterSpecBand, expected: BandKind) -> Result<(), ResponseError> {
    let actual = spec.band_kind()?;
    if actual != expected {
        return Err(ResponseError::WrongKind { expected, actual });
    }
    Ok(())
}

/// Lowpass assertion: passband floor on `[0, wp]`, cutoff ceiling at the bin
/// nearest `wc`, stopband ceiling on `[wr, pi]`.
pub fn check_magnitude_lp(resp: &FrequencyResponse, spec: &FilterSpecBand) -> Result<MagnitudeVerdict, ResponseError> {
    expect_kind(spec, BandKind::Lowpass)?;
    Ok(evaluate(resp, &clauses_for(spec, resp.grid())?))
}

/// Highpass assertion: stopband ceiling on `[0, wr]`, cutoff floor at the bin
/// nearest `wc`, passband floor on `[wp, pi]`.
pub fn check_magnitude_hp(resp: &FrequencyResponse, spec: &FilterSpecBand) -> Result<MagnitudeVerdict, ResponseError> {
    expect_kind(spec, BandKind::Highpass)?;
    Ok(evaluate(resp, &clauses_for(spec, resp.grid())?))
}

/// Bandpass assertion: stopband ceiling on `[0, wr1]` and `[wr2, pi]`,
/// passband floor on `[wp1, wp2]`. Cutoff pairs are not checked.
pub fn check_magnitude_bp(resp: &FrequencyResponse, spec: &FilterSpecBand) -> Result<MagnitudeVerdict, ResponseError> {
    expect_kind(spec, BandKind::Bandpass)?;
    Ok(evaluate(resp, &clauses_for(spec, resp.grid())?))
}

pub fn check_magnitude(resp: &FrequencyResponse, spec: &FilterSpecBand) -> Result<MagnitudeVerdict, ResponseError> {
    match spec.band_kind()? {
        BandKind::Lowpass => check_magnitude_lp(resp, spec),
        BandKind::Highpass => check_magnitude_hp(resp, spec),
        BandKind::Bandpass => check_magnitude_bp(resp, spec),
    }
}

/// Re-checks a verdict's witness directly against the response. Returns
/// `false` if the verdict is internally inconsistent.
pub fn confirm_magnitude_witness(resp: &FrequencyResponse, verdict: &MagnitudeVerdict) -> bool {
    match (&verdict.status, &verdict.witness) {
        (MagnitudeStatus::S, None) => true,
        (MagnitudeStatus::S, Some(_)) | (_, None) => false,
        (status, Some(w)) => {
            let region_matches = matches!(
                (status, w.region),
                (MagnitudeStatus::FP, Region::Passband)
                    | (MagnitudeStatus::FS, Region::Stopband)
                    | (MagnitudeStatus::FC, Region::Cutoff)
            );
            let m = resp.bins[w.bin].norm();
            let bound = 10f64.powf(w.bound_db / 20.0);
            let broken = match w.limit {
                Limit::Floor => m < bound,
                Limit::Ceiling => m > bound,
            };
            region_matches && broken && w.bin <= resp.grid() / 2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseStatus {
    S,
    F,
}

impl PhaseStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseStatus::S => "S",
            PhaseStatus::F => "F",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseWitness {
    pub bin: usize,
    pub freq_rad: f64,
    pub delta_rad: f64,
    pub threshold_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVerdict {
    pub status: PhaseStatus,
    /// Largest `|delta phi|` over the checked bins.
    pub max_abs_delta_rad: f64,
    pub witness: Option<PhaseWitness>,
}

impl PhaseVerdict {
    pub fn passed(&self) -> bool {
        self.status == PhaseStatus::S
    }
}

/// Phase difference `arg(fixed) - arg(ideal)` mapped into `(-pi, pi]`.
pub fn phase_delta(ideal: Complex64, fixed: Complex64) -> f64 {
    let d = (fixed * ideal.conj()).arg();
    if d <= -PI {
        PI
    } else {
        d
    }
}

/// Compares phases bin by bin. `bands` (rad/sample, closed intervals)
/// restrict the comparison; an empty slice means the whole half grid.
pub fn check_phase(
    ideal: &FrequencyResponse,
    fixed: &FrequencyResponse,
    threshold: f64,
    bands: &[(f64, f64)],
) -> Result<PhaseVerdict, ResponseError> {
    if ideal.grid() != fixed.grid() {
        return Err(ResponseError::GridMismatch(ideal.grid(), fixed.grid()));
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(ResponseError::InvalidThreshold(threshold));
    }
    let grid = ideal.grid();
    let in_band = |k: usize| {
        let w = bin_frequency(k, grid);
        bands.is_empty() || bands.iter().any(|&(lo, hi)| lo <= w && w <= hi)
    };
    let mut max_abs = 0.0f64;
    let mut witness = None;
    for k in ideal.half_grid().filter(|&k| in_band(k)) {
        let delta = phase_delta(ideal.bin(k), fixed.bin(k));
        max_abs = max_abs.max(delta.abs());
        if witness.is_none() && delta.abs() > threshold {
            witness = Some(PhaseWitness {
                bin: k,
                freq_rad: ideal.freq(k),
                delta_rad: delta,
                threshold_rad: threshold,
            });
        }
    }
    Ok(PhaseVerdict {
        status: if witness.is_some() {
            PhaseStatus::F
        } else {
            PhaseStatus::S
        },
        max_abs_delta_rad: max_abs,
        witness,
    })
}

pub fn confirm_phase_witness(ideal: &FrequencyResponse, fixed: &FrequencyResponse, verdict: &PhaseVerdict) -> bool {
    match (&verdict.status, &verdict.witness) {
        (PhaseStatus::S, None) => true,
        (PhaseStatus::F, Some(w)) => {
            let a = ideal.bins[w.bin];
            let b = fixed.bins[w.bin];
            let mut d = b.arg() - a.arg();
            while d > PI {
                d -= 2.0 * PI;
            }
            while d <= -PI {
                d += 2.0 * PI;
            }
            (d.abs() - w.delta_rad.abs()).abs() < 1e-9 && d.abs() > w.threshold_rad
        }
        _ => false,
    }
}

/// The passband region(s) phase is compared over by default. Falls back to
/// the cutoff edge when no passband is given; empty means the whole grid.
pub fn passband_ranges(spec: &FilterSpecBand) -> Vec<(f64, f64)> {
    let edge = spec.passband.or(spec.cutoff);
    match (spec.kind, edge) {
        (Some(BandKind::Lowpass), Some(e)) => vec![(0.0, single(e))],
        (Some(BandKind::Highpass), Some(e)) => vec![(single(e), PI)],
        (Some(BandKind::Bandpass), Some(e)) => vec![pair(e)],
        _ => Vec::new(),
    }
}

pub const CSV_HEADER: &str = "k,freq_hz,mag_ideal_db,mag_fixed_db,phase_ideal_rad,phase_fixed_rad";

/// Floor applied to magnitudes before taking dB so exact zeros stay finite.
const CSV_DB_FLOOR: f64 = -400.0;

fn csv_db(m: f64) -> f64 {
    let db = lin_to_db(m);
    if db.is_nan() || db < CSV_DB_FLOOR {
        CSV_DB_FLOOR
    } else {
        db
    }
}

/// Writes the half-grid comparison of two responses, one row per bin.
pub fn write_response_csv<W: Write>(
    mut out: W,
    ideal: &FrequencyResponse,
    fixed: &FrequencyResponse,
    fs_hz: f64,
) -> io::Result<()> {
    if ideal.grid() != fixed.grid() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            ResponseError::GridMismatch(ideal.grid(), fixed.grid()),
        ));
    }
    writeln!(out, "{CSV_HEADER}")?;
    let grid = ideal.grid();
    for k in ideal.half_grid() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            k,
            k as f64 * fs_hz / grid as f64,
            csv_db(ideal.magnitude(k)),
            csv_db(fixed.magnitude(k)),
            ideal.phase(k),
            fixed.phase(k),
        )?;
    }
    Ok(())
}

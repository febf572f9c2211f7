//! Bounded overflow verification on the fixed-point direct-form I datapath.
//!
//! At step `n` the datapath forms the products `b_i x[n-i]` and
//! `a_j y[n-j]` exactly, rounds each to the format and range-checks it, sums
//! the exact products in a wide accumulator and divides by `a_0` to produce
//! `y[n]`, which is range-checked as the stored output register. Initial
//! state is all zero.
//!
//! A search explores input sequences of length up to the horizon `k` and
//! returns the violation at the smallest step, ties broken by the
//! lexicographically smallest input sequence (raw values, ascending).

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filtermodel::{impulse_response_quantized, QuantizedFilter};
use crate::fixedpoint::{
    div_round, rational_string, saturate_raw, wrap_raw, Bound, FixedFormat, FixedValue, OverflowMode, RoundingMode,
};

/// Largest number of input sequences the exhaustive strategy will visit.
pub const EXHAUSTIVE_BUDGET: u128 = 1 << 24;

pub const DEFAULT_SEED: u64 = 1729;
pub const DEFAULT_RESTARTS: usize = 64;

const MAX_CLIMB_PASSES: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OverflowError {
    #[error("input {index} has format {found}, filter uses {expected}")]
    FormatMismatch {
        index: usize,
        expected: FixedFormat,
        found: FixedFormat,
    },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("strategy {strategy} cannot be used here: {reason}")]
    StrategyInapplicable { strategy: SearchStrategy, reason: String },
    #[error(
        "exhaustive search over {alphabet} input values and horizon {horizon} exceeds the budget of {budget} sequences"
    )]
    BudgetExceeded {
        alphabet: u128,
        horizon: usize,
        budget: u128,
    },
    #[error("input range [{lo}, {hi}] is empty or outside format {format}")]
    InvalidInputRange { lo: i64, hi: i64, format: FixedFormat },
    #[error("intermediate value at step {step} exceeds the 128-bit accumulator")]
    WideOverflow { step: usize },
}

/// Where in the datapath a value was range-checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    /// Product `b_i x[n-i]`.
    Feedforward(usize),
    /// Product `a_j y[n-j]`, `j >= 1`.
    Feedback(usize),
    /// The stored output `y[n]`.
    Output,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Feedforward(i) => write!(f, "product b[{i}]*x[n-{i}]"),
            Site::Feedback(j) => write!(f, "product a[{j}]*y[n-{j}]"),
            Site::Output => f.write_str("output y[n]"),
        }
    }
}

/// Which values are range-checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckSites {
    /// Every rounded product and the output register.
    #[default]
    ProductsAndOutput,
    /// Rounded products only; the output register is treated as wide.
    ProductsOnly,
}

impl FromStr for CheckSites {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "products_and_output" | "all" => Ok(CheckSites::ProductsAndOutput),
            "products_only" | "products" => Ok(CheckSites::ProductsOnly),
            other => Err(format!("unknown check sites {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Every input sequence up to the horizon. Complete.
    Exhaustive,
    /// Sign-matched extreme inputs. Complete for FIR filters only.
    #[serde(alias = "analytic")]
    AnalyticFir,
    /// Seeded hill climbing with restarts. Sound but incomplete.
    Directed,
}

impl fmt::Display for SearchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchStrategy::Exhaustive => "exhaustive",
            SearchStrategy::AnalyticFir => "analytic_fir",
            SearchStrategy::Directed => "directed",
        })
    }
}

impl FromStr for SearchStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "exhaustive" => Ok(SearchStrategy::Exhaustive),
            "analytic" | "analytic_fir" => Ok(SearchStrategy::AnalyticFir),
            "directed" => Ok(SearchStrategy::Directed),
            other => Err(format!("unknown search strategy {other:?}")),
        }
    }
}

/// Rounds `p * 2^-s` to an integer. Agrees with `div_round(p, 2^s, mode)`.
#[inline]
pub fn round_shift(p: i128, s: u32, mode: RoundingMode) -> i128 {
    if s == 0 {
        return p;
    }
    match mode {
        RoundingMode::Floor => p >> s,
        RoundingMode::Truncate => {
            if p >= 0 {
                p >> s
            } else {
                -((-p) >> s)
            }
        }
        RoundingMode::Nearest => {
            let q = p >> s;
            let r = p - (q << s);
            let half = 1i128 << (s - 1);
            if r > half || (r == half && q & 1 == 1) {
                q + 1
            } else {
                q
            }
        }
    }
}

/// A range violation inside one datapath step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub site: Site,
    /// Rounded value in units of `2^-n`, before any range handling.
    pub wide_raw: i128,
    pub bound: Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepFault {
    Overflow(Violation),
    Wide,
}

/// One product term of a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermRecord {
    pub site: Site,
    /// Exact product in units of `2^-2n`.
    pub exact: i128,
    /// Product rounded to units of `2^-n`.
    pub rounded: i128,
    /// Value after range handling, in units of `2^-n`.
    pub stored: i128,
    pub overflow: Option<Bound>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub input: i64,
    pub terms: Vec<TermRecord>,
    /// Exact sum of the products in units of `2^-2n`.
    pub accumulator: i128,
    /// Output after division by `a_0`, before range handling.
    pub output_wide: i128,
    pub output: i128,
    pub output_overflow: Option<Bound>,
}

trait Observer {
    #[inline]
    fn term(&mut self, _t: TermRecord) {}
    #[inline]
    fn output(&mut self, _accumulator: i128, _wide: i128, _stored: i128, _overflow: Option<Bound>) {}
}

struct Silent;
impl Observer for Silent {}

#[derive(Default)]
struct Recorder {
    terms: Vec<TermRecord>,
    output: Option<(i128, i128, i128, Option<Bound>)>,
}

impl Observer for Recorder {
    fn term(&mut self, t: TermRecord) {
        self.terms.push(t);
    }

    fn output(&mut self, accumulator: i128, wide: i128, stored: i128, overflow: Option<Bound>) {
        self.output = Some((accumulator, wide, stored, overflow));
    }
}

/// Tracks how close a run came to either bound: the largest of
/// `v - raw_max` and `raw_min - v` over every checked value.
struct Excess {
    lo: i128,
    hi: i128,
    sites: CheckSites,
    max: i128,
}

impl Excess {
    fn see(&mut self, v: i128) {
        let e = (v - self.hi).max(self.lo - v);
        if e > self.max {
            self.max = e;
        }
    }
}

impl Observer for Excess {
    fn term(&mut self, t: TermRecord) {
        self.see(t.rounded);
    }

    fn output(&mut self, _accumulator: i128, wide: i128, _stored: i128, _overflow: Option<Bound>) {
        if self.sites == CheckSites::ProductsAndOutput {
            self.see(wide);
        }
    }
}

/// The quantized filter as integer arithmetic.
#[derive(Debug, Clone)]
struct Datapath {
    format: FixedFormat,
    b: Vec<i128>,
    feedback: Vec<i128>,
    a0: i128,
    a0_shift: Option<u32>,
    frac: u32,
    rounding: RoundingMode,
    lo: i128,
    hi: i128,
    sites: CheckSites,
}

impl Datapath {
    fn new(qf: &QuantizedFilter, sites: CheckSites) -> Self {
        let format = qf.format();
        let a0 = qf.a()[0].raw() as i128;
        let a0_shift = (a0 > 0 && (a0 as u128).is_power_of_two()).then(|| a0.trailing_zeros());
        // trailing zero coefficients of the denominator never contribute
        let mut feedback: Vec<i128> = qf.a()[1..].iter().map(|c| c.raw() as i128).collect();
        while feedback.last() == Some(&0) {
            feedback.pop();
        }
        Datapath {
            format,
            b: qf.b().iter().map(|c| c.raw() as i128).collect(),
            feedback,
            a0,
            a0_shift,
            frac: format.frac_bits(),
            rounding: qf.rounding(),
            lo: format.raw_min() as i128,
            hi: format.raw_max() as i128,
            sites,
        }
    }

    fn state_len(&self) -> usize {
        self.b.len() - 1 + self.feedback.len()
    }

    #[inline]
    fn bound_of(&self, v: i128) -> Option<Bound> {
        if v > self.hi {
            Some(Bound::Max)
        } else if v < self.lo {
            Some(Bound::Min)
        } else {
            None
        }
    }

    fn handle(&self, v: i128, mode: OverflowMode) -> i128 {
        match mode {
            OverflowMode::Saturate => saturate_raw(v, self.format) as i128,
            OverflowMode::Wraparound => wrap_raw(v, self.format) as i128,
            OverflowMode::Detect => v,
        }
    }

    /// Contribution of one product to the accumulator, in units of `2^-2n`.
    #[inline]
    fn term<O: Observer>(
        &self,
        site: Site,
        coeff: i128,
        operand: i128,
        mode: OverflowMode,
        obs: &mut O,
    ) -> Result<i128, StepFault> {
        let exact = coeff.checked_mul(operand).ok_or(StepFault::Wide)?;
        let rounded = round_shift(exact, self.frac, self.rounding);
        let overflow = self.bound_of(rounded);
        let (contribution, stored) = match overflow {
            None => (exact, rounded),
            Some(bound) => {
                if mode == OverflowMode::Detect {
                    obs.term(TermRecord {
                        site,
                        exact,
                        rounded,
                        stored: rounded,
                        overflow,
                    });
                    return Err(StepFault::Overflow(Violation {
                        site,
                        wide_raw: rounded,
                        bound,
                    }));
                }
                let stored = self.handle(rounded, mode);
                (stored << self.frac, stored)
            }
        };
        obs.term(TermRecord {
            site,
            exact,
            rounded,
            stored,
            overflow,
        });
        Ok(contribution)
    }

    /// Advances one step. `state` holds `x[n-1..n-M]` then `y[n-1..n-N]`.
    #[inline]
    fn step<O: Observer>(
        &self,
        state: &mut [i128],
        x: i128,
        mode: OverflowMode,
        obs: &mut O,
    ) -> Result<i128, StepFault> {
        let m = self.b.len() - 1;
        let mut acc: i128 = 0;
        for (i, &bi) in self.b.iter().enumerate() {
            let xi = if i == 0 { x } else { state[i - 1] };
            let t = self.term(Site::Feedforward(i), bi, xi, mode, obs)?;
            acc = acc.checked_add(t).ok_or(StepFault::Wide)?;
        }
        for (j, &aj) in self.feedback.iter().enumerate() {
            let t = self.term(Site::Feedback(j + 1), aj, state[m + j], mode, obs)?;
            acc = acc.checked_sub(t).ok_or(StepFault::Wide)?;
        }
        let wide = match self.a0_shift {
            Some(s) => round_shift(acc, s, self.rounding),
            None => div_round(acc, self.a0, self.rounding),
        };
        let (stored, overflow) = match self.sites {
            CheckSites::ProductsOnly => (wide, None),
            CheckSites::ProductsAndOutput => match self.bound_of(wide) {
                None => (wide, None),
                Some(bound) => {
                    if mode == OverflowMode::Detect {
                        obs.output(acc, wide, wide, Some(bound));
                        return Err(StepFault::Overflow(Violation {
                            site: Site::Output,
                            wide_raw: wide,
                            bound,
                        }));
                    }
                    (self.handle(wide, mode), Some(bound))
                }
            },
        };
        obs.output(acc, wide, stored, overflow);
        if m > 0 {
            state.copy_within(0..m - 1, 1);
            state[0] = x;
        }
        let n = self.feedback.len();
        if n > 0 {
            state.copy_within(m..m + n - 1, m + 1);
            state[m] = stored;
        }
        Ok(stored)
    }

    /// Runs `inputs` in detect mode from the zero state, stopping at the
    /// first violation.
    fn first_violation(&self, inputs: &[i64]) -> Result<Option<(usize, Violation)>, OverflowError> {
        let mut state = vec![0i128; self.state_len()];
        for (n, &x) in inputs.iter().enumerate() {
            match self.step(&mut state, x as i128, OverflowMode::Detect, &mut Silent) {
                Ok(_) => {}
                Err(StepFault::Overflow(v)) => return Ok(Some((n, v))),
                Err(StepFault::Wide) => return Err(OverflowError::WideOverflow { step: n }),
            }
        }
        Ok(None)
    }

    fn counterexample(&self, inputs: &[i64], step: usize, v: Violation) -> OverflowCounterexample {
        OverflowCounterexample {
            inputs: inputs[..=step].to_vec(),
            format: self.format,
            step,
            site: v.site,
            wide_raw: v.wide_raw,
            bound: v.bound,
            sites: self.sites,
        }
    }
}

/// A complete run over the given inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundedRun {
    pub format: FixedFormat,
    pub mode: OverflowMode,
    pub inputs: Vec<i64>,
    pub steps: Vec<StepRecord>,
}

impl BoundedRun {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn outputs(&self) -> Vec<i128> {
        self.steps.iter().map(|s| s.output).collect()
    }

    /// Whether any value was saturated or wrapped.
    pub fn any_overflow(&self) -> bool {
        self.steps
            .iter()
            .any(|s| s.output_overflow.is_some() || s.terms.iter().any(|t| t.overflow.is_some()))
    }
}

/// An input sequence that drives the datapath out of range, with the
/// violating step and site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverflowCounterexample {
    /// Raw inputs `x[0..=step]` in time order.
    pub inputs: Vec<i64>,
    pub format: FixedFormat,
    pub step: usize,
    pub site: Site,
    /// The out-of-range value in units of `2^-n`.
    pub wide_raw: i128,
    pub bound: Bound,
    pub sites: CheckSites,
}

impl OverflowCounterexample {
    pub fn input_values(&self) -> Vec<FixedValue> {
        self.inputs
            .iter()
            .map(|&r| FixedValue::from_raw(r, self.format).expect("counterexample inputs are in range"))
            .collect()
    }

    pub fn input_rationals(&self) -> Vec<String> {
        self.inputs
            .iter()
            .map(|&r| rational_string(r as i128, self.format.frac_bits()))
            .collect()
    }

    pub fn wide_rational(&self) -> String {
        rational_string(self.wide_raw, self.format.frac_bits())
    }

    /// Replays the inputs in detect mode and checks that exactly this
    /// violation recurs.
    pub fn replays_on(&self, qf: &QuantizedFilter) -> bool {
        let values = self.input_values();
        match simulate_fixed_with(qf, &values, OverflowMode::Detect, self.sites) {
            Ok(SimulationOutcome::Overflow(c)) => *c == *self,
            _ => false,
        }
    }

    fn rank(&self) -> (usize, &[i64]) {
        (self.step, &self.inputs)
    }
}

impl fmt::Display for OverflowCounterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, limit) = match self.bound {
            Bound::Max => ("v_max", self.format.raw_max()),
            Bound::Min => ("v_min", self.format.raw_min()),
        };
        write!(
            f,
            "step {}: {} = {} exceeds {name} = {} with inputs [{}]",
            self.step,
            self.site,
            self.wide_rational(),
            rational_string(limit as i128, self.format.frac_bits()),
            self.input_rationals().join(", ")
        )
    }
}

fn min_counterexample(cands: impl IntoIterator<Item = OverflowCounterexample>) -> Option<OverflowCounterexample> {
    cands.into_iter().min_by(|a, b| a.rank().cmp(&b.rank()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimulationOutcome {
    Completed(BoundedRun),
    Overflow(Box<OverflowCounterexample>),
}

/// Runs `inputs` through the datapath, checking products and output.
pub fn simulate_fixed(
    qf: &QuantizedFilter,
    inputs: &[FixedValue],
    mode: OverflowMode,
) -> Result<SimulationOutcome, OverflowError> {
    simulate_fixed_with(qf, inputs, mode, CheckSites::ProductsAndOutput)
}

/// Runs `inputs` through the datapath from the zero state. In detect mode
/// the first out-of-range value ends the run with a counterexample; in
/// saturate and wraparound modes every value is brought into range and the
/// run completes.
pub fn simulate_fixed_with(
    qf: &QuantizedFilter,
    inputs: &[FixedValue],
    mode: OverflowMode,
    sites: CheckSites,
) -> Result<SimulationOutcome, OverflowError> {
    let format = qf.format();
    if let Some((index, x)) = inputs.iter().enumerate().find(|(_, x)| x.format() != format) {
        return Err(OverflowError::FormatMismatch {
            index,
            expected: format,
            found: x.format(),
        });
    }
    let raw: Vec<i64> = inputs.iter().map(FixedValue::raw).collect();
    let dp = Datapath::new(qf, sites);
    let mut state = vec![0i128; dp.state_len()];
    let mut steps = Vec::with_capacity(raw.len());
    for (n, &x) in raw.iter().enumerate() {
        let mut rec = Recorder::default();
        match dp.step(&mut state, x as i128, mode, &mut rec) {
            Ok(_) => {
                let (accumulator, output_wide, output, output_overflow) =
                    rec.output.expect("a completed step records its output");
                steps.push(StepRecord {
                    step: n,
                    input: x,
                    terms: rec.terms,
                    accumulator,
                    output_wide,
                    output,
                    output_overflow,
                });
            }
            Err(StepFault::Overflow(v)) => {
                return Ok(SimulationOutcome::Overflow(Box::new(dp.counterexample(&raw, n, v))))
            }
            Err(StepFault::Wide) => return Err(OverflowError::WideOverflow { step: n }),
        }
    }
    Ok(SimulationOutcome::Completed(BoundedRun {
        format,
        mode,
        inputs: raw,
        steps,
    }))
}

/// Sign-matched extreme inputs for an FIR filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorstCaseFir {
    pub format: FixedFormat,
    /// `x[n-i]` maximizing the output, indexed by tap `i`.
    pub peak_inputs: Vec<i64>,
    /// Largest reachable output, in units of `2^-n`.
    pub peak: i128,
    /// `x[n-i]` minimizing the output.
    pub trough_inputs: Vec<i64>,
    pub trough: i128,
    /// Tap whose product can leave the range on its own, if any.
    pub product_overflow: Option<usize>,
}

impl WorstCaseFir {
    /// The peak inputs in time order, ready to replay.
    pub fn sequence(&self) -> Vec<i64> {
        self.peak_inputs.iter().rev().copied().collect()
    }

    pub fn trough_sequence(&self) -> Vec<i64> {
        self.trough_inputs.iter().rev().copied().collect()
    }

    pub fn peak_value(&self) -> f64 {
        self.peak as f64 * self.format.lsb()
    }

    pub fn trough_value(&self) -> f64 {
        self.trough as f64 * self.format.lsb()
    }

    pub fn output_overflows(&self) -> bool {
        let f = self.format;
        !f.contains_raw(self.peak) || !f.contains_raw(self.trough)
    }

    pub fn overflows(&self) -> bool {
        self.output_overflows() || self.product_overflow.is_some()
    }
}

/// Extreme outputs of an FIR datapath whose window covers taps
/// `0..width`, over inputs in `[lo, hi]`.
fn fir_extremes(dp: &Datapath, width: usize, lo: i128, hi: i128) -> ((Vec<i64>, i128), (Vec<i64>, i128)) {
    let mut up = (Vec::with_capacity(width), 0i128);
    let mut down = (Vec::with_capacity(width), 0i128);
    for &b in &dp.b[..width] {
        let (big, small) = if b >= 0 { (hi, lo) } else { (lo, hi) };
        up.0.push(big as i64);
        up.1 += b * big;
        down.0.push(small as i64);
        down.1 += b * small;
    }
    let out = |acc: i128| match dp.a0_shift {
        Some(s) => round_shift(acc, s, dp.rounding),
        None => div_round(acc, dp.a0, dp.rounding),
    };
    let (p, t) = (out(up.1), out(down.1));
    // a negative a_0 swaps which accumulator extreme gives which output extreme
    if p >= t {
        ((up.0, p), (down.0, t))
    } else {
        ((down.0, t), (up.0, p))
    }
}

/// Worst-case inputs of an FIR filter over the full input range.
pub fn worst_case_fir(qf: &QuantizedFilter) -> Result<WorstCaseFir, OverflowError> {
    if !qf.is_fir() {
        return Err(OverflowError::StrategyInapplicable {
            strategy: SearchStrategy::AnalyticFir,
            reason: "filter has feedback coefficients".into(),
        });
    }
    let dp = Datapath::new(qf, CheckSites::ProductsAndOutput);
    let ((peak_inputs, peak), (trough_inputs, trough)) = fir_extremes(&dp, dp.b.len(), dp.lo, dp.hi);
    let product_overflow = (0..dp.b.len()).find(|&i| {
        [dp.lo, dp.hi]
            .iter()
            .any(|&x| dp.bound_of(round_shift(dp.b[i] * x, dp.frac, dp.rounding)).is_some())
    });
    Ok(WorstCaseFir {
        format: dp.format,
        peak_inputs,
        peak,
        trough_inputs,
        trough,
        product_overflow,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub horizon: usize,
    pub strategy: SearchStrategy,
    /// Raw input bounds; `None` means the whole format.
    pub input_range: Option<(i64, i64)>,
    pub sites: CheckSites,
    pub seed: u64,
    pub restarts: usize,
}

impl SearchConfig {
    pub fn new(horizon: usize, strategy: SearchStrategy) -> Self {
        SearchConfig {
            horizon,
            strategy,
            input_range: None,
            sites: CheckSites::ProductsAndOutput,
            seed: DEFAULT_SEED,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowStatus {
    Violation,
    /// No violation exists within the horizon.
    NoViolation,
    /// An incomplete search found nothing.
    NoneFound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchVerdict {
    pub status: OverflowStatus,
    pub strategy: SearchStrategy,
    pub horizon: usize,
    /// Whether "no violation" is a proof for this horizon.
    pub complete: bool,
    pub counterexample: Option<OverflowCounterexample>,
    /// Candidate sequences or simulations examined.
    pub explored: u64,
}

impl SearchVerdict {
    pub fn found(&self) -> bool {
        self.status == OverflowStatus::Violation
    }
}

fn input_bounds(dp: &Datapath, range: Option<(i64, i64)>) -> Result<(i64, i64), OverflowError> {
    let (lo, hi) = range.unwrap_or((dp.lo as i64, dp.hi as i64));
    if lo > hi || !dp.format.contains_raw(lo as i128) || !dp.format.contains_raw(hi as i128) {
        return Err(OverflowError::InvalidInputRange {
            lo,
            hi,
            format: dp.format,
        });
    }
    Ok((lo, hi))
}

/// Searches for an input sequence of length at most `cfg.horizon` that
/// overflows the datapath.
pub fn search_overflow(qf: &QuantizedFilter, cfg: &SearchConfig) -> Result<SearchVerdict, OverflowError> {
    if cfg.horizon == 0 {
        return Err(OverflowError::EmptyHorizon);
    }
    let dp = Datapath::new(qf, cfg.sites);
    let range = input_bounds(&dp, cfg.input_range)?;
    match cfg.strategy {
        SearchStrategy::Exhaustive => exhaustive(&dp, cfg.horizon, range),
        SearchStrategy::AnalyticFir => {
            if !qf.is_fir() {
                return Err(OverflowError::StrategyInapplicable {
                    strategy: SearchStrategy::AnalyticFir,
                    reason: "filter has feedback coefficients".into(),
                });
            }
            analytic_fir(&dp, cfg.horizon, range)
        }
        SearchStrategy::Directed => {
            let h = impulse_response_quantized(qf, cfg.horizon);
            directed(&dp, cfg, range, &h)
        }
    }
}

fn verdict(
    strategy: SearchStrategy,
    horizon: usize,
    complete: bool,
    counterexample: Option<OverflowCounterexample>,
    explored: u64,
) -> SearchVerdict {
    let status = match (&counterexample, complete) {
        (Some(_), _) => OverflowStatus::Violation,
        (None, true) => OverflowStatus::NoViolation,
        (None, false) => OverflowStatus::NoneFound,
    };
    SearchVerdict {
        status,
        strategy,
        horizon,
        complete,
        counterexample,
        explored,
    }
}

/// Iterative deepening: depth `d` enumerates all sequences of length `d` in
/// lexicographic order, looking for a violation at step `d - 1`. The first
/// hit is the minimal step, then the lexicographically first inputs.
fn exhaustive(dp: &Datapath, horizon: usize, (lo, hi): (i64, i64)) -> Result<SearchVerdict, OverflowError> {
    let alphabet = (hi - lo + 1) as u128;
    let within_budget = u32::try_from(horizon)
        .ok()
        .and_then(|k| alphabet.checked_pow(k))
        .is_some_and(|n| n <= EXHAUSTIVE_BUDGET);
    if !within_budget {
        return Err(OverflowError::BudgetExceeded {
            alphabet,
            horizon,
            budget: EXHAUSTIVE_BUDGET,
        });
    }
    let mut explored: u64 = 0;
    for depth in 1..=horizon {
        explored += alphabet.pow(depth as u32) as u64;
        let mut states = vec![vec![0i128; dp.state_len()]; depth + 1];
        let mut inputs = vec![lo; depth];
        let mut seen = vec![HashSet::new(); depth];
        let hit = (lo..=hi).find_map(|first| {
            inputs[0] = first;
            dfs(dp, &mut states, &mut inputs, &mut seen, 0, lo, hi)
        });
        match hit {
            Some(Ok((inputs, step, v))) => {
                return Ok(verdict(
                    SearchStrategy::Exhaustive,
                    horizon,
                    true,
                    Some(dp.counterexample(&inputs, step, v)),
                    explored,
                ))
            }
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    Ok(verdict(SearchStrategy::Exhaustive, horizon, true, None, explored))
}

type Hit = Result<(Vec<i64>, usize, Violation), OverflowError>;

/// Applies `inputs[pos]` and recurses over every value of the next input.
/// `inputs[0]` is set by the caller. `seen` is shared by all prefixes of one depth.
///
/// Inputs are visited in lexicographic order, so a state already seen at the
/// same step was reached by a smaller prefix whose subtree held no
/// violation; it is not expanded again. Leaves are not recorded.
fn dfs(
    dp: &Datapath,
    states: &mut [Vec<i128>],
    inputs: &mut [i64],
    seen: &mut [HashSet<Vec<i128>>],
    pos: usize,
    lo: i64,
    hi: i64,
) -> Option<Hit> {
    let depth = inputs.len();
    let (done, rest) = states.split_at_mut(pos + 1);
    let next = &mut rest[0];
    next.copy_from_slice(&done[pos]);
    match dp.step(next, inputs[pos] as i128, OverflowMode::Detect, &mut Silent) {
        Ok(_) => {}
        Err(StepFault::Overflow(v)) => return Some(Ok((inputs.to_vec(), pos, v))),
        Err(StepFault::Wide) => return Some(Err(OverflowError::WideOverflow { step: pos })),
    }
    if pos + 1 == depth || !seen[pos].insert(next.clone()) {
        return None;
    }
    for x in lo..=hi {
        inputs[pos + 1] = x;
        if let Some(hit) = dfs(dp, states, inputs, seen, pos + 1, lo, hi) {
            return Some(hit);
        }
    }
    None
}

/// For an FIR filter the set of reachable values at step `n` depends only on
/// the window of taps `0..=min(n, L-1)`, so it suffices to test the extreme
/// inputs of each window in turn.
fn analytic_fir(dp: &Datapath, horizon: usize, (lo, hi): (i64, i64)) -> Result<SearchVerdict, OverflowError> {
    let taps = dp.b.len();
    let (lo_w, hi_w) = (lo as i128, hi as i128);
    let filler = if lo <= 0 && 0 <= hi { 0 } else { lo };
    let mut explored = 0u64;
    for n in 0..horizon.min(taps) {
        let width = n + 1;
        // aligned candidates: entry i is x[n-i]
        let mut candidates: Vec<Vec<i64>> = Vec::new();
        for i in 0..width {
            for x in [lo_w, hi_w] {
                explored += 1;
                if dp.bound_of(round_shift(dp.b[i] * x, dp.frac, dp.rounding)).is_some() {
                    let mut aligned = vec![filler; width];
                    aligned[i] = x as i64;
                    candidates.push(aligned);
                }
            }
        }
        if dp.sites == CheckSites::ProductsAndOutput {
            let ((up, peak), (down, trough)) = fir_extremes(dp, width, lo_w, hi_w);
            explored += 2;
            if dp.bound_of(peak).is_some() {
                candidates.push(up);
            }
            if dp.bound_of(trough).is_some() {
                candidates.push(down);
            }
        }
        let mut found = Vec::new();
        for aligned in candidates {
            let seq: Vec<i64> = aligned.iter().rev().copied().collect();
            if let Some((step, v)) = dp.first_violation(&seq)? {
                found.push(dp.counterexample(&seq, step, v));
            }
        }
        if let Some(c) = min_counterexample(found) {
            return Ok(verdict(SearchStrategy::AnalyticFir, horizon, true, Some(c), explored));
        }
    }
    Ok(verdict(SearchStrategy::AnalyticFir, horizon, true, None, explored))
}

/// Score of a sequence: the violation if there is one, else how close the
/// run came to a bound.
enum Probe {
    Hit(usize, Violation),
    Miss(i128),
}

fn probe(dp: &Datapath, inputs: &[i64]) -> Result<Probe, OverflowError> {
    let mut obs = Excess {
        lo: dp.lo,
        hi: dp.hi,
        sites: dp.sites,
        max: i128::MIN,
    };
    let mut state = vec![0i128; dp.state_len()];
    for (n, &x) in inputs.iter().enumerate() {
        match dp.step(&mut state, x as i128, OverflowMode::Detect, &mut obs) {
            Ok(_) => {}
            Err(StepFault::Overflow(v)) => return Ok(Probe::Hit(n, v)),
            Err(StepFault::Wide) => return Err(OverflowError::WideOverflow { step: n }),
        }
    }
    Ok(Probe::Miss(obs.max))
}

/// Hill climbing on the excess score. Restart 0 starts from inputs
/// sign-matched to the time-reversed impulse response, restart 1 from its
/// mirror, the rest from random points. Every restart runs, and the minimal
/// hit over all restarts is reported, so the result does not depend on
/// scheduling.
fn directed(
    dp: &Datapath,
    cfg: &SearchConfig,
    (lo, hi): (i64, i64),
    h: &[f64],
) -> Result<SearchVerdict, OverflowError> {
    let k = cfg.horizon;
    let restarts = cfg.restarts.max(1);
    let results: Vec<Result<(Option<OverflowCounterexample>, u64), OverflowError>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            let mut x: Vec<i64> = match r {
                0 | 1 => (0..k)
                    .map(|t| {
                        let positive = (h[k - 1 - t] >= 0.0) == (r == 0);
                        if positive {
                            hi
                        } else {
                            lo
                        }
                    })
                    .collect(),
                _ => (0..k)
                    .map(|_| match rng.gen_range(0..4) {
                        0 => lo,
                        1 => hi,
                        _ => rng.gen_range(lo..=hi),
                    })
                    .collect(),
            };
            climb(dp, &mut x, lo, hi, &mut rng)
        })
        .collect();
    let mut explored = 0;
    let mut found = Vec::new();
    for r in results {
        let (c, n) = r?;
        explored += n;
        found.extend(c);
    }
    let best = min_counterexample(found);
    Ok(verdict(SearchStrategy::Directed, k, false, best, explored))
}

fn climb(
    dp: &Datapath,
    x: &mut [i64],
    lo: i64,
    hi: i64,
    rng: &mut ChaCha8Rng,
) -> Result<(Option<OverflowCounterexample>, u64), OverflowError> {
    let mut evaluations = 1u64;
    let hit = |x: &[i64], step: usize, v: Violation| Some(dp.counterexample(x, step, v));
    let mut best = match probe(dp, x)? {
        Probe::Hit(step, v) => return Ok((hit(x, step, v), evaluations)),
        Probe::Miss(score) => score,
    };
    for _ in 0..MAX_CLIMB_PASSES {
        let mut improved = false;
        for t in 0..x.len() {
            let current = x[t];
            let candidates = [
                lo,
                hi,
                current.saturating_sub(1).max(lo),
                current.saturating_add(1).min(hi),
                rng.gen_range(lo..=hi),
            ];
            for cand in candidates {
                if cand == x[t] {
                    continue;
                }
                let keep = x[t];
                x[t] = cand;
                evaluations += 1;
                match probe(dp, x)? {
                    Probe::Hit(step, v) => return Ok((hit(x, step, v), evaluations)),
                    Probe::Miss(score) if score > best => {
                        best = score;
                        improved = true;
                    }
                    Probe::Miss(_) => x[t] = keep,
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok((None, evaluations))
}

impl PartialOrd for OverflowCounterexample {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OverflowCounterexample {
    /// Step first, then inputs lexicographically.
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank()
            .cmp(&other.rank())
            .then_with(|| self.site.cmp(&other.site))
            .then_with(|| self.wide_raw.cmp(&other.wide_raw))
    }
}

//! Runs the selected passes of a job and assembles the report.

use std::time::Instant;

use fxcheck_core::filtermodel::{quantize_filter, FilterError, QuantizedFilter};
use fxcheck_core::fixedpoint::{rational_string, Bound, FixedValue};
use fxcheck_core::overflow::{search_overflow, OverflowCounterexample, OverflowError, SearchConfig};
use fxcheck_core::response::{
    check_magnitude, check_phase, confirm_magnitude_witness, confirm_phase_witness, passband_ranges, response_of,
    response_of_quantized, FrequencyResponse, MagnitudeWitness,
};
use fxcheck_core::stability::{check_stability, StabilityStatus, StabilityVerdict};
use thiserror::Error;

use crate::job::{JobConfig, Pass};
use crate::report::*;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INDETERMINATE: i32 = 3;

/// Magnitudes below this many dB are reported at the floor.
const DB_FLOOR: f64 = -400.0;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot quantize the filter: {0}")]
    Quantize(#[from] FilterError),
    #[error("overflow search: {0}")]
    Overflow(#[from] OverflowError),
}

/// A finished run: the report plus the responses behind the magnitude
/// pass, kept for CSV output.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub responses: Option<(FrequencyResponse, FrequencyResponse)>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        self.report.summary.exit_code
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn raws(values: &[FixedValue]) -> Vec<i64> {
    values.iter().map(FixedValue::raw).collect()
}

fn floored(mut w: MagnitudeWitness) -> MagnitudeWitness {
    if w.magnitude_db.is_nan() || w.magnitude_db < DB_FLOOR {
        w.magnitude_db = DB_FLOOR;
    }
    w
}

fn stability_result(qf: &QuantizedFilter, v: StabilityVerdict) -> (Outcome, StabilityResult) {
    let outcome = match v.status {
        StabilityStatus::Stable if v.oracle_error.is_some() => Outcome::Indeterminate,
        StabilityStatus::Stable => Outcome::Pass,
        StabilityStatus::Unstable => Outcome::Violation,
        StabilityStatus::Marginal => Outcome::Indeterminate,
    };
    let result = StabilityResult {
        status: if v.is_stable() { Verdict::S } else { Verdict::F },
        stability: v.status,
        characteristic_polynomial: qf.a_real(),
        failed_condition: v.failed_condition,
        conditions: v.conditions,
        table: v.table,
        oracle_max_root: v.oracle_max_root,
        oracle_error: v.oracle_error,
    };
    (outcome, result)
}

fn counterexample_report(qf: &QuantizedFilter, c: &OverflowCounterexample) -> CounterexampleReport {
    let limit = match c.bound {
        Bound::Max => c.format.raw_max(),
        Bound::Min => c.format.raw_min(),
    };
    CounterexampleReport {
        step: c.step,
        site: c.site,
        bound: c.bound,
        limit: rational_string(limit as i128, c.format.frac_bits()),
        inputs_raw: c.inputs.clone(),
        inputs: c.input_rationals(),
        wide_raw: c.wide_raw,
        wide: c.wide_rational(),
        replayed: c.replays_on(qf),
        description: c.to_string(),
    }
}

/// Runs the passes in order stability, magnitude, phase, overflow. An
/// unstable or marginal quantized filter skips magnitude and phase.
pub fn run(job: &JobConfig) -> Result<RunOutput, RunError> {
    let start = Instant::now();
    let qf = quantize_filter(&job.filter, job.format, job.rounding)?;
    let mut passes = Passes::default();
    let mut timing = Timing::default();
    let mut notes = Vec::new();

    let t = Instant::now();
    let stability = check_stability(&qf);
    let gate = match &stability {
        Ok(v) if v.is_stable() => None,
        Ok(v) => Some(format!("quantized filter is {}", v.status)),
        Err(e) => Some(format!("stability could not be decided: {e}")),
    };
    if job.runs(Pass::Stability) {
        passes.stability = Some(match stability {
            Ok(v) => {
                let (outcome, result) = stability_result(&qf, v);
                PassReport::ran(outcome, result)
            }
            Err(e) => PassReport::without_result(Outcome::Indeterminate, e.to_string()),
        });
        timing.stability_ms = Some(ms(t));
    }

    let mut responses = None;
    let mut response_error = String::new();
    let response_passes = job.runs(Pass::Magnitude) || job.runs(Pass::Phase);
    if response_passes && gate.is_none() {
        let ideal = response_of(&job.filter, job.grid, job.response_method);
        let fixed = response_of_quantized(&qf, job.grid, job.response_method);
        match (ideal, fixed) {
            (Ok(i), Ok(f)) => responses = Some((i, f)),
            (Err(e), _) => response_error = format!("ideal response: {e}"),
            (_, Err(e)) => response_error = format!("quantized response: {e}"),
        }
    }
    let unavailable = |pass: Pass| -> (Outcome, String) {
        match &gate {
            Some(reason) => (Outcome::Skipped, reason.clone()),
            None => (
                Outcome::Indeterminate,
                format!("{pass} pass needs both frequency responses; {response_error}"),
            ),
        }
    };

    if job.runs(Pass::Magnitude) {
        let t = Instant::now();
        passes.magnitude = Some(match &responses {
            Some((ideal, fixed)) => {
                let v = check_magnitude(fixed, &job.band).expect("validated spec");
                let iv = check_magnitude(ideal, &job.band).expect("validated spec");
                debug_assert!(confirm_magnitude_witness(fixed, &v));
                if !iv.passed() {
                    notes.push(format!(
                        "the unquantized design already fails the magnitude spec ({})",
                        iv.status.as_str()
                    ));
                }
                let max_deviation = ideal
                    .half_grid()
                    .map(|k| (fixed.magnitude(k) - ideal.magnitude(k)).abs())
                    .fold(0.0, f64::max);
                let outcome = if v.passed() { Outcome::Pass } else { Outcome::Violation };
                PassReport::ran(
                    outcome,
                    MagnitudeResult {
                        status: v.status,
                        witness: v.witness.map(floored),
                        ideal_status: iv.status,
                        ideal_witness: iv.witness.map(floored),
                        max_deviation,
                    },
                )
            }
            None => {
                let (outcome, reason) = unavailable(Pass::Magnitude);
                PassReport::without_result(outcome, reason)
            }
        });
        timing.magnitude_ms = Some(ms(t));
    }

    if job.runs(Pass::Phase) {
        let t = Instant::now();
        let threshold = job.band.phase_threshold.expect("phase pass requires a threshold");
        passes.phase = Some(match &responses {
            Some((ideal, fixed)) => {
                let bands = passband_ranges(&job.band);
                let v = check_phase(ideal, fixed, threshold, &bands).expect("matching grids");
                debug_assert!(confirm_phase_witness(ideal, fixed, &v));
                let outcome = if v.passed() { Outcome::Pass } else { Outcome::Violation };
                PassReport::ran(
                    outcome,
                    PhaseResult {
                        status: v.status,
                        threshold_rad: threshold,
                        max_abs_delta_rad: v.max_abs_delta_rad,
                        bands_rad: bands,
                        witness: v.witness,
                    },
                )
            }
            None => {
                let (outcome, reason) = unavailable(Pass::Phase);
                PassReport::without_result(outcome, reason)
            }
        });
        timing.phase_ms = Some(ms(t));
    }

    if job.runs(Pass::Overflow) {
        let t = Instant::now();
        let cfg = SearchConfig {
            horizon: job.bound,
            strategy: job.strategy,
            input_range: job.input_range_raw,
            sites: job.sites,
            seed: job.seed,
            restarts: job.restarts,
        };
        let v = search_overflow(&qf, &cfg)?;
        let counterexample = v.counterexample.as_ref().map(|c| counterexample_report(&qf, c));
        if !v.found() && !v.complete {
            notes.push(format!(
                "overflow: {} search found no counterexample but is not exhaustive",
                v.strategy
            ));
        }
        passes.overflow = Some(PassReport::ran(
            if v.found() { Outcome::Violation } else { Outcome::Pass },
            OverflowResult {
                status: if v.found() { Verdict::F } else { Verdict::S },
                search: v.status,
                strategy: v.strategy,
                horizon: v.horizon,
                complete: v.complete,
                explored: v.explored,
                counterexample,
            },
        ));
        timing.overflow_ms = Some(ms(t));
    }

    let outcomes = passes.outcomes();
    let any = |o: Outcome| outcomes.iter().any(|&(_, x)| x == o);
    let (outcome, exit_code) = if any(Outcome::Violation) {
        (Outcome::Violation, EXIT_VIOLATION)
    } else if any(Outcome::Indeterminate) || any(Outcome::Skipped) {
        (Outcome::Indeterminate, EXIT_INDETERMINATE)
    } else {
        (Outcome::Pass, EXIT_PASS)
    };
    timing.total_ms = ms(start);

    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: Tool {
            name: "fxcheck".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        environment: Environment {
            filter: job.filter.clone(),
            spec: job.spec.clone(),
            passes: job.passes.clone(),
            format: job.format,
            rounding: job.rounding,
            overflow_mode: job.overflow,
            grid: job.grid,
            response_method: job.response_method,
            bound: job.bound,
            strategy: job.strategy,
            seed: job.seed,
            restarts: job.restarts,
            sites: job.sites,
            input_range_raw: job.input_range_raw,
        },
        quantized: QuantizedCoefficients {
            b_raw: raws(qf.b()),
            a_raw: raws(qf.a()),
            b: qf.b().iter().map(FixedValue::to_rational).collect(),
            a: qf.a().iter().map(FixedValue::to_rational).collect(),
        },
        passes,
        summary: Summary {
            outcome,
            exit_code,
            notes,
        },
        timing: Some(timing),
    };
    Ok(RunOutput { report, responses })
}

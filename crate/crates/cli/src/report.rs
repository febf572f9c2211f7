//! The machine-readable verification report.

use fxcheck_core::filtermodel::TransferFunction;
use fxcheck_core::fixedpoint::{Bound, FixedFormat, OverflowMode, RoundingMode};
use fxcheck_core::overflow::{CheckSites, OverflowStatus, SearchStrategy, Site};
use fxcheck_core::response::{
    FilterSpecHz, MagnitudeStatus, MagnitudeWitness, PhaseStatus, PhaseWitness, ResponseMethod,
};
use fxcheck_core::stability::{JuryCondition, JuryConditions, JuryTable, StabilityStatus};
use serde::{Deserialize, Serialize};

use crate::job::Pass;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub tool: Tool,
    pub environment: Environment,
    pub quantized: QuantizedCoefficients,
    pub passes: Passes,
    pub summary: Summary,
    /// Wall time, the only part of a report that varies between runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

/// Every setting the verdicts depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    pub filter: TransferFunction,
    pub spec: FilterSpecHz,
    pub passes: Vec<Pass>,
    pub format: FixedFormat,
    pub rounding: RoundingMode,
    pub overflow_mode: OverflowMode,
    pub grid: usize,
    pub response_method: ResponseMethod,
    pub bound: usize,
    pub strategy: SearchStrategy,
    pub seed: u64,
    pub restarts: usize,
    pub sites: CheckSites,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_range_raw: Option<(i64, i64)>,
}

/// Coefficients after quantization, as raw integers and exact rationals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizedCoefficients {
    pub b_raw: Vec<i64>,
    pub a_raw: Vec<i64>,
    pub b: Vec<String>,
    pub a: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Violation,
    Indeterminate,
    Skipped,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Violation => "violation",
            Outcome::Indeterminate => "indeterminate",
            Outcome::Skipped => "skipped",
        }
    }
}

/// Success or failure, for passes without a finer status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    S,
    F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassReport<T> {
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    pub result: Option<T>,
}

impl<T> PassReport<T> {
    pub fn ran(outcome: Outcome, result: T) -> Self {
        PassReport {
            outcome,
            reason: None,
            result: Some(result),
        }
    }

    pub fn without_result(outcome: Outcome, reason: impl Into<String>) -> Self {
        PassReport {
            outcome,
            reason: Some(reason.into()),
            result: None,
        }
    }
}

/// Passes that were not selected are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Passes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<PassReport<StabilityResult>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<PassReport<MagnitudeResult>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PassReport<PhaseResult>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overflow: Option<PassReport<OverflowResult>>,
}

impl Passes {
    pub fn outcomes(&self) -> Vec<(Pass, Outcome)> {
        let mut out = Vec::new();
        if let Some(p) = &self.stability {
            out.push((Pass::Stability, p.outcome));
        }
        if let Some(p) = &self.magnitude {
            out.push((Pass::Magnitude, p.outcome));
        }
        if let Some(p) = &self.phase {
            out.push((Pass::Phase, p.outcome));
        }
        if let Some(p) = &self.overflow {
            out.push((Pass::Overflow, p.outcome));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityResult {
    pub status: Verdict,
    pub stability: StabilityStatus,
    /// Denominator coefficients, highest power of z first.
    pub characteristic_polynomial: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_condition: Option<JuryCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<JuryConditions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<JuryTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_max_root: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnitudeResult {
    pub status: MagnitudeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<MagnitudeWitness>,
    /// The same check on the unquantized design.
    pub ideal_status: MagnitudeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideal_witness: Option<MagnitudeWitness>,
    /// Largest `|H_fixed| - |H_ideal|` over the half grid, in absolute terms.
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseResult {
    pub status: PhaseStatus,
    pub threshold_rad: f64,
    pub max_abs_delta_rad: f64,
    /// Bands compared, rad/sample; empty means the whole half grid.
    pub bands_rad: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<PhaseWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverflowResult {
    pub status: Verdict,
    pub search: OverflowStatus,
    pub strategy: SearchStrategy,
    pub horizon: usize,
    /// Whether the absence of a counterexample is a proof for the horizon.
    pub complete: bool,
    pub explored: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleReport {
    pub step: usize,
    pub site: Site,
    pub bound: Bound,
    /// The violated limit, exact.
    pub limit: String,
    pub inputs_raw: Vec<i64>,
    pub inputs: Vec<String>,
    pub wide_raw: i128,
    pub wide: String,
    /// Replaying the inputs in detect mode reproduced the violation.
    pub replayed: bool,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub outcome: Outcome,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overflow_ms: Option<f64>,
    pub total_ms: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Report> {
        serde_json::from_str(text)
    }

    /// The report with wall times removed, for byte comparison.
    pub fn without_timing(&self) -> Report {
        Report {
            timing: None,
            ..self.clone()
        }
    }
}

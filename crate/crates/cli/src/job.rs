//! Job files: what to verify and how, resolved into a [`JobConfig`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fxcheck_core::filtermodel::TransferFunction;
use fxcheck_core::fixedpoint::{FixedFormat, OverflowMode, RoundingMode};
use fxcheck_core::overflow::{CheckSites, SearchStrategy, DEFAULT_RESTARTS, DEFAULT_SEED, EXHAUSTIVE_BUDGET};
use fxcheck_core::response::{FilterSpecBand, FilterSpecHz, ResponseError, ResponseMethod, DEFAULT_GRID};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const JOB_SCHEMA_VERSION: u32 = 1;

/// Horizon used for IIR overflow search when none is given.
pub const DEFAULT_IIR_BOUND: usize = 16;

#[derive(Debug, Error)]
pub enum JobError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}: {field}: {message}")]
    Schema {
        file: PathBuf,
        field: String,
        message: String,
    },
    #[error("{file}: unsupported schema_version {found} (expected {JOB_SCHEMA_VERSION})")]
    Version { file: PathBuf, found: u32 },
    #[error("spec: {0}")]
    Spec(#[from] ResponseError),
    #[error("{0}")]
    Invalid(String),
}

/// A verification pass. The declaration order is the run order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pass {
    Stability,
    Magnitude,
    Phase,
    Overflow,
}

impl Pass {
    pub const ALL: [Pass; 4] = [Pass::Stability, Pass::Magnitude, Pass::Phase, Pass::Overflow];

    pub fn as_str(&self) -> &'static str {
        match self {
            Pass::Stability => "stability",
            Pass::Magnitude => "magnitude",
            Pass::Phase => "phase",
            Pass::Overflow => "overflow",
        }
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pass::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| format!("unknown pass {s:?} (expected stability, magnitude, phase or overflow)"))
    }
}

/// A section given inline or as a path relative to the job file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Section<T> {
    File(PathBuf),
    Inline(T),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<FixedFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounding: Option<RoundingMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overflow: Option<OverflowMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passes: Option<Vec<Pass>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_method: Option<ResponseMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<SearchStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<CheckSites>,
    /// Raw input bounds for the overflow search, inclusive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_range_raw: Option<(i64, i64)>,
}

/// The job file as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobFile {
    pub schema_version: u32,
    pub filter: Section<TransferFunction>,
    pub spec: Section<FilterSpecHz>,
    #[serde(default)]
    pub fixedpoint: FixedPointSection,
    #[serde(default)]
    pub verify: VerifySection,
}

/// Same shape as [`JobFile`], with the sections left undecoded so that
/// schema errors inside them keep their field path.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJob {
    schema_version: u32,
    filter: serde_json::Value,
    spec: serde_json::Value,
    #[serde(default)]
    fixedpoint: FixedPointSection,
    #[serde(default)]
    verify: VerifySection,
}

/// Command-line settings that take precedence over the job file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub passes: Option<Vec<Pass>>,
    pub format: Option<FixedFormat>,
    pub rounding: Option<RoundingMode>,
    pub overflow: Option<OverflowMode>,
    pub grid: Option<usize>,
    pub bound: Option<usize>,
    pub strategy: Option<SearchStrategy>,
    pub seed: Option<u64>,
    pub sites: Option<CheckSites>,
    /// Seed from the environment, used only when neither the command line
    /// nor the job file sets one.
    pub env_seed: Option<u64>,
}

/// A fully resolved job with every default applied.
#[derive(Debug, Clone, PartialEq)]
pub struct JobConfig {
    pub filter: TransferFunction,
    pub spec: FilterSpecHz,
    pub band: FilterSpecBand,
    pub passes: Vec<Pass>,
    pub format: FixedFormat,
    pub rounding: RoundingMode,
    pub overflow: OverflowMode,
    pub grid: usize,
    pub response_method: ResponseMethod,
    pub bound: usize,
    pub strategy: SearchStrategy,
    pub seed: u64,
    pub restarts: usize,
    pub sites: CheckSites,
    pub input_range_raw: Option<(i64, i64)>,
}

impl JobConfig {
    pub fn runs(&self, pass: Pass) -> bool {
        self.passes.contains(&pass)
    }
}

fn read(path: &Path) -> Result<String, JobError> {
    fs::read_to_string(path).map_err(|source| JobError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn schema_error(file: &Path, prefix: &str, err: serde_path_to_error::Error<serde_json::Error>) -> JobError {
    let inner = err.path().to_string();
    let field = match (prefix, inner.as_str()) {
        ("", ".") => "top level".to_string(),
        ("", p) => p.to_string(),
        (pre, ".") => pre.to_string(),
        (pre, p) => format!("{pre}.{p}"),
    };
    JobError::Schema {
        file: file.to_path_buf(),
        field,
        message: err.into_inner().to_string(),
    }
}

fn decode<T: DeserializeOwned>(value: serde_json::Value, file: &Path, field: &str) -> Result<T, JobError> {
    serde_path_to_error::deserialize(value).map_err(|e| schema_error(file, field, e))
}

/// Decodes a section given inline, or loads it from a path relative to
/// `base`.
fn resolve<T: DeserializeOwned>(
    value: serde_json::Value,
    job_file: &Path,
    base: &Path,
    field: &str,
) -> Result<T, JobError> {
    match value {
        serde_json::Value::String(p) => {
            let path = base.join(p);
            let text = read(&path)?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de).map_err(|e| schema_error(&path, "", e))
        }
        inline => decode(inline, job_file, field),
    }
}

/// Reads a job file and resolves it against `overrides`.
pub fn parse_job(path: &Path, overrides: &Overrides) -> Result<JobConfig, JobError> {
    let text = read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_job_str(&text, path, base, overrides)
}

/// Parses job text; `file` names it in errors and relative section paths
/// resolve against `base`.
pub fn parse_job_str(text: &str, file: &Path, base: &Path, overrides: &Overrides) -> Result<JobConfig, JobError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawJob = serde_path_to_error::deserialize(de).map_err(|e| schema_error(file, "", e))?;
    if raw.schema_version != JOB_SCHEMA_VERSION {
        return Err(JobError::Version {
            file: file.to_path_buf(),
            found: raw.schema_version,
        });
    }
    let filter: TransferFunction = resolve(raw.filter, file, base, "filter")?;
    let spec: FilterSpecHz = resolve(raw.spec, file, base, "spec")?;
    let band = spec.to_band(filter.fs_hz())?;
    let fx = raw.fixedpoint;
    let v = raw.verify;

    let format = overrides
        .format
        .or(fx.format)
        .ok_or_else(|| JobError::Invalid("no fixed-point format: set fixedpoint.format or --format".into()))?;

    let has_threshold = spec.phase_threshold_rad.is_some();
    let passes = match overrides.passes.clone().or(v.passes) {
        Some(list) => {
            let mut list = list;
            list.sort();
            list.dedup();
            if list.is_empty() {
                return Err(JobError::Invalid("at least one pass must be selected".into()));
            }
            if list.contains(&Pass::Phase) && !has_threshold {
                return Err(JobError::Invalid(
                    "the phase pass needs spec.phase_threshold_rad".into(),
                ));
            }
            list
        }
        None => Pass::ALL
            .into_iter()
            .filter(|&p| p != Pass::Phase || has_threshold)
            .collect(),
    };

    let grid = overrides.grid.or(v.grid).unwrap_or(DEFAULT_GRID);
    if grid < 2 {
        return Err(JobError::Invalid(format!("grid must be at least 2, got {grid}")));
    }

    let input_range_raw = v.input_range_raw;
    let (lo, hi) = input_range_raw.unwrap_or((format.raw_min(), format.raw_max()));
    if lo > hi || !format.contains_raw(lo as i128) || !format.contains_raw(hi as i128) {
        return Err(JobError::Invalid(format!(
            "input_range_raw [{lo}, {hi}] is not a sub-range of [{}, {}] for format {format}",
            format.raw_min(),
            format.raw_max()
        )));
    }
    let alphabet = (hi as i128 - lo as i128 + 1) as u128;
    let fits_budget = |k: usize| {
        u32::try_from(k)
            .ok()
            .and_then(|k| alphabet.checked_pow(k))
            .is_some_and(|n| n <= EXHAUSTIVE_BUDGET)
    };

    let bound = overrides.bound.or(v.bound).unwrap_or(if filter.is_fir() {
        filter.b().len()
    } else {
        DEFAULT_IIR_BOUND
    });
    if bound == 0 {
        return Err(JobError::Invalid("bound must be at least 1".into()));
    }
    let strategy = match overrides.strategy.or(v.strategy) {
        Some(s) => s,
        None if filter.is_fir() => SearchStrategy::AnalyticFir,
        None if fits_budget(bound) => SearchStrategy::Exhaustive,
        None => SearchStrategy::Directed,
    };
    let overflow_selected = passes.contains(&Pass::Overflow);
    if overflow_selected && strategy == SearchStrategy::AnalyticFir && !filter.is_fir() {
        return Err(JobError::Invalid(
            "the analytic strategy applies to FIR filters only".into(),
        ));
    }
    if overflow_selected && strategy == SearchStrategy::Exhaustive && !fits_budget(bound) {
        return Err(JobError::Invalid(format!(
            "exhaustive search over {alphabet} inputs per step with bound {bound} exceeds the budget of {EXHAUSTIVE_BUDGET} sequences"
        )));
    }

    Ok(JobConfig {
        filter,
        spec,
        band,
        passes,
        format,
        rounding: overrides.rounding.or(fx.rounding).unwrap_or_default(),
        overflow: overrides.overflow.or(fx.overflow).unwrap_or_default(),
        grid,
        response_method: v.response_method.unwrap_or_default(),
        bound,
        strategy,
        seed: overrides.seed.or(v.seed).or(overrides.env_seed).unwrap_or(DEFAULT_SEED),
        restarts: v.restarts.unwrap_or(DEFAULT_RESTARTS),
        sites: overrides.sites.or(v.sites).unwrap_or_default(),
        input_range_raw,
    })
}

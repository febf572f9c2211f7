//! Jury stability test on a filter's characteristic polynomial, with an
//! independent root-magnitude oracle.
//!
//! `S(z) = a_0 z^N + a_1 z^{N-1} + ... + a_N` is the denominator of the
//! transfer function. The table is built with the reduction
//! `c'_j = c_j - (c_w / c_0) c_{w-j}` where `w` is the last index of the
//! current block, so each block is one entry shorter than the one before it.
//! The polynomial is stable iff
//!
//! - R1: `S(1) > 0`,
//! - R2: `(-1)^N S(-1) > 0`,
//! - R3: `|a_N| < |a_0|`,
//! - R4: the leading entry of every block is positive,
//!
//! after `S` has been scaled so that `a_0 > 0`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filtermodel::QuantizedFilter;

/// Distance from the unit circle inside which the root oracle reports a
/// marginal pole.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;

/// Convergence tolerance of the root finder.
pub const ROOT_TOLERANCE: f64 = 1e-10;

const MAX_ORACLE_DEGREE: usize = 32;
const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error("characteristic polynomial needs at least two coefficients, got {0}")]
    DegreeTooLow(usize),
    #[error("leading coefficient a_0 is zero")]
    ZeroLeading,
    #[error("coefficient a_{0} is not finite")]
    NonFinite(usize),
    #[error("root oracle supports degree up to {MAX_ORACLE_DEGREE}, got {0}")]
    DegreeTooHigh(usize),
    #[error("root finder did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
}

/// Characteristic polynomial, coefficients in descending powers of `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharPoly {
    coeffs: Vec<f64>,
}

impl CharPoly {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, StabilityError> {
        if coeffs.len() < 2 {
            return Err(StabilityError::DegreeTooLow(coeffs.len()));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(StabilityError::NonFinite(i));
        }
        if coeffs[0] == 0.0 {
            return Err(StabilityError::ZeroLeading);
        }
        Ok(CharPoly { coeffs })
    }

    /// The quantized denominator read back as reals.
    pub fn from_quantized(qf: &QuantizedFilter) -> Result<Self, StabilityError> {
        CharPoly::new(qf.a_real())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, &c| acc * z + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Coefficients reversed: the polynomial whose roots are the reciprocals.
    pub fn reversed(&self) -> Result<Self, StabilityError> {
        CharPoly::new(self.coeffs.iter().rev().copied().collect())
    }

    fn sign_normalized(&self) -> Vec<f64> {
        if self.coeffs[0] < 0.0 {
            self.coeffs.iter().map(|c| -c).collect()
        } else {
            self.coeffs.clone()
        }
    }
}

/// One block of the table: a row and its reversal, both padded with zeros
/// to the full width `N + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JuryBlock {
    pub row: Vec<f64>,
    pub reversed: Vec<f64>,
}

impl JuryBlock {
    pub fn leading(&self) -> f64 {
        self.row[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JuryTable {
    pub blocks: Vec<JuryBlock>,
    /// Index of a block whose leading entry is exactly zero; the reduction
    /// stops there.
    pub zero_pivot: Option<usize>,
}

/// Builds blocks `0..N` of the table for the sign-normalized polynomial.
pub fn build_jury_table(p: &CharPoly) -> JuryTable {
    let width = p.coeffs.len();
    let degree = p.degree();
    let block = |c: &[f64]| {
        let mut row = c.to_vec();
        let mut reversed: Vec<f64> = c.iter().rev().copied().collect();
        row.resize(width, 0.0);
        reversed.resize(width, 0.0);
        JuryBlock { row, reversed }
    };
    let mut current = p.sign_normalized();
    let mut blocks = vec![block(&current)];
    let mut zero_pivot = None;
    while blocks.len() < degree {
        let c0 = current[0];
        if c0 == 0.0 {
            zero_pivot = Some(blocks.len() - 1);
            break;
        }
        let w = current.len() - 1;
        let ratio = current[w] / c0;
        current = (0..w).map(|j| current[j] - ratio * current[w - j]).collect();
        blocks.push(block(&current));
    }
    if zero_pivot.is_none() && blocks.last().is_some_and(|b| b.leading() == 0.0) {
        zero_pivot = Some(blocks.len() - 1);
    }
    JuryTable { blocks, zero_pivot }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JuryCondition {
    R1,
    R2,
    R3,
    R4,
}

impl fmt::Display for JuryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JuryConditions {
    pub r1: bool,
    pub r2: bool,
    pub r3: bool,
    pub r4: bool,
}

impl JuryConditions {
    pub fn all(&self) -> bool {
        self.r1 && self.r2 && self.r3 && self.r4
    }

    pub fn first_failed(&self) -> Option<JuryCondition> {
        [
            (self.r1, JuryCondition::R1),
            (self.r2, JuryCondition::R2),
            (self.r3, JuryCondition::R3),
            (self.r4, JuryCondition::R4),
        ]
        .into_iter()
        .find(|(ok, _)| !ok)
        .map(|(_, c)| c)
    }
}

pub fn jury_conditions(p: &CharPoly, table: &JuryTable) -> JuryConditions {
    let c = p.sign_normalized();
    let n = p.degree();
    let s = CharPoly { coeffs: c.clone() };
    let parity = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    JuryConditions {
        r1: s.eval(1.0) > 0.0,
        r2: parity * s.eval(-1.0) > 0.0,
        r3: c[n].abs() < c[0].abs(),
        r4: table.blocks.iter().all(|b| b.leading() > 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityStatus {
    Stable,
    Unstable,
    /// A pole on, or numerically indistinguishable from, the unit circle.
    Marginal,
}

impl fmt::Display for StabilityStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StabilityStatus::Stable => "stable",
            StabilityStatus::Unstable => "unstable",
            StabilityStatus::Marginal => "marginal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub status: StabilityStatus,
    pub failed_condition: Option<JuryCondition>,
    pub conditions: Option<JuryConditions>,
    pub table: Option<JuryTable>,
    pub oracle_max_root: Option<f64>,
    /// Set when the root oracle could not produce a value.
    pub oracle_error: Option<String>,
}

impl StabilityVerdict {
    pub fn is_stable(&self) -> bool {
        self.status == StabilityStatus::Stable
    }

    fn fir() -> Self {
        StabilityVerdict {
            status: StabilityStatus::Stable,
            failed_condition: None,
            conditions: None,
            table: None,
            oracle_max_root: None,
            oracle_error: None,
        }
    }
}

/// Jury verdict on a polynomial, cross-checked against the root oracle for
/// poles on the unit circle.
pub fn check_polynomial(p: &CharPoly) -> StabilityVerdict {
    let table = build_jury_table(p);
    let conditions = jury_conditions(p, &table);
    let (oracle_max_root, oracle_error) = match root_magnitude_oracle(p) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let on_circle = oracle_max_root.is_some_and(|r| (r - 1.0).abs() <= MARGINAL_TOLERANCE);
    let failed = conditions.first_failed();
    let status = if on_circle {
        StabilityStatus::Marginal
    } else if failed.is_some() {
        StabilityStatus::Unstable
    } else if table.zero_pivot.is_some() {
        StabilityStatus::Marginal
    } else {
        StabilityStatus::Stable
    };
    StabilityVerdict {
        status,
        failed_condition: failed,
        conditions: Some(conditions),
        table: Some(table),
        oracle_max_root,
        oracle_error,
    }
}

/// Stability of the quantized denominator. FIR filters are stable.
pub fn check_stability(qf: &QuantizedFilter) -> Result<StabilityVerdict, StabilityError> {
    if qf.is_fir() {
        return Ok(StabilityVerdict::fir());
    }
    Ok(check_polynomial(&CharPoly::from_quantized(qf)?))
}

/// All roots by Aberth-Ehrlich simultaneous iteration.
pub fn polynomial_roots(p: &CharPoly) -> Result<Vec<Complex64>, StabilityError> {
    let n = p.degree();
    if n > MAX_ORACLE_DEGREE {
        return Err(StabilityError::DegreeTooHigh(n));
    }
    let a0 = p.coeffs[0];
    let monic: Vec<f64> = p.coeffs.iter().map(|c| c / a0).collect();
    let deriv: Vec<f64> = monic[..n].iter().enumerate().map(|(i, c)| c * (n - i) as f64).collect();
    let horner = |c: &[f64], z: Complex64| c.iter().fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * z + ci);
    let abs_horner = |z: f64| monic.iter().fold(0.0, |acc, &ci| acc * z + ci.abs());

    // starting points on a circle inside the Cauchy bound, rotated off the axes
    let radius = 1.0 + monic[1..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            Complex64::from_polar(0.5 * radius, theta)
        })
        .collect();
    let mut done = vec![false; n];
    for _ in 0..MAX_ITERATIONS {
        for i in 0..n {
            if done[i] {
                continue;
            }
            let pz = horner(&monic, z[i]);
            // value already at the level of its own rounding error
            if pz.norm() <= 4.0 * f64::EPSILON * abs_horner(z[i].norm()) {
                done[i] = true;
                continue;
            }
            let ratio = pz / horner(&deriv, z[i]);
            let repulsion: Complex64 = (0..n).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if !step.is_finite() {
                continue;
            }
            z[i] -= step;
            if step.norm() <= ROOT_TOLERANCE * z[i].norm().max(1.0) {
                done[i] = true;
            }
        }
        if done.iter().all(|&d| d) {
            return Ok(z);
        }
    }
    Err(StabilityError::NonConvergence {
        iterations: MAX_ITERATIONS,
    })
}

/// Largest root modulus of `p`.
pub fn root_magnitude_oracle(p: &CharPoly) -> Result<f64, StabilityError> {
    Ok(polynomial_roots(p)?.iter().map(|r| r.norm()).fold(0.0, f64::max))
}

//! Verification of fixed-point digital filter implementations.
//!
//! The crate models a filter designed in floating point, quantizes its
//! coefficients into a signed fixed-point format and checks the result
//! against a design contract:
//!
//! - [`response`]: magnitude and phase of the sampled frequency response;
//! - [`stability`]: pole location via the Jury table;
//! - [`overflow`]: bounded search for input sequences that overflow the
//!   fixed-point datapath.

pub mod filtermodel;
pub mod fixedpoint;
pub mod fixtures;
pub mod overflow;
pub mod response;
pub mod stability;

pub use filtermodel::{quantize_filter, QuantizedFilter, TransferFunction};
pub use fixedpoint::{FixedFormat, FixedValue, OverflowMode, RoundingMode};

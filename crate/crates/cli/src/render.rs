//! Plain-text summary of a report.

use std::f64::consts::PI;
use std::fmt::Write;

use fxcheck_core::response::{Limit, MagnitudeWitness};

use crate::report::{Outcome, PassReport, Report};

fn hz(freq_rad: f64, fs_hz: f64) -> f64 {
    freq_rad * fs_hz / (2.0 * PI)
}

fn magnitude_witness(w: &MagnitudeWitness, fs_hz: f64) -> String {
    let side = match w.limit {
        Limit::Floor => "below the floor",
        Limit::Ceiling => "above the ceiling",
    };
    format!(
        "bin {} ({:.1} Hz): {:.2} dB {side} of {} dB",
        w.bin,
        hz(w.freq_rad, fs_hz),
        w.magnitude_db,
        w.bound_db
    )
}

fn line<T>(out: &mut String, name: &str, pass: &PassReport<T>, status: impl Fn(&T) -> (String, String)) {
    let (code, detail) = match (&pass.result, pass.outcome) {
        (Some(r), _) => status(r),
        (None, Outcome::Skipped) => ("-".into(), format!("skipped: {}", pass.reason.as_deref().unwrap_or(""))),
        (None, _) => ("?".into(), pass.reason.clone().unwrap_or_default()),
    };
    let _ = writeln!(out, "  {name:<10} {code:<3} {detail}");
}

pub fn render_text(report: &Report) -> String {
    let env = &report.environment;
    let fs = env.filter.fs_hz();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {}: format <{}>, {} rounding, {} overflow, N = {}, k = {}",
        report.tool.name, report.tool.version, env.format, env.rounding, env.overflow_mode, env.grid, env.bound
    );
    let p = &report.passes;
    if let Some(pass) = &p.stability {
        line(&mut out, "stability", pass, |r| {
            let root = r
                .oracle_max_root
                .map(|m| format!(", max |root| = {m:.6}"))
                .unwrap_or_default();
            let failed = r.failed_condition.map(|c| format!(", {c} fails")).unwrap_or_default();
            (format!("{:?}", r.status), format!("{}{failed}{root}", r.stability))
        });
    }
    if let Some(pass) = &p.magnitude {
        line(&mut out, "magnitude", pass, |r| {
            let detail = match &r.witness {
                Some(w) => magnitude_witness(w, fs),
                None => format!("max deviation {:.3e}", r.max_deviation),
            };
            (r.status.as_str().into(), detail)
        });
    }
    if let Some(pass) = &p.phase {
        line(&mut out, "phase", pass, |r| {
            let detail = match &r.witness {
                Some(w) => format!(
                    "bin {} ({:.1} Hz): |delta| = {:.4} rad > {}",
                    w.bin,
                    hz(w.freq_rad, fs),
                    w.delta_rad.abs(),
                    w.threshold_rad
                ),
                None => format!("max |delta| = {:.4} rad <= {}", r.max_abs_delta_rad, r.threshold_rad),
            };
            (r.status.as_str().into(), detail)
        });
    }
    if let Some(pass) = &p.overflow {
        line(&mut out, "overflow", pass, |r| {
            let detail = match &r.counterexample {
                Some(c) => c.description.clone(),
                None if r.complete => format!("no overflow within {} steps ({})", r.horizon, r.strategy),
                None => format!(
                    "none found within {} steps ({}, {} candidates, not exhaustive)",
                    r.horizon, r.strategy, r.explored
                ),
            };
            (format!("{:?}", r.status), detail)
        });
    }
    for note in &report.summary.notes {
        let _ = writeln!(out, "note: {note}");
    }
    let _ = writeln!(
        out,
        "result: {} (exit {})",
        report.summary.outcome.as_str(),
        report.summary.exit_code
    );
    out
}

use std::f64::consts::PI;

use fxcheck_core::filtermodel::{
    design_butterworth2, impulse_response, quantize_filter, ButterworthType, QuantizedFilter, TransferFunction,
};
use fxcheck_core::fixedpoint::{
    fx_add, fx_mul, quantize, wrap_raw, FixedFormat, FixedValue, OverflowMode, RoundingMode,
};
use fxcheck_core::fixtures;
use fxcheck_core::overflow::{search_overflow, simulate_fixed, SearchConfig, SearchStrategy, SimulationOutcome};
use fxcheck_core::response::{
    check_magnitude, check_phase, confirm_magnitude_witness, confirm_phase_witness, db_to_lin, lin_to_db, response_of,
    sampled_dtft, BandKind, Edge, FilterSpecBand, FrequencyResponse, ResponseMethod, ResponseSource,
};
use fxcheck_core::stability::{check_polynomial, root_magnitude_oracle, CharPoly, StabilityStatus};
use num_complex::Complex64;
use proptest::prelude::*;

const FS: f64 = 48_000.0;

fn format() -> impl Strategy<Value = FixedFormat> {
    (0u32..6, 0u32..12).prop_map(|(m, n)| FixedFormat::new(m, n).unwrap())
}

fn rounding() -> impl Strategy<Value = RoundingMode> {
    prop::sample::select(RoundingMode::ALL.to_vec())
}

/// A filter whose coefficients are exact in `1,3`, `a_0` non-zero.
fn small_filter(max_b: usize, max_a: usize) -> impl Strategy<Value = QuantizedFilter> {
    let coeff = -16i64..16;
    (
        prop::collection::vec(coeff.clone(), 1..=max_b),
        prop::sample::select(vec![4i64, 8, 12, -8]),
        prop::collection::vec(coeff, 0..max_a),
    )
        .prop_map(|(b, a0, a_rest)| {
            let f: FixedFormat = "1,3".parse().unwrap();
            let real = |r: &i64| *r as f64 * f.lsb();
            let mut a = vec![real(&a0)];
            a.extend(a_rest.iter().map(real));
            let tf = TransferFunction::new(b.iter().map(real).collect(), a, FS).unwrap();
            quantize_filter(&tf, f, RoundingMode::Nearest).unwrap()
        })
}

fn inputs_for(f: FixedFormat, len: usize) -> impl Strategy<Value = Vec<FixedValue>> {
    prop::collection::vec(f.raw_min()..=f.raw_max(), len)
        .prop_map(move |raw| raw.into_iter().map(|r| FixedValue::from_raw(r, f).unwrap()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn representable_values_round_trip(f in format(), mode in rounding(), pick in any::<u64>()) {
        let span = (f.raw_max() - f.raw_min()) as u64 + 1;
        let raw = f.raw_min() + (pick % span) as i64;
        let x = raw as f64 * f.lsb();
        let q = quantize(x, f, mode, OverflowMode::Detect).unwrap();
        prop_assert_eq!(q.raw(), raw);
        prop_assert_eq!(q.to_f64(), x);
    }

    #[test]
    fn quantize_is_monotone(f in format(), mode in rounding(), x in -40.0f64..40.0, d in 0.0f64..5.0) {
        let q = |v| quantize(v, f, mode, OverflowMode::Saturate).unwrap().raw();
        prop_assert!(q(x) <= q(x + d));
    }

    #[test]
    fn quantize_error_bounds(f in format(), t in 0.0f64..1.0) {
        let x = f.v_min() + t * (f.v_max() - f.v_min());
        let lsb = f.lsb();
        let near = quantize(x, f, RoundingMode::Nearest, OverflowMode::Detect).unwrap().to_f64();
        prop_assert!((near - x).abs() <= lsb / 2.0);
        let trunc = quantize(x, f, RoundingMode::Truncate, OverflowMode::Detect).unwrap().to_f64();
        prop_assert!((trunc - x).abs() < lsb);
        prop_assert!(trunc.abs() <= x.abs());
        let floor = quantize(x, f, RoundingMode::Floor, OverflowMode::Detect).unwrap().to_f64();
        prop_assert!(floor <= x && x - floor < lsb);
    }

    #[test]
    fn wraparound_is_periodic(f in format(), wide in -1_000_000i128..1_000_000, k in -50i128..50) {
        let period = 1i128 << f.total_bits();
        let w = wrap_raw(wide, f);
        prop_assert_eq!(wrap_raw(wide + k * period, f), w);
        prop_assert!(f.contains_raw(w as i128));
        prop_assert_eq!((w as i128 - wide).rem_euclid(period), 0);
    }

    #[test]
    fn overflow_modes_agree_without_overflow(f in format(), mode in rounding(), a in any::<i64>(), b in any::<i64>()) {
        let span = (f.raw_max() - f.raw_min()) as i128 + 1;
        let val = |r: i64| {
            let raw = f.raw_min() as i128 + (r as i128).rem_euclid(span);
            FixedValue::from_raw(raw as i64, f).unwrap()
        };
        let (x, y) = (val(a), val(b));
        if let Ok(d) = fx_add(x, y, OverflowMode::Detect) {
            prop_assert_eq!(fx_add(x, y, OverflowMode::Saturate).unwrap(), d);
            prop_assert_eq!(fx_add(x, y, OverflowMode::Wraparound).unwrap(), d);
        }
        if let Ok(d) = fx_mul(x, y, mode, OverflowMode::Detect) {
            prop_assert_eq!(fx_mul(x, y, mode, OverflowMode::Saturate).unwrap(), d);
            prop_assert_eq!(fx_mul(x, y, mode, OverflowMode::Wraparound).unwrap(), d);
        }
    }

    #[test]
    fn fir_impulse_response_is_its_taps(taps in prop::collection::vec(-2.0f64..2.0, 1..12), extra in 0usize..8) {
        let tf = TransferFunction::fir(taps.clone(), FS).unwrap();
        let h = impulse_response(&tf, taps.len() + extra);
        prop_assert_eq!(&h[..taps.len()], &taps[..]);
        prop_assert!(h[taps.len()..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_response_is_linear(
        b in prop::collection::vec(-1.0f64..1.0, 1..4),
        a1 in -0.9f64..0.9,
        alpha in -4.0f64..4.0,
    ) {
        let tf = TransferFunction::new(b.clone(), vec![1.0, a1], FS).unwrap();
        let scaled = TransferFunction::new(b.iter().map(|v| v * alpha).collect(), vec![1.0, a1], FS).unwrap();
        let h = impulse_response(&tf, 32);
        let hs = impulse_response(&scaled, 32);
        for (x, y) in h.iter().zip(&hs) {
            prop_assert!((alpha * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn quantizing_a_representable_filter_is_identity(qf in small_filter(4, 3)) {
        let again = quantize_filter(&qf.to_transfer_function(), qf.format(), RoundingMode::Floor).unwrap();
        prop_assert_eq!(again.b(), qf.b());
        prop_assert_eq!(again.a(), qf.a());
    }

    #[test]
    fn butterworth_lowpass_highpass_mirror(fc in 100.0f64..23_900.0) {
        // z -> -z maps a lowpass at fc onto the highpass at fs/2 - fc
        let lp = design_butterworth2(ButterworthType::Lowpass, fc, FS).unwrap();
        let hp = design_butterworth2(ButterworthType::Highpass, FS / 2.0 - fc, FS).unwrap();
        let sign = |i: usize| if i.is_multiple_of(2) { 1.0 } else { -1.0 };
        for i in 0..3 {
            prop_assert!((hp.b()[i] - sign(i) * lp.b()[i]).abs() < 1e-9);
            prop_assert!((hp.a()[i] - sign(i) * lp.a()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn dtft_conjugate_symmetry(h in prop::collection::vec(-3.0f64..3.0, 1..64), extra in 0usize..64) {
        let n = h.len() + extra;
        let r = sampled_dtft(&h, n.max(2)).unwrap();
        for k in 1..r.grid() {
            prop_assert!((r.bin(r.grid() - k) - r.bin(k).conj()).norm() <= 1e-9);
        }
    }

    #[test]
    fn dtft_parseval(h in prop::collection::vec(-3.0f64..3.0, 2..128)) {
        let r = sampled_dtft(&h, h.len()).unwrap();
        let time: f64 = h.iter().map(|v| v * v).sum();
        let freq: f64 = r.bins().iter().map(|c| c.norm_sqr()).sum::<f64>() / h.len() as f64;
        prop_assert!((time - freq).abs() <= 1e-6 * (1.0 + time));
    }

    #[test]
    fn response_methods_agree_on_stable_sections(r in 0.05f64..0.9, theta in 0.0f64..PI, g in -2.0f64..2.0) {
        let a = vec![1.0, -2.0 * r * theta.cos(), r * r];
        let tf = TransferFunction::new(vec![g, 0.5 * g, 0.25], a, FS).unwrap();
        let t = response_of(&tf, 1024, ResponseMethod::ImpulseTruncation).unwrap();
        let e = response_of(&tf, 1024, ResponseMethod::RationalEval).unwrap();
        for k in 0..1024 {
            prop_assert!((t.bin(k) - e.bin(k)).norm() <= 1e-4);
        }
    }

    #[test]
    fn magnitude_witnesses_are_confirmed(
        mags in prop::collection::vec(0.0f64..1.5, 33),
        wp in 0.1f64..1.4,
        gap in 0.1f64..1.5,
        kind in prop::sample::select(vec![BandKind::Lowpass, BandKind::Highpass, BandKind::Bandpass]),
    ) {
        let grid = 64;
        let bins = (0..grid)
            .map(|k| Complex64::new(mags[k.min(grid - k)], 0.0))
            .collect();
        let resp = FrequencyResponse::new(bins, ResponseSource::Fixed);
        let spec = match kind {
            BandKind::Lowpass => FilterSpecBand::new(kind)
                .passband(Edge::Single(wp), -1.0)
                .cutoff(Edge::Single(wp + gap / 2.0), -3.0)
                .stopband(Edge::Single(wp + gap), -20.0),
            BandKind::Highpass => FilterSpecBand::new(kind)
                .stopband(Edge::Single(wp), -20.0)
                .cutoff(Edge::Single(wp + gap / 2.0), -3.0)
                .passband(Edge::Single(wp + gap), -1.0),
            BandKind::Bandpass => FilterSpecBand::new(kind)
                .stopband(Edge::Pair(wp * 0.5, wp + gap + 0.1), -20.0)
                .passband(Edge::Pair(wp, wp + gap), -1.0),
        };
        let v = check_magnitude(&resp, &spec).unwrap();
        prop_assert!(confirm_magnitude_witness(&resp, &v));
    }

    #[test]
    fn phase_witnesses_are_confirmed(h in prop::collection::vec(-1.0f64..1.0, 2..16), noise in prop::collection::vec(-0.3f64..0.3, 2..16), t in 0.01f64..1.0) {
        let ideal = sampled_dtft(&h, 32).unwrap();
        let perturbed: Vec<f64> = h.iter().zip(noise.iter().chain(std::iter::repeat(&0.0))).map(|(a, b)| a + b).collect();
        let fixed = sampled_dtft(&perturbed, 32).unwrap();
        let v = check_phase(&ideal, &fixed, t, &[]).unwrap();
        prop_assert!(confirm_phase_witness(&ideal, &fixed, &v));
        prop_assert_eq!(v.passed(), v.max_abs_delta_rad <= t);
    }

    #[test]
    fn db_round_trip(x in 1e-6f64..10.0) {
        prop_assert!((db_to_lin(lin_to_db(x)) - x).abs() <= 1e-12 * x.max(1.0));
    }

    #[test]
    fn stability_is_scale_invariant(c in prop::collection::vec(-2.0f64..2.0, 2..7), lead in 0.1f64..2.0, lambda in 0.01f64..100.0) {
        let mut coeffs = vec![lead];
        coeffs.extend(c);
        let p = CharPoly::new(coeffs.clone()).unwrap();
        let r = root_magnitude_oracle(&p).unwrap();
        prop_assume!((r - 1.0).abs() > 1e-6);
        let scaled = CharPoly::new(coeffs.iter().map(|v| v * lambda).collect()).unwrap();
        prop_assert_eq!(check_polynomial(&p).status, check_polynomial(&scaled).status);
    }

    #[test]
    fn reversal_flips_strict_stability(roots in prop::collection::vec((0.05f64..0.95, 0.0f64..PI), 1..4)) {
        // real polynomial from conjugate pairs strictly inside the unit circle
        let mut c = vec![1.0];
        for (r, th) in roots {
            let quad = [1.0, -2.0 * r * th.cos(), r * r];
            let mut next = vec![0.0; c.len() + 2];
            for (i, ci) in c.iter().enumerate() {
                for (j, qj) in quad.iter().enumerate() {
                    next[i + j] += ci * qj;
                }
            }
            c = next;
        }
        let p = CharPoly::new(c).unwrap();
        prop_assert_eq!(check_polynomial(&p).status, StabilityStatus::Stable);
        let rev = p.reversed().unwrap();
        prop_assert_eq!(check_polynomial(&rev).status, StabilityStatus::Unstable);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counterexamples_replay(qf in small_filter(3, 3), k in 1usize..=3) {
        let v = search_overflow(&qf, &SearchConfig::new(k, SearchStrategy::Exhaustive)).unwrap();
        if let Some(c) = &v.counterexample {
            prop_assert!(c.replays_on(&qf));
            prop_assert!(c.step < k);
            prop_assert_eq!(c.inputs.len(), c.step + 1);
        }
        let d = search_overflow(&qf, &SearchConfig { restarts: 8, ..SearchConfig::new(k, SearchStrategy::Directed) }).unwrap();
        if let Some(c) = &d.counterexample {
            prop_assert!(c.replays_on(&qf));
            // directed search is sound, so the complete search must agree
            prop_assert!(v.found());
            prop_assert!(c.step >= v.counterexample.as_ref().unwrap().step);
        }
    }

    #[test]
    fn modes_agree_when_nothing_overflows(qf in small_filter(3, 3), inputs in inputs_for("1,3".parse().unwrap(), 6)) {
        if let SimulationOutcome::Completed(det) = simulate_fixed(&qf, &inputs, OverflowMode::Detect).unwrap() {
            for mode in [OverflowMode::Saturate, OverflowMode::Wraparound] {
                let SimulationOutcome::Completed(run) = simulate_fixed(&qf, &inputs, mode).unwrap() else {
                    return Err(TestCaseError::fail("non-detect runs always complete"));
                };
                prop_assert_eq!(&run.steps, &det.steps);
            }
        }
    }

    #[test]
    fn violations_persist_at_longer_horizons(qf in small_filter(3, 2), k in 1usize..=3) {
        let short = search_overflow(&qf, &SearchConfig::new(k, SearchStrategy::Exhaustive)).unwrap();
        let long = search_overflow(&qf, &SearchConfig::new(k + 1, SearchStrategy::Exhaustive)).unwrap();
        if short.found() {
            prop_assert_eq!(short.counterexample, long.counterexample);
        } else if let Some(c) = long.counterexample {
            prop_assert_eq!(c.step, k);
        }
    }
}

/// Rounding noise makes single-bit steps non-monotone (lp2 gets worse from
/// 12 to 13 fractional bits), so the grid deviation is compared four bits apart.
#[test]
fn refinement_reduces_deviation_on_fixtures() {
    for fx in fixtures::all() {
        let ideal = response_of(&fx.filter, 1024, ResponseMethod::RationalEval).unwrap();
        let mut devs = Vec::new();
        let mut previous: Option<QuantizedFilter> = None;
        for n in 6..=20 {
            let f = FixedFormat::new(4, n).unwrap();
            let qf = quantize_filter(&fx.filter, f, RoundingMode::Nearest).unwrap();
            if let Some(prev) = &previous {
                let coarse = prev.b_real().into_iter().chain(prev.a_real());
                let fine = qf.b_real().into_iter().chain(qf.a_real());
                for (c, q) in coarse.zip(fine) {
                    assert!((c - q).abs() <= prev.format().lsb(), "{} n={n}", fx.name);
                }
            }
            let fixed = response_of(&qf.to_transfer_function(), 1024, ResponseMethod::RationalEval).unwrap();
            let dev = (0..=512)
                .map(|k| (fixed.magnitude(k) - ideal.magnitude(k)).abs())
                .fold(0.0, f64::max);
            devs.push(dev);
            previous = Some(qf);
        }
        for (i, pair) in devs.windows(5).enumerate() {
            assert!(
                pair[4] <= pair[0],
                "{}: deviation at n={} exceeds n={}",
                fx.name,
                i + 10,
                i + 6
            );
        }
    }
}

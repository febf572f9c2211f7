//! Bundled filters with matching design specs, sampled at 48 kHz.

use serde::{Deserialize, Serialize};

use crate::filtermodel::{
    design_butterworth2, design_fir_hann, design_fir_movingavg, ButterworthType, FilterError, TransferFunction,
};
use crate::response::{BandKind, Edge, FilterSpecBand, FilterSpecHz, ResponseError};

pub const FIXTURE_FS_HZ: f64 = 48_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub description: String,
    pub filter: TransferFunction,
    pub spec: FilterSpecHz,
}

impl Fixture {
    pub fn band_spec(&self) -> Result<FilterSpecBand, ResponseError> {
        self.spec.to_band(self.filter.fs_hz())
    }
}

pub const NAMES: [&str; 7] = ["lp2", "hp2", "lp8", "bp4", "fir_ma4", "fir_hann10", "fir_sum2"];

fn fixture(name: &str, description: &str, filter: TransferFunction, spec: FilterSpecHz) -> Fixture {
    Fixture {
        name: name.into(),
        description: description.into(),
        filter,
        spec,
    }
}

fn butter(kind: ButterworthType, fc_hz: f64) -> Result<TransferFunction, FilterError> {
    design_butterworth2(kind, fc_hz, FIXTURE_FS_HZ)
}

fn spec(
    kind: BandKind,
    wp: Option<Edge>,
    wr: Option<Edge>,
    wc: Option<Edge>,
    gains: (Option<f64>, Option<f64>, Option<f64>),
    phase: Option<f64>,
) -> FilterSpecHz {
    FilterSpecHz {
        kind,
        wp_hz: wp,
        wr_hz: wr,
        wc_hz: wc,
        ap_db: gains.0,
        ar_db: gains.1,
        ac_db: gains.2,
        phase_threshold_rad: phase,
    }
}

/// 2nd-order Butterworth lowpass at 9.6 kHz.
pub fn lp2() -> Fixture {
    fixture(
        "lp2",
        "2nd-order Butterworth lowpass, fc = 9.6 kHz",
        butter(ButterworthType::Lowpass, 9600.0).expect("valid design"),
        spec(
            BandKind::Lowpass,
            Some(Edge::Single(6720.0)),
            Some(Edge::Single(17280.0)),
            Some(Edge::Single(9600.0)),
            (Some(-1.0), Some(-18.0), Some(-3.0)),
            Some(0.1),
        ),
    )
}

/// 2nd-order Butterworth highpass at 9.6 kHz.
pub fn hp2() -> Fixture {
    fixture(
        "hp2",
        "2nd-order Butterworth highpass, fc = 9.6 kHz",
        butter(ButterworthType::Highpass, 9600.0).expect("valid design"),
        spec(
            BandKind::Highpass,
            Some(Edge::Single(16000.0)),
            Some(Edge::Single(4800.0)),
            Some(Edge::Single(9600.0)),
            (Some(-1.0), Some(-10.0), Some(-3.2)),
            Some(0.1),
        ),
    )
}

/// Four cascaded Butterworth lowpass sections at 12 kHz: order 8 with a
/// deep stopband requirement.
pub fn lp8() -> Fixture {
    let section = butter(ButterworthType::Lowpass, 12000.0).expect("valid design");
    let mut filter = section.clone();
    for _ in 0..3 {
        filter = filter.cascade(&section).expect("same sample rate");
    }
    fixture(
        "lp8",
        "8th-order lowpass, four Butterworth sections at 12 kHz",
        filter,
        spec(
            BandKind::Lowpass,
            Some(Edge::Single(6000.0)),
            Some(Edge::Single(20400.0)),
            None,
            (Some(-1.0), Some(-80.0), None),
            None,
        ),
    )
}

/// Butterworth lowpass at 16.8 kHz cascaded with a highpass at 7.2 kHz.
pub fn bp4() -> Fixture {
    let lp = butter(ButterworthType::Lowpass, 16800.0).expect("valid design");
    let hp = butter(ButterworthType::Highpass, 7200.0).expect("valid design");
    fixture(
        "bp4",
        "4th-order bandpass, Butterworth lowpass 16.8 kHz times highpass 7.2 kHz",
        lp.cascade(&hp).expect("same sample rate"),
        spec(
            BandKind::Bandpass,
            Some(Edge::Pair(9600.0, 14400.0)),
            Some(Edge::Pair(2400.0, 21600.0)),
            None,
            (Some(-3.0), Some(-20.0), None),
            None,
        ),
    )
}

pub fn fir_ma4() -> Fixture {
    fixture(
        "fir_ma4",
        "4-tap moving average",
        design_fir_movingavg(4, FIXTURE_FS_HZ).expect("valid design"),
        spec(
            BandKind::Lowpass,
            Some(Edge::Single(2000.0)),
            Some(Edge::Single(12000.0)),
            None,
            (Some(-1.0), Some(-10.0), None),
            None,
        ),
    )
}

pub fn fir_hann10() -> Fixture {
    fixture(
        "fir_hann10",
        "order-10 Hann-windowed sinc lowpass, fc = 12 kHz",
        design_fir_hann(10, 12000.0, FIXTURE_FS_HZ).expect("valid design"),
        spec(
            BandKind::Lowpass,
            Some(Edge::Single(4800.0)),
            Some(Edge::Single(19200.0)),
            None,
            (Some(-1.0), Some(-40.0), None),
            None,
        ),
    )
}

/// Two unit taps: gain 2 at DC, so the output register overflows.
pub fn fir_sum2() -> Fixture {
    fixture(
        "fir_sum2",
        "2-tap sum b = [1, 1]",
        TransferFunction::fir(vec![1.0, 1.0], FIXTURE_FS_HZ).expect("valid taps"),
        spec(
            BandKind::Lowpass,
            Some(Edge::Single(4800.0)),
            Some(Edge::Single(20000.0)),
            None,
            (Some(-1.0), Some(-5.0), None),
            None,
        ),
    )
}

pub fn all() -> Vec<Fixture> {
    vec![lp2(), hp2(), lp8(), bp4(), fir_ma4(), fir_hann10(), fir_sum2()]
}

pub fn by_name(name: &str) -> Option<Fixture> {
    all().into_iter().find(|f| f.name == name)
}

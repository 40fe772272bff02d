//! Error kinds reported on stderr as `error: kind=<Kind> msg="<text>"`.

use std::fmt;

use maicas_core::calibration::CalibrationError;
use maicas_core::circuit::CircuitError;
use maicas_core::dsp::DspError;
use maicas_core::geometry::GeometryError;
use maicas_core::readout::ReadoutError;
use maicas_core::scenarios::ScenarioError;
use maicas_core::telemetry::{FrameError, GatewayError};

#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub msg: String,
}

impl Failure {
    pub fn new(kind: &'static str, msg: impl Into<String>) -> Self {
        Self {
            kind,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: kind={} msg={:?}", self.kind, self.msg)
    }
}

fn geometry_kind(e: &GeometryError) -> &'static str {
    match e {
        GeometryError::InvalidParameter(_) => "InvalidParameter",
        GeometryError::OutOfModelRange { .. } => "OutOfModelRange",
    }
}

fn readout_kind(e: &ReadoutError) -> &'static str {
    match e {
        ReadoutError::NonPositiveFrequency(_) => "NonPositiveFrequency",
        ReadoutError::InvalidGrid(_) => "InvalidGrid",
        ReadoutError::InvalidReader(_) => "InvalidReader",
        ReadoutError::NotPassive { .. } => "NotPassive",
        ReadoutError::InvalidSigma(_) => "InvalidSigma",
        ReadoutError::Parse { .. } => "Parse",
        ReadoutError::Io(_) => "Io",
        ReadoutError::Csv(_) => "Csv",
    }
}

fn circuit_kind(e: &CircuitError) -> &'static str {
    match e {
        CircuitError::Domain(_) => "Domain",
        CircuitError::Geometry(g) => geometry_kind(g),
        CircuitError::Readout(r) => readout_kind(r),
        CircuitError::CalibrationFailed { .. } => "CalibrationFailed",
    }
}

fn calibration_kind(e: &CalibrationError) -> &'static str {
    match e {
        CalibrationError::DegenerateInput(_) => "DegenerateInput",
        CalibrationError::DegenerateModel => "DegenerateModel",
        CalibrationError::IncompleteCycle(_) => "IncompleteCycle",
        CalibrationError::Io(_) => "Io",
        CalibrationError::Csv(_) => "Csv",
        CalibrationError::Json(_) => "Json",
    }
}

macro_rules! from_error {
    ($ty:ty, $kind:expr) => {
        impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                let kind: fn(&$ty) -> &'static str = $kind;
                Failure::new(kind(&e), e.to_string())
            }
        }
    };
}

from_error!(GeometryError, geometry_kind);
from_error!(ReadoutError, readout_kind);
from_error!(CircuitError, circuit_kind);
from_error!(CalibrationError, calibration_kind);
from_error!(std::io::Error, |_| "Io");
from_error!(serde_json::Error, |_| "Json");
from_error!(DspError, |e| match e {
    DspError::NoResonance { .. } => "NoResonance",
    DspError::GridTooCoarse { .. } => "GridTooCoarse",
    DspError::TooFewPoints(_) => "TooFewPoints",
});
from_error!(FrameError, |e| match e {
    FrameError::BadMagic(_) => "BadMagic",
    FrameError::UnsupportedVersion(_) => "UnsupportedVersion",
    FrameError::ChecksumMismatch { .. } => "ChecksumMismatch",
    FrameError::MalformedLength(_) => "MalformedLength",
    FrameError::InvalidGrid(_) => "InvalidGrid",
});
from_error!(GatewayError, |e| match e {
    GatewayError::BadLog { .. } => "BadLog",
    GatewayError::Unreachable(_) => "Unreachable",
    GatewayError::Io(_) => "Io",
    GatewayError::Json(_) => "Json",
});
from_error!(ScenarioError, |e| match e {
    ScenarioError::Config(_) => "Config",
    ScenarioError::Geometry(g) => geometry_kind(g),
    ScenarioError::Circuit(c) => circuit_kind(c),
    ScenarioError::Readout(r) => readout_kind(r),
    ScenarioError::Calibration(c) => calibration_kind(c),
    ScenarioError::CalibrationFailed { .. } => "CalibrationFailed",
    ScenarioError::Io(_) => "Io",
    ScenarioError::Csv(_) => "Csv",
    ScenarioError::Json(_) => "Json",
});

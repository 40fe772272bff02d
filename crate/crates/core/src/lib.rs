//! Digital twin of a passive, wirelessly interrogated LC deformation sensor.
//!
//! The pipeline runs from device geometry and deformation through a lumped
//! RLC tank and an inductively coupled reader to a reflection sweep, then
//! back through dip extraction and a linear calibration to the measurand.

pub mod calibration;
pub mod circuit;
pub mod dsp;
pub mod elliptic;
pub mod geometry;
pub mod readout;
pub mod scenarios;
pub mod telemetry;

//! Lumped-element extraction: IDE capacitance, loop inductance, series loss
//! and the resulting resonance of the sensor tank.

mod calibrate;
pub mod ide;
pub mod inductor;

pub use calibrate::{
    calibrate_baseline, BaselineFit, CalibrationBounds, DEFAULT_TARGET_DEPTH_DB,
    DEFAULT_TARGET_F0_HZ,
};
pub use ide::{ide_capacitance, ide_capacitance_parts, IdeCapacitance, EPSILON_0};
pub use inductor::loop_inductance;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{apply_strain, strain_of, DeformationState, DeviceGeometry, GeometryError};
use crate::readout::ReadoutError;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error(
        "calibration failed: {reason} (best f0 residual {f0_residual_hz:.3e} Hz, depth residual {depth_residual_db:.3} dB)"
    )]
    CalibrationFailed {
        reason: String,
        f0_residual_hz: f64,
        depth_residual_db: f64,
    },
}

/// `1 / (2π sqrt(L C))`.
pub fn resonance_frequency(inductance: f64, capacitance: f64) -> Result<f64, CircuitError> {
    if !(inductance.is_finite() && inductance > 0.0) {
        return Err(CircuitError::Domain(format!(
            "inductance must be > 0, got {inductance}"
        )));
    }
    if !(capacitance.is_finite() && capacitance > 0.0) {
        return Err(CircuitError::Domain(format!(
            "capacitance must be > 0, got {capacitance}"
        )));
    }
    Ok(1.0 / (2.0 * PI * (inductance * capacitance).sqrt()))
}

/// Series R-L-C equivalent of the sensor. Resonance and Q are derived on
/// demand from the stored elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LumpedCircuit {
    pub inductance: f64,
    pub capacitance: f64,
    pub resistance: f64,
}

impl LumpedCircuit {
    pub fn new(inductance: f64, capacitance: f64, resistance: f64) -> Result<Self, CircuitError> {
        resonance_frequency(inductance, capacitance)?;
        if !(resistance.is_finite() && resistance >= 0.0) {
            return Err(CircuitError::Domain(format!(
                "resistance must be >= 0, got {resistance}"
            )));
        }
        Ok(Self {
            inductance,
            capacitance,
            resistance,
        })
    }

    pub fn resonance_frequency(&self) -> f64 {
        1.0 / (2.0 * PI * (self.inductance * self.capacitance).sqrt())
    }

    /// `ω₀ L / R`; infinite for a lossless tank.
    pub fn quality_factor(&self) -> f64 {
        2.0 * PI * self.resonance_frequency() * self.inductance / self.resistance
    }

    /// Same tank with an extra shunt-equivalent capacitance in parallel with C.
    pub fn with_added_capacitance(&self, extra: f64) -> Result<Self, CircuitError> {
        Self::new(self.inductance, self.capacitance + extra, self.resistance)
    }
}

/// Per-device constants that absorb what the closed-form models leave out.
/// Produced once by [`calibrate_baseline`] and then treated as frozen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelCalibration {
    pub eff_permittivity_scale: f64,
    #[serde(rename = "parasitic_C_offset")]
    pub parasitic_c_offset: f64,
    pub ide_finger_count: u32,
    /// Finger overlap length in µm.
    pub ide_finger_length: f64,
    #[serde(rename = "loss_R")]
    pub loss_r: f64,
}

impl Default for ModelCalibration {
    fn default() -> Self {
        Self {
            eff_permittivity_scale: 1.0,
            parasitic_c_offset: 0.02e-12,
            ide_finger_count: 4,
            ide_finger_length: 1500.0,
            loss_r: 2.0,
        }
    }
}

impl ModelCalibration {
    pub fn validate(&self) -> Result<(), CircuitError> {
        let positive = [
            ("eff_permittivity_scale", self.eff_permittivity_scale),
            ("parasitic_C_offset", self.parasitic_c_offset),
            ("ide_finger_length", self.ide_finger_length),
            ("loss_R", self.loss_r),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CircuitError::Domain(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.ide_finger_count < 2 {
            return Err(CircuitError::Domain("ide_finger_count must be >= 2".into()));
        }
        Ok(())
    }

    /// Device geometry with the calibrated comb dimensions substituted.
    pub fn calibrated_device(&self, device: &DeviceGeometry) -> DeviceGeometry {
        let mut out = *device;
        out.ide.finger_count = self.ide_finger_count;
        out.ide.finger_length_um = self.ide_finger_length;
        out
    }
}

/// Tank elements of `device` under `state`.
pub fn lumped_from_geometry(
    device: &DeviceGeometry,
    state: &DeformationState,
    cal: &ModelCalibration,
) -> Result<LumpedCircuit, CircuitError> {
    cal.validate()?;
    let base = cal.calibrated_device(device);
    base.validate()?;
    let strain = strain_of(state, &base)?;
    lumped_at_strain(&base, strain, cal)
}

/// Tank elements of an already-calibrated device at the given strain.
pub(crate) fn lumped_at_strain(
    calibrated: &DeviceGeometry,
    strain: f64,
    cal: &ModelCalibration,
) -> Result<LumpedCircuit, CircuitError> {
    let deformed = apply_strain(calibrated, strain)?;
    let c_ide = ide_capacitance(&deformed.ide, &deformed.stack)?;
    let inductance = loop_inductance(&deformed.loop_, deformed.stack.metal_thickness_um)?;
    let capacitance = cal.eff_permittivity_scale * c_ide + cal.parasitic_c_offset;
    LumpedCircuit::new(inductance, capacitance, cal.loss_r)
}

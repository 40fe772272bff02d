//! One-time baseline calibration of the tank and reader coupling against a
//! measured rest resonance and dip depth.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ide_capacitance, loop_inductance, CircuitError, LumpedCircuit, ModelCalibration};
use crate::geometry::DeviceGeometry;
use crate::readout::{tank_dip, ReaderCouple};

/// Rest resonance of the unrolled sensor in air.
pub const DEFAULT_TARGET_F0_HZ: f64 = 1.71e9;
/// Rest dip depth of the unrolled sensor in air.
pub const DEFAULT_TARGET_DEPTH_DB: f64 = -14.0;

const F0_TOL_HZ: f64 = 1e3;
const DEPTH_TOL_DB: f64 = 1e-3;
const MAX_ROUNDS: usize = 50;

/// Search box and budget for [`calibrate_baseline`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationBounds {
    pub eff_permittivity_scale: (f64, f64),
    pub coupling: (f64, f64),
    pub max_evaluations: usize,
}

impl Default for CalibrationBounds {
    fn default() -> Self {
        Self {
            eff_permittivity_scale: (0.05, 20.0),
            coupling: (1e-4, 0.95),
            max_evaluations: 10_000,
        }
    }
}

/// Result of a successful baseline calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineFit {
    pub calibration: ModelCalibration,
    pub reader: ReaderCouple,
    /// Location of the modelled reflection dip at rest.
    pub dip_frequency_hz: f64,
    /// Depth of the modelled reflection dip at rest (negative dB).
    pub dip_depth_db: f64,
    pub f0_residual_hz: f64,
    pub depth_residual_db: f64,
    pub evaluations: usize,
}

struct Search<'a> {
    device: &'a DeviceGeometry,
    c_ide: f64,
    inductance: f64,
    evaluations: usize,
    budget: usize,
    best: (f64, f64),
}

impl Search<'_> {
    fn tank(&self, cal: &ModelCalibration) -> Result<LumpedCircuit, CircuitError> {
        LumpedCircuit::new(
            self.inductance,
            cal.eff_permittivity_scale * self.c_ide + cal.parasitic_c_offset,
            cal.loss_r,
        )
    }

    /// Dip location and depth of the rest-state spectrum.
    fn dip(
        &mut self,
        cal: &ModelCalibration,
        reader: &ReaderCouple,
    ) -> Result<(f64, f64), CircuitError> {
        self.evaluations += 1;
        if self.evaluations > self.budget {
            return Err(self.fail("evaluation budget exhausted"));
        }
        Ok(tank_dip(&self.tank(cal)?, reader))
    }

    fn record(&mut self, f_res: f64, d_res: f64) {
        if f_res.abs() + 1e6 * d_res.abs() < self.best.0.abs() + 1e6 * self.best.1.abs() {
            self.best = (f_res, d_res);
        }
    }

    fn fail(&self, reason: &str) -> CircuitError {
        CircuitError::CalibrationFailed {
            reason: format!(
                "{reason} (device loop {} mm)",
                self.device.loop_.outer_side_mm
            ),
            f0_residual_hz: self.best.0,
            depth_residual_db: self.best.1,
        }
    }
}

/// Fit the effective permittivity scale and the reader coupling so the rest
/// state reproduces `target_f0` and `target_depth_db`.
///
/// The search alternates two bracketed one-dimensional solves: the scale is
/// set in closed form so the dip lands on the target, then the coupling is
/// bisected on the under-coupled branch for the depth. Starting values come
/// from `initial` and `reader`; if they already satisfy both targets they are
/// returned untouched.
pub fn calibrate_baseline(
    device: &DeviceGeometry,
    target_f0: f64,
    target_depth_db: f64,
    bounds: &CalibrationBounds,
    initial: &ModelCalibration,
    reader: &ReaderCouple,
) -> Result<BaselineFit, CircuitError> {
    initial.validate()?;
    reader.validate()?;
    if !(target_f0.is_finite() && target_f0 > 0.0) {
        return Err(CircuitError::Domain(format!(
            "target f0 must be > 0, got {target_f0}"
        )));
    }
    if !(target_depth_db.is_finite() && target_depth_db < 0.0) {
        return Err(CircuitError::Domain(format!(
            "target depth must be negative dB, got {target_depth_db}"
        )));
    }
    let base = initial.calibrated_device(device);
    base.validate()?;
    let mut search = Search {
        device,
        c_ide: ide_capacitance(&base.ide, &base.stack)?,
        inductance: loop_inductance(&base.loop_, base.stack.metal_thickness_um)?,
        evaluations: 0,
        budget: bounds.max_evaluations,
        best: (f64::INFINITY, f64::INFINITY),
    };

    let mut cal = *initial;
    let mut reader = *reader;
    let (mut dip_f, mut dip_db) = search.dip(&cal, &reader)?;
    search.record(dip_f - target_f0, dip_db - target_depth_db);

    for _ in 0..MAX_ROUNDS {
        if (dip_f - target_f0).abs() <= F0_TOL_HZ
            && (dip_db - target_depth_db).abs() <= DEPTH_TOL_DB
        {
            return Ok(BaselineFit {
                calibration: cal,
                reader,
                dip_frequency_hz: dip_f,
                dip_depth_db: dip_db,
                f0_residual_hz: dip_f - target_f0,
                depth_residual_db: dip_db - target_depth_db,
                evaluations: search.evaluations,
            });
        }

        // Place the dip: shift the tank resonance by the current dip offset.
        let f0 = search.tank(&cal)?.resonance_frequency();
        let wanted_f0 = target_f0 - (dip_f - f0);
        let wanted_c = 1.0 / ((2.0 * PI * wanted_f0).powi(2) * search.inductance);
        let scale = (wanted_c - cal.parasitic_c_offset) / search.c_ide;
        let (lo, hi) = bounds.eff_permittivity_scale;
        if !(scale >= lo && scale <= hi) {
            return Err(search.fail(&format!(
                "permittivity scale {scale:.4e} needed for {target_f0:.6e} Hz lies outside [{lo}, {hi}]"
            )));
        }
        cal.eff_permittivity_scale = scale;

        // Depth: bisect the coupling between the lower bound and the
        // critical (deepest) coupling.
        reader.coupling_coefficient =
            fit_coupling(&mut search, &cal, &reader, target_depth_db, bounds.coupling)?;
        (dip_f, dip_db) = search.dip(&cal, &reader)?;
        search.record(dip_f - target_f0, dip_db - target_depth_db);
    }
    Err(search.fail("no convergence"))
}

fn fit_coupling(
    search: &mut Search<'_>,
    cal: &ModelCalibration,
    reader: &ReaderCouple,
    target_db: f64,
    (k_lo, k_hi): (f64, f64),
) -> Result<f64, CircuitError> {
    let depth = |s: &mut Search<'_>, k: f64| -> Result<f64, CircuitError> {
        Ok(s.dip(cal, &reader.with_coupling(k))?.1)
    };

    // golden-section for the critical coupling (deepest dip), in log k
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (k_lo.ln(), k_hi.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = depth(search, c.exp())?;
    let mut fd = depth(search, d.exp())?;
    while b - a > 1e-4 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = depth(search, c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = depth(search, d.exp())?;
        }
    }
    let k_crit = (0.5 * (a + b)).exp();
    let deepest = depth(search, k_crit)?;
    if deepest > target_db {
        return Err(search.fail(&format!(
            "deepest reachable dip {deepest:.2} dB is shallower than {target_db} dB"
        )));
    }
    if depth(search, k_lo)? < target_db {
        return Err(search.fail("dip deeper than target even at the minimum coupling"));
    }

    let (mut lo, mut hi) = (k_lo.ln(), k_crit.ln());
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let v = depth(search, mid.exp())?;
        if (v - target_db).abs() < DEPTH_TOL_DB * 0.1 {
            return Ok(mid.exp());
        }
        if v > target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

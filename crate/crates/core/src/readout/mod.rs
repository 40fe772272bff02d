//! One-port reflection seen by a reader loop inductively coupled to the
//! sensor tank, plus a seeded dB-domain noise model.

mod sweep_io;

pub use sweep_io::{read_csv, read_touchstone, write_csv, write_touchstone, SweepFormat};

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::LumpedCircuit;

/// Tolerance on the passivity bound `|S11| <= 0 dB`.
pub const PASSIVITY_EPS_DB: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ReadoutError {
    #[error("frequency must be > 0, got {0}")]
    NonPositiveFrequency(f64),
    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
    #[error("invalid reader: {0}")]
    InvalidReader(String),
    #[error("sample {index} is {value} dB, above 0 dB for a passive one-port")]
    NotPassive { index: usize, value: f64 },
    #[error("noise sigma must be >= 0, got {0}")]
    InvalidSigma(f64),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Lumped model of the external interrogation loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReaderCouple {
    pub reader_inductance: f64,
    pub reader_resistance: f64,
    pub coupling_coefficient: f64,
    pub reference_impedance: f64,
}

impl Default for ReaderCouple {
    fn default() -> Self {
        Self {
            reader_inductance: 1e-9,
            reader_resistance: 0.0,
            coupling_coefficient: 0.1,
            reference_impedance: 50.0,
        }
    }
}

impl ReaderCouple {
    pub fn validate(&self) -> Result<(), ReadoutError> {
        let bad = |m: String| Err(ReadoutError::InvalidReader(m));
        if !(self.reader_inductance.is_finite() && self.reader_inductance > 0.0) {
            return bad(format!(
                "reader inductance must be > 0, got {}",
                self.reader_inductance
            ));
        }
        if !(self.reader_resistance.is_finite() && self.reader_resistance >= 0.0) {
            return bad(format!(
                "reader resistance must be >= 0, got {}",
                self.reader_resistance
            ));
        }
        if !(0.0..1.0).contains(&self.coupling_coefficient) {
            return bad(format!(
                "coupling must lie in [0, 1), got {}",
                self.coupling_coefficient
            ));
        }
        if !(self.reference_impedance.is_finite() && self.reference_impedance > 0.0) {
            return bad(format!("Z0 must be > 0, got {}", self.reference_impedance));
        }
        Ok(())
    }

    pub fn with_coupling(self, k: f64) -> Self {
        Self {
            coupling_coefficient: k,
            ..self
        }
    }
}

/// Reflection magnitudes on a uniform frequency grid, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S11Sweep {
    f_start: f64,
    f_stop: f64,
    magnitude_db: Vec<f64>,
}

impl S11Sweep {
    pub fn new(f_start: f64, f_stop: f64, magnitude_db: Vec<f64>) -> Result<Self, ReadoutError> {
        validate_grid(f_start, f_stop, magnitude_db.len())?;
        if let Some((index, &value)) = magnitude_db
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v > PASSIVITY_EPS_DB)
        {
            return Err(ReadoutError::NotPassive { index, value });
        }
        Ok(Self {
            f_start,
            f_stop,
            magnitude_db,
        })
    }

    pub fn f_start(&self) -> f64 {
        self.f_start
    }

    pub fn f_stop(&self) -> f64 {
        self.f_stop
    }

    pub fn n_points(&self) -> usize {
        self.magnitude_db.len()
    }

    pub fn magnitude_db(&self) -> &[f64] {
        &self.magnitude_db
    }

    pub fn step(&self) -> f64 {
        (self.f_stop - self.f_start) / (self.n_points() - 1) as f64
    }

    pub fn frequency(&self, index: usize) -> f64 {
        if index + 1 == self.n_points() {
            self.f_stop
        } else {
            self.f_start + index as f64 * self.step()
        }
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points()).map(|i| self.frequency(i))
    }
}

fn validate_grid(f_start: f64, f_stop: f64, n_points: usize) -> Result<(), ReadoutError> {
    if !(f_start.is_finite() && f_stop.is_finite() && f_start >= 0.0 && f_stop > f_start) {
        return Err(ReadoutError::InvalidGrid(format!(
            "need 0 <= f_start < f_stop, got {f_start}..{f_stop}"
        )));
    }
    if n_points < 2 {
        return Err(ReadoutError::InvalidGrid(format!(
            "need at least 2 points, got {n_points}"
        )));
    }
    Ok(())
}

/// Input impedance of the reader loop with the sensor tank coupled through
/// mutual inductance `M = k sqrt(L_r L)`.
pub fn input_impedance(
    sensor: &LumpedCircuit,
    reader: &ReaderCouple,
    f: f64,
) -> Result<Complex64, ReadoutError> {
    if !(f.is_finite() && f > 0.0) {
        return Err(ReadoutError::NonPositiveFrequency(f));
    }
    Ok(impedance_unchecked(sensor, reader, f))
}

fn impedance_unchecked(sensor: &LumpedCircuit, reader: &ReaderCouple, f: f64) -> Complex64 {
    let omega = 2.0 * PI * f;
    let reader_z = Complex64::new(reader.reader_resistance, omega * reader.reader_inductance);
    if reader.coupling_coefficient == 0.0 {
        return reader_z;
    }
    let mutual =
        reader.coupling_coefficient * (reader.reader_inductance * sensor.inductance).sqrt();
    let sensor_z = Complex64::new(
        sensor.resistance,
        omega * sensor.inductance - 1.0 / (omega * sensor.capacitance),
    );
    reader_z + (omega * mutual).powi(2) / sensor_z
}

/// Reflection coefficient `(Z_in - Z0) / (Z_in + Z0)`.
pub fn reflection(
    sensor: &LumpedCircuit,
    reader: &ReaderCouple,
    f: f64,
) -> Result<Complex64, ReadoutError> {
    let z = input_impedance(sensor, reader, f)?;
    let z0 = reader.reference_impedance;
    Ok((z - z0) / (z + z0))
}

fn magnitude_db_at(sensor: &LumpedCircuit, reader: &ReaderCouple, f: f64) -> f64 {
    if f <= 0.0 {
        // DC: the loop is a short, total reflection
        return 0.0;
    }
    let z = impedance_unchecked(sensor, reader, f);
    let z0 = reader.reference_impedance;
    let gamma = ((z - z0) / (z + z0)).norm();
    (20.0 * gamma.log10()).min(0.0)
}

/// |S11| in dB at a single frequency.
pub fn s11_db(sensor: &LumpedCircuit, reader: &ReaderCouple, f: f64) -> Result<f64, ReadoutError> {
    if !(f.is_finite() && f > 0.0) {
        return Err(ReadoutError::NonPositiveFrequency(f));
    }
    Ok(magnitude_db_at(sensor, reader, f))
}

/// Synthesize |S11| in dB over a uniform grid.
pub fn s11_spectrum(
    sensor: &LumpedCircuit,
    reader: &ReaderCouple,
    f_start: f64,
    f_stop: f64,
    n_points: usize,
) -> Result<S11Sweep, ReadoutError> {
    validate_grid(f_start, f_stop, n_points)?;
    reader.validate()?;
    let step = (f_stop - f_start) / (n_points - 1) as f64;
    let mags = (0..n_points)
        .map(|i| {
            let f = if i + 1 == n_points {
                f_stop
            } else {
                f_start + i as f64 * step
            };
            magnitude_db_at(sensor, reader, f)
        })
        .collect();
    S11Sweep::new(f_start, f_stop, mags)
}

/// Location and depth of the reflection minimum of the continuous model
/// inside `[lo, hi]`, found by a dense scan followed by golden-section search.
pub fn analytic_dip(sensor: &LumpedCircuit, reader: &ReaderCouple, lo: f64, hi: f64) -> (f64, f64) {
    let eval = |f: f64| magnitude_db_at(sensor, reader, f);
    let n = 2000;
    let step = (hi - lo) / n as f64;
    let mut best = 0usize;
    let mut best_v = f64::INFINITY;
    for i in 0..=n {
        let v = eval(lo + i as f64 * step);
        if v < best_v {
            best_v = v;
            best = i;
        }
    }
    let mut a = lo + best.saturating_sub(1) as f64 * step;
    let mut b = (lo + (best + 1) as f64 * step).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-3 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d);
        }
    }
    let f = 0.5 * (a + b);
    (f, eval(f))
}

/// [`analytic_dip`] searched in a window around the tank resonance sized by
/// its quality factor.
pub fn tank_dip(sensor: &LumpedCircuit, reader: &ReaderCouple) -> (f64, f64) {
    let f0 = sensor.resonance_frequency();
    let half_width = (8.0 / sensor.quality_factor()).clamp(0.01, 0.3);
    analytic_dip(
        sensor,
        reader,
        f0 * (1.0 - half_width),
        f0 * (1.0 + half_width),
    )
}

/// Add i.i.d. Gaussian noise of standard deviation `sigma_db` to every sample,
/// clamping at 0 dB. The generator is seeded from `seed` on every call.
pub fn add_noise(sweep: &S11Sweep, sigma_db: f64, seed: u64) -> Result<S11Sweep, ReadoutError> {
    if !(sigma_db.is_finite() && sigma_db >= 0.0) {
        return Err(ReadoutError::InvalidSigma(sigma_db));
    }
    if sigma_db == 0.0 {
        return Ok(sweep.clone());
    }
    let normal = Normal::new(0.0, sigma_db).map_err(|_| ReadoutError::InvalidSigma(sigma_db))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mags = sweep
        .magnitude_db
        .iter()
        .map(|&m| (m + normal.sample(&mut rng)).min(0.0))
        .collect();
    Ok(S11Sweep {
        magnitude_db: mags,
        ..sweep.clone()
    })
}

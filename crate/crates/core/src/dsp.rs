//! Resonance-dip extraction from reflection sweeps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::readout::S11Sweep;

/// Default minimum dip depth below the sweep median.
pub const DEFAULT_MIN_DEPTH_DB: f64 = 3.0;
const SMOOTH_WINDOW: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("no resonance: dip depth {depth_db:.3} dB below threshold {threshold_db} dB")]
    NoResonance { depth_db: f64, threshold_db: f64 },
    #[error("grid too coarse: minimum at sweep endpoint {frequency_hz} Hz")]
    GridTooCoarse { frequency_hz: f64 },
    #[error("need at least 5 points, got {0}")]
    TooFewPoints(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceEstimate {
    pub f0_hat: f64,
    /// Dip depth below the median of the smoothed sweep (positive dB).
    pub depth_db: f64,
    /// Depth over a robust estimate of the sample-to-sample noise.
    pub snr_estimate: f64,
    /// Whether parabolic refinement moved the estimate off the grid.
    pub refined: bool,
}

/// Centred moving average; the window shrinks symmetrically at the edges.
fn smooth(x: &[f64]) -> Vec<f64> {
    let half = SMOOTH_WINDOW / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let w = &x[i - h..=i + h];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Noise level from the median absolute second difference, scaled to the
/// standard deviation of i.i.d. Gaussian samples.
fn noise_sigma(x: &[f64]) -> f64 {
    let mut d: Vec<f64> = x
        .windows(3)
        .map(|w| (w[0] - 2.0 * w[1] + w[2]).abs())
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    // second difference of unit-variance noise has sd sqrt(6)
    median(&mut d) * 1.4826 / 6f64.sqrt()
}

/// Locate the reflection dip.
///
/// The discrete minimum is taken on a 5-point moving average (lowest
/// frequency wins ties), then refined with a parabola through the three raw
/// samples around it. Depth is measured from the median of the smoothed sweep.
pub fn extract_resonance(
    sweep: &S11Sweep,
    min_depth_db: f64,
) -> Result<ResonanceEstimate, DspError> {
    let raw = sweep.magnitude_db();
    let n = raw.len();
    if n < SMOOTH_WINDOW {
        return Err(DspError::TooFewPoints(n));
    }
    let smoothed = smooth(raw);
    let mut idx = 0;
    for (i, &v) in smoothed.iter().enumerate() {
        if v < smoothed[idx] {
            idx = i;
        }
    }
    let baseline = median(&mut smoothed.clone());
    let depth_db = baseline - smoothed[idx];
    if depth_db.is_nan() || depth_db < min_depth_db {
        return Err(DspError::NoResonance {
            depth_db,
            threshold_db: min_depth_db,
        });
    }
    if idx == 0 || idx == n - 1 {
        return Err(DspError::GridTooCoarse {
            frequency_hz: sweep.frequency(idx),
        });
    }

    // The raw minimum may sit one sample off the smoothed one.
    let mut centre = idx;
    for j in [idx - 1, idx + 1] {
        if raw[j] < raw[centre] {
            centre = j;
        }
    }
    let centre = centre.clamp(1, n - 2);
    let (y0, y1, y2) = (raw[centre - 1], raw[centre], raw[centre + 1]);
    let curvature = y0 - 2.0 * y1 + y2;
    let mut offset = 0.0;
    if curvature > 0.0 {
        offset = (0.5 * (y0 - y2) / curvature).clamp(-1.0, 1.0);
    }
    let step = sweep.step();
    let f0_hat =
        (sweep.f_start() + (centre as f64 + offset) * step).clamp(sweep.f_start(), sweep.f_stop());

    let sigma = noise_sigma(raw);
    let snr_estimate = if sigma > 0.0 {
        (depth_db / sigma).min(1e12)
    } else {
        1e12
    };
    Ok(ResonanceEstimate {
        f0_hat,
        depth_db,
        snr_estimate,
        refined: offset != 0.0,
    })
}

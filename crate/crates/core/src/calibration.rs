//! Linear calibration of resonance frequency against a measurand, its
//! inverse, and the cycling and aging analytics.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("degenerate model: slope is zero")]
    DegenerateModel,
    #[error("incomplete cycle: {0}")]
    IncompleteCycle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurandUnit {
    #[serde(rename = "percent-strain")]
    PercentStrain,
    #[serde(rename = "mmHg")]
    MmHg,
    #[serde(rename = "um")]
    Micrometre,
    #[serde(rename = "degrees")]
    Degrees,
    #[serde(rename = "relative-permittivity")]
    RelativePermittivity,
    #[serde(rename = "days")]
    Days,
}

impl MeasurandUnit {
    pub fn label(self) -> &'static str {
        match self {
            MeasurandUnit::PercentStrain => "percent-strain",
            MeasurandUnit::MmHg => "mmHg",
            MeasurandUnit::Micrometre => "um",
            MeasurandUnit::Degrees => "degrees",
            MeasurandUnit::RelativePermittivity => "relative-permittivity",
            MeasurandUnit::Days => "days",
        }
    }
}

/// Reference coefficients kept alongside a fit for comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

/// `f = intercept + slope * x`, frequencies in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
    pub residual_sd: f64,
    pub measurand_unit: MeasurandUnit,
    pub n_points: usize,
    /// Frequency range covered by the fitted points.
    pub y_min: f64,
    pub y_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceFit>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub value: f64,
    pub extrapolated: bool,
}

/// Ordinary least-squares straight line through `(x, y_hz)` points.
pub fn fit_linear(
    points: &[(f64, f64)],
    unit: MeasurandUnit,
) -> Result<CalibrationModel, CalibrationError> {
    let n = points.len();
    if n < 2 {
        return Err(CalibrationError::DegenerateInput(format!(
            "need at least 2 points, got {n}"
        )));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(CalibrationError::DegenerateInput("non-finite point".into()));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(CalibrationError::DegenerateInput(
            "all x values are equal".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let (r_squared, residual_sd) = if n == 2 {
        (1.0, 0.0)
    } else {
        let r2 = if syy == 0.0 {
            1.0
        } else {
            (1.0 - ss_res / syy).clamp(0.0, 1.0)
        };
        (r2, (ss_res / (nf - 2.0)).sqrt())
    };
    let (y_min, y_max) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.1), hi.max(p.1))
        });
    Ok(CalibrationModel {
        intercept,
        slope,
        r_squared,
        residual_sd,
        measurand_unit: unit,
        n_points: n,
        y_min,
        y_max,
        reference: None,
    })
}

impl CalibrationModel {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Measurand for a frequency; flags frequencies outside the fitted range.
    pub fn invert(&self, f: f64) -> Result<Inversion, CalibrationError> {
        if self.slope == 0.0 || !self.slope.is_finite() {
            return Err(CalibrationError::DegenerateModel);
        }
        Ok(Inversion {
            value: (f - self.intercept) / self.slope,
            extrapolated: f < self.y_min || f > self.y_max,
        })
    }

    /// One-sigma measurand resolution implied by the fit residuals.
    pub fn measurand_resolution(&self) -> f64 {
        self.residual_sd / self.slope.abs()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read_path(path: &Path) -> Result<Self, CalibrationError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_path(&self, path: &Path) -> Result<(), CalibrationError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    x: f64,
    y_hz: f64,
}

/// Read calibration points from CSV with header `x,y_hz`.
pub fn read_points<R: Read>(input: R) -> Result<Vec<(f64, f64)>, CalibrationError> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    r.deserialize()
        .map(|row| {
            row.map(|p: PointRow| (p.x, p.y_hz))
                .map_err(CalibrationError::from)
        })
        .collect()
}

pub fn write_points<W: Write>(points: &[(f64, f64)], out: W) -> Result<(), CalibrationError> {
    let mut w = csv::Writer::from_writer(out);
    for &(x, y_hz) in points {
        w.serialize(PointRow { x, y_hz })?;
    }
    w.flush()?;
    Ok(())
}

/// The four characterization tables shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinTable {
    Strain,
    Pressure,
    Stent,
    Bend,
}

impl BuiltinTable {
    pub const ALL: [BuiltinTable; 4] = [Self::Strain, Self::Pressure, Self::Stent, Self::Bend];

    pub fn name(self) -> &'static str {
        match self {
            Self::Strain => "strain",
            Self::Pressure => "pressure",
            Self::Stent => "stent",
            Self::Bend => "bend",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn unit(self) -> MeasurandUnit {
        match self {
            Self::Strain => MeasurandUnit::PercentStrain,
            Self::Pressure => MeasurandUnit::MmHg,
            Self::Stent => MeasurandUnit::Micrometre,
            Self::Bend => MeasurandUnit::Degrees,
        }
    }

    pub fn csv(self) -> &'static str {
        match self {
            Self::Strain => include_str!("../data/strain.csv"),
            Self::Pressure => include_str!("../data/pressure.csv"),
            Self::Stent => include_str!("../data/stent.csv"),
            Self::Bend => include_str!("../data/bend.csv"),
        }
    }

    pub fn points(self) -> Vec<(f64, f64)> {
        read_points(self.csv().as_bytes()).expect("bundled table parses")
    }

    /// Reference coefficients from the full set of repeats, where available.
    pub fn reference(self) -> Option<ReferenceFit> {
        match self {
            Self::Bend => Some(ReferenceFit {
                intercept: 1.55161e9,
                slope: 4.55e6,
                r_squared: 0.9769,
            }),
            _ => None,
        }
    }

    pub fn fit(self) -> CalibrationModel {
        let mut model =
            fit_linear(&self.points(), self.unit()).expect("bundled table is well posed");
        model.reference = self.reference();
        model
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclePhase {
    Loaded,
    Released,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSample {
    pub cycle: u32,
    pub phase: CyclePhase,
    pub f0_hz: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleSeries {
    pub samples: Vec<CycleSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityMetrics {
    pub max_return_error: f64,
    pub mean_loaded_f: f64,
    pub mean_released_f: f64,
    pub hysteresis_span: f64,
}

impl CycleSeries {
    /// Alternating loaded/released series with the given per-phase values.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let samples = pairs
            .into_iter()
            .zip(1u32..)
            .flat_map(|((loaded, released), cycle)| {
                [
                    CycleSample {
                        cycle,
                        phase: CyclePhase::Loaded,
                        f0_hz: loaded,
                    },
                    CycleSample {
                        cycle,
                        phase: CyclePhase::Released,
                        f0_hz: released,
                    },
                ]
            })
            .collect();
        Self { samples }
    }
}

pub fn repeatability_metrics(
    series: &CycleSeries,
) -> Result<RepeatabilityMetrics, CalibrationError> {
    let Some(last) = series.samples.iter().map(|s| s.cycle).max() else {
        return Err(CalibrationError::IncompleteCycle("empty series".into()));
    };
    let mut loaded = Vec::new();
    let mut released = Vec::new();
    for cycle in 1..=last {
        let mut l = None;
        let mut r = None;
        for s in series.samples.iter().filter(|s| s.cycle == cycle) {
            match s.phase {
                CyclePhase::Loaded => l = Some(s.f0_hz),
                CyclePhase::Released => r = Some(s.f0_hz),
            }
        }
        match (l, r) {
            (Some(l), Some(r)) => {
                loaded.push(l);
                released.push(r);
            }
            _ => {
                return Err(CalibrationError::IncompleteCycle(format!(
                    "cycle {cycle} lacks a phase"
                )))
            }
        }
    }
    if series.samples.iter().any(|s| s.cycle == 0) {
        return Err(CalibrationError::IncompleteCycle(
            "cycle indices start at 1".into(),
        ));
    }
    let first = released[0];
    let max_return_error = released
        .iter()
        .map(|r| (r - first).abs())
        .fold(0.0, f64::max);
    let hi = released.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = released.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(RepeatabilityMetrics {
        max_return_error,
        mean_loaded_f: mean(&loaded),
        mean_released_f: mean(&released),
        hysteresis_span: hi - lo,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingSeries {
    /// `(elapsed_days, f0_hz)`, days strictly increasing from 0.
    pub samples: Vec<(f64, f64)>,
    pub aging_temperature_c: f64,
    pub equivalent_storage: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftMetrics {
    /// Hz per day.
    pub slope: f64,
    pub total_shift: f64,
}

pub fn drift_metrics(series: &AgingSeries) -> Result<DriftMetrics, CalibrationError> {
    let s = &series.samples;
    if s.len() < 2 {
        return Err(CalibrationError::DegenerateInput(
            "need at least 2 aging samples".into(),
        ));
    }
    if s[0].0 != 0.0 || s.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(CalibrationError::DegenerateInput(
            "days must increase strictly from 0".into(),
        ));
    }
    let fit = fit_linear(s, MeasurandUnit::Days)?;
    Ok(DriftMetrics {
        slope: fit.slope,
        total_shift: s[s.len() - 1].1 - s[0].1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Independent two-pass least squares using the normal equations
    /// solved by Cramer's rule.
    fn oracle(points: &[(f64, f64)]) -> (f64, f64) {
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let det = n * sxx - sx * sx;
        ((sxx * sy - sx * sxy) / det, (n * sxy - sx * sy) / det)
    }

    #[test]
    fn builtin_tables_match_oracle() {
        for t in BuiltinTable::ALL {
            let m = t.fit();
            let (a, b) = oracle(&t.points());
            assert!((m.slope - b).abs() < 1e-6 * b.abs(), "{t:?}");
            assert!((m.intercept - a).abs() < 1e-9 * a.abs(), "{t:?}");
        }
    }

    #[test]
    fn strain_pressure_stent_bend_values() {
        assert!((BuiltinTable::Strain.fit().slope / 1e6 - 2.94).abs() < 0.005);
        assert!((BuiltinTable::Pressure.fit().slope / 1e6 - 0.432).abs() < 0.001);
        assert!((BuiltinTable::Stent.fit().slope.abs() / 1e3 - 310.0).abs() < 1.0);
        let bend = BuiltinTable::Bend.fit();
        assert!((bend.slope / 1e6 - 4.885).abs() < 0.005);
        assert!((bend.intercept / 1e9 - 1.5195).abs() < 0.0005);
        assert_eq!(bend.reference.unwrap().slope, 4.55e6);
    }

    #[test]
    fn two_points_interpolate() {
        let m = fit_linear(&[(1.0, 10.0), (3.0, 14.0)], MeasurandUnit::MmHg).unwrap();
        assert_eq!(
            (m.slope, m.intercept, m.r_squared, m.residual_sd),
            (2.0, 8.0, 1.0, 0.0)
        );
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_linear(&[(1.0, 1.0)], MeasurandUnit::MmHg).is_err());
        assert!(fit_linear(&[(2.0, 1.0), (2.0, 3.0)], MeasurandUnit::MmHg).is_err());
        let flat = fit_linear(&[(0.0, 5.0), (1.0, 5.0), (2.0, 5.0)], MeasurandUnit::MmHg).unwrap();
        assert_eq!(flat.r_squared, 1.0);
        assert!(matches!(
            flat.invert(5.0),
            Err(CalibrationError::DegenerateModel)
        ));
    }

    #[test]
    fn inversion() {
        let m = BuiltinTable::Pressure.fit();
        assert_eq!(m.invert(m.intercept).unwrap().value, 0.0);
        assert!(m.invert(m.intercept).unwrap().extrapolated);
        for x in [1.0, 17.0, 123.0] {
            let back = m.invert(m.predict(x)).unwrap().value;
            assert!((back - x).abs() < 1e-9 * x);
        }
        let p = m.invert(1.7195e9).unwrap();
        assert!(
            (p.value - 150.0).abs() < m.measurand_resolution(),
            "{}",
            p.value
        );
        assert!(!p.extrapolated);
    }

    #[test]
    fn json_and_csv_round_trip() {
        let m = BuiltinTable::Bend.fit();
        assert_eq!(CalibrationModel::from_json(&m.to_json()).unwrap(), m);
        let mut buf = Vec::new();
        write_points(&BuiltinTable::Strain.points(), &mut buf).unwrap();
        assert!(buf.starts_with(b"x,y_hz\n"));
        assert_eq!(
            read_points(buf.as_slice()).unwrap(),
            BuiltinTable::Strain.points()
        );
    }

    #[test]
    fn repeatability() {
        let same = CycleSeries::from_pairs(std::iter::repeat_n((1.725e9, 1.71e9), 4));
        let m = repeatability_metrics(&same).unwrap();
        assert_eq!((m.max_return_error, m.hysteresis_span), (0.0, 0.0));

        let jitter = [0.0, 0.5e6, -0.5e6, 0.3e6];
        let j = CycleSeries::from_pairs(jitter.iter().map(|d| (1.725e9, 1.71e9 + d)));
        assert!(repeatability_metrics(&j).unwrap().max_return_error <= 1e6);

        let mut broken = same.clone();
        broken.samples.pop();
        assert!(matches!(
            repeatability_metrics(&broken),
            Err(CalibrationError::IncompleteCycle(_))
        ));
        assert!(repeatability_metrics(&CycleSeries::default()).is_err());
    }

    #[test]
    fn drift() {
        let flat = AgingSeries {
            samples: (0..=16).map(|d| (d as f64, 1.71e9)).collect(),
            aging_temperature_c: 70.0,
            equivalent_storage: "1 year".into(),
        };
        assert_eq!(
            drift_metrics(&flat).unwrap(),
            DriftMetrics {
                slope: 0.0,
                total_shift: 0.0
            }
        );

        let ramp = AgingSeries {
            samples: (0..=16)
                .map(|d| (d as f64, 1.71e9 + 1e6 * d as f64))
                .collect(),
            ..flat.clone()
        };
        assert!((drift_metrics(&ramp).unwrap().slope - 1e6).abs() < 1e-9 * 1e6);

        let normal = Normal::new(0.0, 0.2e6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noisy = AgingSeries {
            samples: (0..=16)
                .map(|d| (d as f64, 1.71e9 + normal.sample(&mut rng)))
                .collect(),
            ..flat
        };
        assert!(drift_metrics(&noisy).unwrap().slope.abs() < 0.1e6);
    }

    proptest! {
        #[test]
        fn residuals_have_zero_mean(ys in proptest::collection::vec(1.0e9f64..2.0e9, 3..30)) {
            let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
            let m = fit_linear(&pts, MeasurandUnit::MmHg).unwrap();
            let mean: f64 = pts.iter().map(|p| p.1 - m.predict(p.0)).sum::<f64>() / pts.len() as f64;
            prop_assert!(mean.abs() < 1e-9 * 1.5e9);
            prop_assert!((0.0..=1.0).contains(&m.r_squared));
        }

        #[test]
        fn unit_rescaling(ys in proptest::collection::vec(1.0e9f64..2.0e9, 3..20), s in 0.01f64..100.0) {
            let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
            let scaled: Vec<(f64, f64)> = pts.iter().map(|p| (p.0 * s, p.1)).collect();
            let a = fit_linear(&pts, MeasurandUnit::MmHg).unwrap();
            let b = fit_linear(&scaled, MeasurandUnit::MmHg).unwrap();
            prop_assert!((a.slope / s - b.slope).abs() <= 1e-9 * a.slope.abs().max(1.0));
            prop_assert!((a.r_squared - b.r_squared).abs() < 1e-9);
            for p in &pts {
                prop_assert!((a.predict(p.0) - b.predict(p.0 * s)).abs() < 1e-9 * p.1);
            }
        }

        #[test]
        fn invert_predict_identity(a in 1.0e9f64..2.0e9, b in 1e3f64..1e7, xs in proptest::collection::vec(1.0f64..400.0, 2..10)) {
            let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, a + b * x)).collect();
            prop_assume!(xs.iter().any(|&x| x != xs[0]));
            let m = fit_linear(&pts, MeasurandUnit::Micrometre).unwrap();
            for &x in &xs {
                prop_assert!((m.invert(m.predict(x)).unwrap().value - x).abs() <= 1e-9 * x.max(1.0));
            }
        }
    }
}

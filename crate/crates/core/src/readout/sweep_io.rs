//! Touchstone one-port (`.s1p`) and CSV (`frequency_hz,magnitude_db`) sweep files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ReadoutError, S11Sweep};

/// Relative deviation from a uniform grid tolerated when importing.
const GRID_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepFormat {
    Touchstone,
    Csv,
}

impl SweepFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "s1p" | "ts" => Some(SweepFormat::Touchstone),
            "csv" => Some(SweepFormat::Csv),
            _ => None,
        }
    }
}

/// Write a sweep as Touchstone with option line `# HZ S DB R 50`.
pub fn write_touchstone<W: Write>(sweep: &S11Sweep, mut out: W) -> std::io::Result<()> {
    writeln!(out, "! one-port reflection magnitude, phase not modelled")?;
    writeln!(out, "# HZ S DB R 50")?;
    for (f, m) in sweep.frequencies().zip(sweep.magnitude_db()) {
        writeln!(out, "{f} {m} 0.0")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum DataFormat {
    Db,
    MagAngle,
    RealImag,
}

/// Parse a one-port Touchstone file. DB, MA and RI data formats and
/// HZ/KHZ/MHZ/GHZ units are accepted; only magnitude is kept.
pub fn read_touchstone<R: Read>(input: R, name: &str) -> Result<S11Sweep, ReadoutError> {
    let parse_err = |line: usize, message: String| ReadoutError::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let mut unit = 1e9;
    let mut format = DataFormat::MagAngle;
    let mut seen_option = false;
    let mut freqs = Vec::new();
    let mut mags = Vec::new();

    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let content = line.split('!').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(opts) = content.strip_prefix('#') {
            if seen_option {
                return Err(parse_err(line_no, "duplicate option line".into()));
            }
            seen_option = true;
            let mut tokens = opts.split_whitespace().map(str::to_ascii_uppercase);
            while let Some(tok) = tokens.next() {
                match tok.as_str() {
                    "HZ" => unit = 1.0,
                    "KHZ" => unit = 1e3,
                    "MHZ" => unit = 1e6,
                    "GHZ" => unit = 1e9,
                    "S" => {}
                    "Y" | "Z" | "H" | "G" => {
                        return Err(parse_err(
                            line_no,
                            format!("unsupported parameter type {tok}"),
                        ))
                    }
                    "DB" => format = DataFormat::Db,
                    "MA" => format = DataFormat::MagAngle,
                    "RI" => format = DataFormat::RealImag,
                    "R" => {
                        let z0 = tokens.next().and_then(|t| t.parse::<f64>().ok());
                        if z0.is_none() {
                            return Err(parse_err(line_no, "missing reference impedance".into()));
                        }
                    }
                    other => return Err(parse_err(line_no, format!("unknown option {other}"))),
                }
            }
            continue;
        }
        let values: Vec<f64> = content
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(line_no, format!("bad number: {e}")))?;
        if values.len() != 3 {
            return Err(parse_err(
                line_no,
                format!("expected 3 columns, got {}", values.len()),
            ));
        }
        let db = match format {
            DataFormat::Db => values[1],
            DataFormat::MagAngle => 20.0 * values[1].log10(),
            DataFormat::RealImag => 20.0 * values[1].hypot(values[2]).log10(),
        };
        freqs.push(values[0] * unit);
        mags.push(db);
    }
    sweep_from_columns(&freqs, mags, name)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    frequency_hz: f64,
    magnitude_db: f64,
}

pub fn write_csv<W: Write>(sweep: &S11Sweep, out: W) -> Result<(), ReadoutError> {
    let mut w = csv::Writer::from_writer(out);
    for (f, m) in sweep.frequencies().zip(sweep.magnitude_db()) {
        w.serialize(CsvRow {
            frequency_hz: f,
            magnitude_db: *m,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R, name: &str) -> Result<S11Sweep, ReadoutError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut freqs = Vec::new();
    let mut mags = Vec::new();
    for row in reader.deserialize() {
        let row: CsvRow = row?;
        freqs.push(row.frequency_hz);
        mags.push(row.magnitude_db);
    }
    sweep_from_columns(&freqs, mags, name)
}

fn sweep_from_columns(freqs: &[f64], mags: Vec<f64>, name: &str) -> Result<S11Sweep, ReadoutError> {
    if freqs.len() < 2 {
        return Err(ReadoutError::InvalidGrid(format!(
            "{name}: fewer than 2 samples"
        )));
    }
    let (first, last) = (freqs[0], freqs[freqs.len() - 1]);
    let step = (last - first) / (freqs.len() - 1) as f64;
    for (i, &f) in freqs.iter().enumerate() {
        let expected = first + i as f64 * step;
        if (f - expected).abs() > GRID_TOLERANCE * step.abs() {
            return Err(ReadoutError::InvalidGrid(format!(
                "{name}: sample {i} at {f} Hz is off the uniform grid"
            )));
        }
    }
    S11Sweep::new(first, last, mags)
}

impl S11Sweep {
    /// Read a sweep, picking the format from the file extension.
    pub fn read_path(path: &Path) -> Result<Self, ReadoutError> {
        let name = path.display().to_string();
        let file = File::open(path)?;
        match SweepFormat::from_path(path) {
            Some(SweepFormat::Csv) => read_csv(file, &name),
            Some(SweepFormat::Touchstone) => read_touchstone(file, &name),
            None => Err(ReadoutError::Parse {
                path: name,
                line: 0,
                message: "unknown sweep extension (expected .s1p or .csv)".into(),
            }),
        }
    }

    /// Write a sweep, picking the format from the file extension (Touchstone
    /// unless it ends in `.csv`).
    pub fn write_path(&self, path: &Path) -> Result<(), ReadoutError> {
        let mut out = BufWriter::new(File::create(path)?);
        match SweepFormat::from_path(path) {
            Some(SweepFormat::Csv) => write_csv(self, &mut out)?,
            _ => write_touchstone(self, &mut out)?,
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> S11Sweep {
        S11Sweep::new(1.0e9, 2.5e9, vec![-0.1, -3.5, -14.0, -2.0, -0.2]).unwrap()
    }

    #[test]
    fn touchstone_layout() {
        let mut buf = Vec::new();
        write_touchstone(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "# HZ S DB R 50");
        assert_eq!(lines[2], "1000000000 -0.1 0.0");
        assert_eq!(lines.last().unwrap(), &"2500000000 -0.2 0.0");
    }

    #[test]
    fn reads_other_formats() {
        let text = "! comment\n# GHZ S MA R 50\n1.0 0.5 10\n1.5 1.0 0\n2.0 0.1 -5 ! trailing\n";
        let s = read_touchstone(text.as_bytes(), "mem").unwrap();
        assert_eq!(s.f_start(), 1.0e9);
        assert_eq!(s.f_stop(), 2.0e9);
        assert!((s.magnitude_db()[0] + 6.0206).abs() < 1e-4);
        assert!((s.magnitude_db()[2] + 20.0).abs() < 1e-12);

        let ri = "# MHZ S RI R 50\n100 0.6 0.8\n200 0.0 0.1\n";
        let s = read_touchstone(ri.as_bytes(), "mem").unwrap();
        assert!(s.magnitude_db()[0].abs() < 1e-12);
        assert_eq!(s.f_stop(), 200e6);
    }

    #[test]
    fn rejects_malformed_touchstone() {
        assert!(read_touchstone("# HZ S DB R 50\n1 2\n".as_bytes(), "x").is_err());
        assert!(read_touchstone("# HZ Z DB R 50\n1 -1 0\n2 -1 0\n".as_bytes(), "x").is_err());
        assert!(
            read_touchstone("# HZ S DB R 50\n1 -1 0\n2 -1 0\n4 -1 0\n".as_bytes(), "x").is_err()
        );
        assert!(read_touchstone("# HZ S DB R 50\n1 abc 0\n".as_bytes(), "x").is_err());
    }

    #[test]
    fn csv_header_and_parse() {
        let mut buf = Vec::new();
        write_csv(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("frequency_hz,magnitude_db\n"));
        assert_eq!(read_csv(buf.as_slice(), "mem").unwrap(), sample());
    }

    proptest! {
        #[test]
        fn touchstone_round_trip(
            start in 0.0f64..1e9, span in 1e3f64..2e9,
            mags in proptest::collection::vec(-60.0f64..0.0, 2..300),
        ) {
            let s = S11Sweep::new(start, start + span, mags).unwrap();
            let mut buf = Vec::new();
            write_touchstone(&s, &mut buf).unwrap();
            let back = read_touchstone(buf.as_slice(), "mem").unwrap();
            prop_assert_eq!(back, s);
        }
    }
}

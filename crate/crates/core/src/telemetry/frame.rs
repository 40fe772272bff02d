//! Binary sweep frame.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MAIC"
//!      4     1  version (1)
//!      5     8  device_id      u64
//!     13     8  timestamp_us   u64
//!     21     8  f_start_hz     f64
//!     29     8  f_stop_hz      f64
//!     37     4  n_points       u32
//!     41    4n  payload        f32 dB magnitudes
//!  41+4n     4  crc32 (IEEE) of all preceding bytes
//! ```
//! All fields little-endian.

use thiserror::Error;

use crate::readout::{ReadoutError, S11Sweep};

pub const MAGIC: [u8; 4] = *b"MAIC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 41;
pub const CRC_LEN: usize = 4;
/// Largest payload accepted from a stream.
pub const MAX_POINTS: u32 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed length: {0}")]
    MalformedLength(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Total encoded size of a frame carrying `n_points` samples.
pub const fn frame_len(n_points: usize) -> usize {
    HEADER_LEN + 4 * n_points + CRC_LEN
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryFrame {
    pub device_id: u64,
    pub timestamp_us: u64,
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub payload: Vec<f32>,
}

impl TelemetryFrame {
    pub fn from_sweep(device_id: u64, timestamp_us: u64, sweep: &S11Sweep) -> Self {
        Self {
            device_id,
            timestamp_us,
            f_start_hz: sweep.f_start(),
            f_stop_hz: sweep.f_stop(),
            payload: sweep.magnitude_db().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_sweep(&self) -> Result<S11Sweep, ReadoutError> {
        S11Sweep::new(
            self.f_start_hz,
            self.f_stop_hz,
            self.payload.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(frame_len(self.payload.len()));
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.device_id.to_le_bytes());
        out.extend_from_slice(&self.timestamp_us.to_le_bytes());
        out.extend_from_slice(&self.f_start_hz.to_le_bytes());
        out.extend_from_slice(&self.f_stop_hz.to_le_bytes());
        let n = u32::try_from(self.payload.len()).expect("payload fits in u32");
        out.extend_from_slice(&n.to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Decode one complete frame. The checksum is verified before any field
    /// is interpreted, so a corrupted byte anywhere reports
    /// [`FrameError::ChecksumMismatch`].
    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < frame_len(0) {
            return Err(FrameError::MalformedLength(format!(
                "{} bytes is shorter than the {}-byte minimum",
                bytes.len(),
                frame_len(0)
            )));
        }
        let (body, tail) = bytes.split_at(bytes.len() - CRC_LEN);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32(body);
        if stored != computed {
            return Err(FrameError::ChecksumMismatch { stored, computed });
        }
        let magic: [u8; 4] = body[0..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(FrameError::BadMagic(magic));
        }
        if body[4] != VERSION {
            return Err(FrameError::UnsupportedVersion(body[4]));
        }
        let u64_at = |o: usize| u64::from_le_bytes(body[o..o + 8].try_into().expect("8 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(body[o..o + 8].try_into().expect("8 bytes"));
        let n_points = u32::from_le_bytes(body[37..41].try_into().expect("4 bytes")) as usize;
        if frame_len(n_points) != bytes.len() {
            return Err(FrameError::MalformedLength(format!(
                "n_points = {n_points} needs {} bytes, buffer has {}",
                frame_len(n_points),
                bytes.len()
            )));
        }
        let frame = Self {
            device_id: u64_at(5),
            timestamp_us: u64_at(13),
            f_start_hz: f64_at(21),
            f_stop_hz: f64_at(29),
            payload: body[HEADER_LEN..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        };
        if n_points < 2 {
            return Err(FrameError::InvalidGrid(format!(
                "n_points = {n_points} < 2"
            )));
        }
        if frame.f_stop_hz.is_nan()
            || frame.f_start_hz.is_nan()
            || frame.f_stop_hz <= frame.f_start_hz
        {
            return Err(FrameError::InvalidGrid(format!(
                "f_stop {} <= f_start {}",
                frame.f_stop_hz, frame.f_start_hz
            )));
        }
        Ok(frame)
    }
}

/// Number of points declared in a frame header, or an error if the header is
/// implausible. Used to delimit frames on a byte stream.
pub fn declared_points(header: &[u8; HEADER_LEN]) -> Result<u32, FrameError> {
    let n = u32::from_le_bytes(header[37..41].try_into().expect("4 bytes"));
    if n > MAX_POINTS {
        return Err(FrameError::MalformedLength(format!(
            "n_points = {n} exceeds {MAX_POINTS}"
        )));
    }
    Ok(n)
}

/// Split a buffer of back-to-back frames into frame slices.
pub fn split_frames(mut bytes: &[u8]) -> Result<Vec<&[u8]>, FrameError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < HEADER_LEN {
            return Err(FrameError::MalformedLength(format!(
                "{} trailing bytes",
                bytes.len()
            )));
        }
        let header: &[u8; HEADER_LEN] = bytes[..HEADER_LEN].try_into().expect("header");
        let len = frame_len(declared_points(header)? as usize);
        if bytes.len() < len {
            return Err(FrameError::MalformedLength(format!(
                "truncated frame: {} of {len} bytes",
                bytes.len()
            )));
        }
        let (frame, rest) = bytes.split_at(len);
        out.push(frame);
        bytes = rest;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(n: usize) -> TelemetryFrame {
        TelemetryFrame {
            device_id: 0x0102_0304_0506_0708,
            timestamp_us: 1_700_000_000_000_000,
            f_start_hz: 1.0e9,
            f_stop_hz: 2.5e9,
            payload: (0..n).map(|i| -(i as f32) * 0.01).collect(),
        }
    }

    #[test]
    fn crc_check_value() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn layout() {
        let bytes = sample(2).encode();
        assert_eq!(bytes.len(), frame_len(2));
        assert_eq!(&bytes[..4], b"MAIC");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..13], &0x0102_0304_0506_0708u64.to_le_bytes());
        assert_eq!(&bytes[37..41], &2u32.to_le_bytes());
        let crc = crc32(&bytes[..bytes.len() - 4]);
        assert_eq!(&bytes[bytes.len() - 4..], &crc.to_le_bytes());
    }

    #[test]
    fn version_two_is_rejected() {
        let mut bytes = sample(4).encode();
        bytes[4] = 2;
        let n = bytes.len();
        let crc = crc32(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(
            TelemetryFrame::decode(&bytes),
            Err(FrameError::UnsupportedVersion(2))
        );
    }

    #[test]
    fn bad_magic_and_grid() {
        let reseal = |mut b: Vec<u8>| {
            let n = b.len();
            let crc = crc32(&b[..n - 4]);
            b[n - 4..].copy_from_slice(&crc.to_le_bytes());
            b
        };
        let mut b = sample(3).encode();
        b[0] = b'X';
        assert!(matches!(
            TelemetryFrame::decode(&reseal(b)),
            Err(FrameError::BadMagic(_))
        ));
        let mut f = sample(3);
        f.f_stop_hz = f.f_start_hz;
        assert!(matches!(
            TelemetryFrame::decode(&f.encode()),
            Err(FrameError::InvalidGrid(_))
        ));
        let mut b = sample(3).encode();
        b[37] = 7;
        assert!(matches!(
            TelemetryFrame::decode(&reseal(b)),
            Err(FrameError::MalformedLength(_))
        ));
        assert!(matches!(
            TelemetryFrame::decode(&[0u8; 10]),
            Err(FrameError::MalformedLength(_))
        ));
    }

    #[test]
    fn every_bit_flip_is_caught() {
        // about 1000 bytes: 41 + 4 * 239 + 4
        let bytes = sample(239).encode();
        assert_eq!(bytes.len(), 1001);
        for bit in 0..bytes.len() * 8 {
            let mut b = bytes.clone();
            b[bit / 8] ^= 1 << (bit % 8);
            assert!(
                matches!(
                    TelemetryFrame::decode(&b),
                    Err(FrameError::ChecksumMismatch { .. })
                ),
                "bit {bit}"
            );
        }
    }

    #[test]
    fn split_concatenated() {
        let mut all = sample(2).encode();
        all.extend(sample(5).encode());
        let parts = split_frames(&all).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(TelemetryFrame::decode(parts[1]).unwrap(), sample(5));
        assert!(split_frames(&all[..all.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            device_id in any::<u64>(), ts in any::<u64>(),
            start in 0.0f64..5e9, span in 1.0f64..5e9,
            payload in proptest::collection::vec(-80.0f32..0.0, 2..400),
        ) {
            let f = TelemetryFrame { device_id, timestamp_us: ts, f_start_hz: start, f_stop_hz: start + span, payload };
            let bytes = f.encode();
            prop_assert_eq!(bytes.len(), frame_len(f.payload.len()));
            let back = TelemetryFrame::decode(&bytes).unwrap();
            prop_assert_eq!(&back, &f);
            prop_assert_eq!(back.encode(), bytes);
        }
    }
}

//! Gateway: frames in, measurand records out to an append-only NDJSON log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::AsyncReadExt;
use tokio::net::TcpStream;
use tokio::sync::watch;
use tracing::{info, warn};

use super::frame::{declared_points, frame_len, FrameError, TelemetryFrame, HEADER_LEN};
use crate::calibration::CalibrationModel;
use crate::dsp::{extract_resonance, DspError, DEFAULT_MIN_DEPTH_DB};

/// First line of every log file.
pub const LOG_HEADER: &str = r#"{"schema":"maicas-log/1"}"#;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("log {path}: {message}")]
    BadLog { path: PathBuf, message: String },
    #[error("gave up after {0} failed connection attempts")]
    Unreachable(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Ok,
    NoResonance,
    Extrapolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurandRecord {
    pub device_id: Option<u64>,
    pub timestamp_us: Option<u64>,
    pub f0_hat: Option<f64>,
    pub measurand_value: Option<f64>,
    pub measurand_unit: String,
    pub calibration_id: String,
    pub quality: Quality,
    /// Why no measurand was produced (corrupt frame, no dip).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Short identifier of a calibration: CRC32 of its JSON form, in hex.
pub fn calibration_id(model: &CalibrationModel) -> String {
    let json = serde_json::to_string(model).expect("model serializes");
    format!("{:08x}", crc32fast::hash(json.as_bytes()))
}

/// Turns raw frames into records. Pure; shared by the live gateway and
/// offline replay.
#[derive(Debug, Clone)]
pub struct FramePipeline {
    model: CalibrationModel,
    calibration_id: String,
    min_depth_db: f64,
}

impl FramePipeline {
    pub fn new(model: CalibrationModel) -> Self {
        Self {
            calibration_id: calibration_id(&model),
            model,
            min_depth_db: DEFAULT_MIN_DEPTH_DB,
        }
    }

    pub fn with_min_depth(mut self, min_depth_db: f64) -> Self {
        self.min_depth_db = min_depth_db;
        self
    }

    pub fn calibration_id(&self) -> &str {
        &self.calibration_id
    }

    fn record(&self, frame: Option<&TelemetryFrame>) -> MeasurandRecord {
        MeasurandRecord {
            device_id: frame.map(|f| f.device_id),
            timestamp_us: frame.map(|f| f.timestamp_us),
            f0_hat: None,
            measurand_value: None,
            measurand_unit: self.model.measurand_unit.label().to_string(),
            calibration_id: self.calibration_id.clone(),
            quality: Quality::NoResonance,
            error: None,
        }
    }

    /// Record for a frame that could not be decoded.
    pub fn error_record(&self, err: &FrameError) -> MeasurandRecord {
        MeasurandRecord {
            error: Some(err.to_string()),
            ..self.record(None)
        }
    }

    pub fn process(&self, bytes: &[u8]) -> MeasurandRecord {
        let frame = match TelemetryFrame::decode(bytes) {
            Ok(f) => f,
            Err(e) => return self.error_record(&e),
        };
        let mut rec = self.record(Some(&frame));
        let sweep = match frame.to_sweep() {
            Ok(s) => s,
            Err(e) => {
                rec.error = Some(e.to_string());
                return rec;
            }
        };
        let estimate = match extract_resonance(&sweep, self.min_depth_db) {
            Ok(e) => e,
            Err(
                e @ (DspError::NoResonance { .. }
                | DspError::GridTooCoarse { .. }
                | DspError::TooFewPoints(_)),
            ) => {
                rec.error = Some(e.to_string());
                return rec;
            }
        };
        rec.f0_hat = Some(estimate.f0_hat);
        match self.model.invert(estimate.f0_hat) {
            Ok(inv) => {
                rec.measurand_value = Some(inv.value);
                rec.quality = if inv.extrapolated {
                    Quality::Extrapolated
                } else {
                    Quality::Ok
                };
            }
            Err(e) => rec.error = Some(e.to_string()),
        }
        rec
    }
}

/// When the log is flushed to stable storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsyncPolicy {
    /// After every record.
    EveryRecord,
    /// Only when the log is closed.
    #[default]
    OnClose,
    /// Leave it to the OS.
    Never,
}

/// Append-only NDJSON record log with a schema header line.
pub struct MeasurandLog {
    file: File,
    policy: FsyncPolicy,
    written: usize,
}

impl MeasurandLog {
    /// Open `path` for appending, writing the header if the file is new or
    /// empty and checking it otherwise.
    pub fn open(path: &Path, policy: FsyncPolicy) -> Result<Self, GatewayError> {
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(path)?;
        if file.metadata()?.len() == 0 {
            writeln!(file, "{LOG_HEADER}")?;
        } else {
            let mut first = String::new();
            BufReader::new(File::open(path)?).read_line(&mut first)?;
            if first.trim_end() != LOG_HEADER {
                return Err(GatewayError::BadLog {
                    path: path.to_path_buf(),
                    message: format!("unexpected header {:?}", first.trim_end()),
                });
            }
        }
        Ok(Self {
            file,
            policy,
            written: 0,
        })
    }

    pub fn append(&mut self, record: &MeasurandRecord) -> Result<(), GatewayError> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.written += 1;
        if self.policy == FsyncPolicy::EveryRecord {
            self.file.sync_data()?;
        }
        Ok(())
    }

    pub fn records_written(&self) -> usize {
        self.written
    }

    pub fn close(self) -> Result<(), GatewayError> {
        if self.policy != FsyncPolicy::Never {
            self.file.sync_all()?;
        }
        Ok(())
    }
}

/// Read every record of a log, skipping the header.
pub fn read_log(path: &Path) -> Result<Vec<MeasurandRecord>, GatewayError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h == LOG_HEADER => {}
        _ => {
            return Err(GatewayError::BadLog {
                path: path.to_path_buf(),
                message: "missing schema header".into(),
            })
        }
    }
    lines.map(|l| Ok(serde_json::from_str(&l?)?)).collect()
}

/// Reconnect delays: `initial`, then multiplied by `factor` up to `cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub initial: Duration,
    pub factor: f64,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            initial: Duration::from_millis(500),
            factor: 2.0,
            cap: Duration::from_secs(30),
        }
    }
}

impl Backoff {
    /// Delay before reconnect attempt `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let secs = self.initial.as_secs_f64() * self.factor.powi(attempt.min(64) as i32);
        Duration::from_secs_f64(secs.min(self.cap.as_secs_f64()))
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub addr: String,
    pub log_path: PathBuf,
    pub fsync: FsyncPolicy,
    pub backoff: Backoff,
    /// Stop after this many frames (counting corrupt ones).
    pub max_frames: Option<usize>,
    /// Stop when the server closes the stream instead of reconnecting.
    pub exit_on_eof: bool,
    /// Give up after this many consecutive failed connection attempts.
    pub max_connect_attempts: Option<u32>,
}

impl GatewayConfig {
    pub fn new(addr: impl Into<String>, log_path: impl Into<PathBuf>) -> Self {
        Self {
            addr: addr.into(),
            log_path: log_path.into(),
            fsync: FsyncPolicy::default(),
            backoff: Backoff::default(),
            max_frames: None,
            exit_on_eof: false,
            max_connect_attempts: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    pub frames: usize,
    pub error_records: usize,
    pub sessions: usize,
}

enum StreamEnd {
    Eof,
    Stop,
    Lost(std::io::Error),
    Desync,
}

/// Connect to a frame server and log one record per received frame until
/// `max_frames`, end of stream (with `exit_on_eof`), or `shutdown`.
pub async fn run_gateway(
    config: &GatewayConfig,
    pipeline: &FramePipeline,
    mut shutdown: watch::Receiver<bool>,
) -> Result<GatewayStats, GatewayError> {
    let mut log = MeasurandLog::open(&config.log_path, config.fsync)?;
    let mut stats = GatewayStats::default();
    let mut failures = 0u32;
    loop {
        if *shutdown.borrow() {
            break;
        }
        let stream = tokio::select! {
            s = TcpStream::connect(&config.addr) => s,
            _ = shutdown.changed() => break,
        };
        let end = match stream {
            Ok(stream) => {
                failures = 0;
                stats.sessions += 1;
                info!(addr = %config.addr, "connected");
                read_session(
                    stream,
                    config,
                    pipeline,
                    &mut log,
                    &mut stats,
                    &mut shutdown,
                )
                .await?
            }
            Err(e) => StreamEnd::Lost(e),
        };
        match end {
            StreamEnd::Stop => break,
            StreamEnd::Eof if config.exit_on_eof => break,
            StreamEnd::Eof => {}
            StreamEnd::Desync => warn!("stream out of sync, reconnecting"),
            StreamEnd::Lost(e) => {
                if config
                    .max_connect_attempts
                    .is_some_and(|m| failures + 1 >= m)
                {
                    log.close()?;
                    return Err(GatewayError::Unreachable(failures + 1));
                }
                let delay = config.backoff.delay(failures);
                failures += 1;
                warn!(error = %e, ?delay, "connection lost");
                tokio::select! {
                    _ = tokio::time::sleep(delay) => {}
                    _ = shutdown.changed() => break,
                }
            }
        }
    }
    log.close()?;
    Ok(stats)
}

async fn read_session(
    mut stream: TcpStream,
    config: &GatewayConfig,
    pipeline: &FramePipeline,
    log: &mut MeasurandLog,
    stats: &mut GatewayStats,
    shutdown: &mut watch::Receiver<bool>,
) -> Result<StreamEnd, GatewayError> {
    loop {
        if config.max_frames.is_some_and(|m| stats.frames >= m) {
            return Ok(StreamEnd::Stop);
        }
        let mut header = [0u8; HEADER_LEN];
        let read = tokio::select! {
            r = read_exact_or_eof(&mut stream, &mut header) => r,
            _ = shutdown.changed() => return Ok(StreamEnd::Stop),
        };
        match read {
            Ok(true) => {}
            Ok(false) => return Ok(StreamEnd::Eof),
            Err(e) => return Ok(StreamEnd::Lost(e)),
        }
        let n = match declared_points(&header) {
            Ok(n) => n as usize,
            Err(e) => {
                log.append(&pipeline.error_record(&e))?;
                stats.frames += 1;
                stats.error_records += 1;
                return Ok(StreamEnd::Desync);
            }
        };
        let mut frame = vec![0u8; frame_len(n)];
        frame[..HEADER_LEN].copy_from_slice(&header);
        match stream.read_exact(&mut frame[HEADER_LEN..]).await {
            Ok(_) => {}
            Err(e) => return Ok(StreamEnd::Lost(e)),
        }
        let record = pipeline.process(&frame);
        if record.device_id.is_none() {
            stats.error_records += 1;
        }
        log.append(&record)?;
        stats.frames += 1;
    }
}

/// Fill `buf` completely; `Ok(false)` on a clean end of stream before the
/// first byte.
async fn read_exact_or_eof(stream: &mut TcpStream, buf: &mut [u8]) -> std::io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = stream.read(&mut buf[filled..]).await?;
        if n == 0 {
            if filled == 0 {
                return Ok(false);
            }
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "truncated frame",
            ));
        }
        filled += n;
    }
    Ok(true)
}

//! Wire format, reader emulator and gateway.

pub mod frame;
pub mod gateway;
pub mod server;

pub use frame::{frame_len, split_frames, FrameError, TelemetryFrame};
pub use gateway::{
    calibration_id, read_log, run_gateway, Backoff, FramePipeline, FsyncPolicy, GatewayConfig,
    GatewayError, GatewayStats, MeasurandLog, MeasurandRecord, Quality, LOG_HEADER,
};
pub use server::serve;

/// Default TCP port of the frame server.
pub const DEFAULT_PORT: u16 = 47917;

mod error;

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use maicas_core::calibration::{read_points, BuiltinTable, CalibrationModel, MeasurandUnit};
use maicas_core::circuit::{
    calibrate_baseline, CalibrationBounds, ModelCalibration, DEFAULT_TARGET_DEPTH_DB,
    DEFAULT_TARGET_F0_HZ,
};
use maicas_core::dsp::{extract_resonance, DEFAULT_MIN_DEPTH_DB};
use maicas_core::geometry::DeviceGeometry;
use maicas_core::readout::{ReaderCouple, S11Sweep};
use maicas_core::scenarios::{build_presets, run_experiment, ExperimentConfig, ExperimentResult};
use maicas_core::telemetry::{
    run_gateway, serve, split_frames, FramePipeline, FsyncPolicy, GatewayConfig, MeasurandLog,
    Quality, TelemetryFrame, DEFAULT_PORT,
};

use error::Failure;

/// Seed used for bundled preset configs.
const PRESET_SEED: u64 = 2024;
/// Spacing of synthetic frame timestamps (µs).
const FRAME_PERIOD_US: u64 = 1_000_000;

#[derive(Debug, Parser)]
#[command(
    name = "maicas",
    version,
    about = "Wireless LC deformation sensor digital twin",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulated experiment and write its summary.
    Simulate(SimulateArgs),
    /// Locate the resonance dip in a recorded sweep.
    Extract(ExtractArgs),
    /// Fit a linear calibration to (measurand, frequency) points.
    Fit(FitArgs),
    /// Convert a resonance frequency to a measurand with a calibration.
    Invert(InvertArgs),
    /// Stream sweep frames to every TCP client.
    Serve(ServeArgs),
    /// Receive frames, convert them to measurands and append them to a log.
    Gateway(GatewayArgs),
    /// Run recorded frames or sweeps through the gateway pipeline offline.
    Replay(ReplayArgs),
    /// Calibrate the rest state and write campaign configs for every mode.
    CalibrateBaseline(CalibrateArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Override the config noise level (dB).
    #[arg(long, value_name = "F64")]
    sigma_db: Option<f64>,
    /// Override any config field, e.g. `repeats=3` or `params.strain_transfer=0.8`.
    /// The value is parsed as JSON, falling back to a string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Also write every trial sweep as Touchstone under <out>/sweeps.
    #[arg(long)]
    sweeps: bool,
    /// Also write every trial as a telemetry frame to <out>/frames.bin.
    #[arg(long)]
    frames: bool,
    /// Device id stamped on frames.
    #[arg(long, default_value_t = 1, value_name = "U64")]
    device_id: u64,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Sweep file (.s1p or .csv).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Minimum dip depth below the sweep median (dB).
    #[arg(long, default_value_t = DEFAULT_MIN_DEPTH_DB, value_name = "F64")]
    min_depth_db: f64,
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group(ArgGroup::new("source").required(true)))]
struct FitArgs {
    /// CSV with header `x,y_hz`.
    #[arg(long, value_name = "CSV", group = "source")]
    points: Option<PathBuf>,
    /// Bundled table: strain, pressure, stent or bend.
    #[arg(long, value_name = "NAME", group = "source", value_parser = builtin_table)]
    table: Option<BuiltinTable>,
    /// Measurand unit of --points; inferred from the file name when it
    /// matches a bundled table.
    #[arg(long, value_enum)]
    unit: Option<UnitArg>,
    /// Write the model as JSON.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InvertArgs {
    /// Calibration model (JSON).
    #[arg(long, value_name = "JSON")]
    model: PathBuf,
    /// Resonance frequency (Hz).
    #[arg(long, value_name = "HZ")]
    f0: f64,
}

#[derive(Debug, Args)]
struct EndpointArgs {
    /// Server address.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// TCP port; 0 picks a free port when serving.
    #[arg(long, env = "MAICAS_PORT", default_value_t = DEFAULT_PORT, value_name = "U16")]
    port: u16,
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group(ArgGroup::new("frame_source").required(true)))]
struct ServeArgs {
    #[command(flatten)]
    endpoint: EndpointArgs,
    /// Generate frames from this experiment config.
    #[arg(long, value_name = "PATH", group = "frame_source")]
    config: Option<PathBuf>,
    /// Replay recorded frames (.bin), a sweep file or a directory of sweeps.
    #[arg(long, value_name = "PATH", group = "frame_source")]
    input: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, value_name = "U64", requires = "config")]
    seed: Option<u64>,
    /// Override the config noise level (dB).
    #[arg(long, value_name = "F64", requires = "config")]
    sigma_db: Option<f64>,
    /// Delay between frames of one session.
    #[arg(long, default_value_t = 100, value_name = "MS")]
    interval_ms: u64,
    /// Device id stamped on frames built from sweeps.
    #[arg(long, default_value_t = 1, value_name = "U64")]
    device_id: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FsyncArg {
    Never,
    EveryRecord,
    OnClose,
}

#[derive(Debug, Args)]
struct GatewayArgs {
    #[command(flatten)]
    endpoint: EndpointArgs,
    /// Calibration model (JSON).
    #[arg(long, value_name = "JSON")]
    model: PathBuf,
    /// Record log (NDJSON), appended to.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Stop after this many frames.
    #[arg(long, value_name = "N")]
    frames: Option<usize>,
    /// Stop when the server ends the stream instead of reconnecting.
    #[arg(long)]
    exit_on_eof: bool,
    /// Give up after this many consecutive failed connection attempts.
    #[arg(long, value_name = "N")]
    max_connect_attempts: Option<u32>,
    /// When the log is flushed to disk.
    #[arg(long, value_enum, default_value_t = FsyncArg::OnClose)]
    fsync: FsyncArg,
    /// Minimum dip depth below the sweep median (dB).
    #[arg(long, default_value_t = DEFAULT_MIN_DEPTH_DB, value_name = "F64")]
    min_depth_db: f64,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Recorded frames (.bin), a sweep file or a directory of sweeps.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Calibration model (JSON).
    #[arg(long, value_name = "JSON")]
    model: PathBuf,
    /// Record log (NDJSON), appended to.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Device id stamped on frames built from sweeps.
    #[arg(long, default_value_t = 1, value_name = "U64")]
    device_id: u64,
    /// Minimum dip depth below the sweep median (dB).
    #[arg(long, default_value_t = DEFAULT_MIN_DEPTH_DB, value_name = "F64")]
    min_depth_db: f64,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Directory for baseline.json and one config per mode.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Rest dip frequency (Hz).
    #[arg(long, default_value_t = DEFAULT_TARGET_F0_HZ, value_name = "HZ")]
    target_f0: f64,
    /// Rest dip depth (dB, negative).
    #[arg(long, default_value_t = DEFAULT_TARGET_DEPTH_DB, value_name = "DB", allow_negative_numbers = true)]
    target_depth_db: f64,
    /// Seed written into the generated configs.
    #[arg(long, default_value_t = PRESET_SEED, value_name = "U64")]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UnitArg {
    PercentStrain,
    #[value(name = "mmHg")]
    MmHg,
    Um,
    Degrees,
    RelativePermittivity,
    Days,
}

impl From<UnitArg> for MeasurandUnit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::PercentStrain => MeasurandUnit::PercentStrain,
            UnitArg::MmHg => MeasurandUnit::MmHg,
            UnitArg::Um => MeasurandUnit::Micrometre,
            UnitArg::Degrees => MeasurandUnit::Degrees,
            UnitArg::RelativePermittivity => MeasurandUnit::RelativePermittivity,
            UnitArg::Days => MeasurandUnit::Days,
        }
    }
}

fn builtin_table(s: &str) -> Result<BuiltinTable, String> {
    BuiltinTable::from_name(s)
        .ok_or_else(|| format!("unknown table {s:?} (expected strain, pressure, stent or bend)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let res = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Extract(a) => extract(a),
        Command::Fit(a) => fit(a),
        Command::Invert(a) => invert(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Gateway(a) => gateway(a),
        Command::Replay(a) => replay(a),
        Command::CalibrateBaseline(a) => calibrate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(1)
        }
    }
}

/// Set `path` (dot-separated) inside a JSON object, creating objects on the way.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), Failure> {
    let mut cur = root;
    let mut keys = path.split('.').peekable();
    while let Some(key) = keys.next() {
        let obj = cur.as_object_mut().ok_or_else(|| {
            Failure::new(
                "Config",
                format!("cannot set {path:?}: {key:?} is inside a non-object"),
            )
        })?;
        if keys.peek().is_none() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Failure::new(
        "Config",
        format!("empty override key in {path:?}"),
    ))
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    sigma_db: Option<f64>,
    overrides: &[String],
) -> Result<ExperimentConfig, Failure> {
    let mut doc: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| Failure::new("Config", format!("override {o:?} is not KEY=VALUE")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut doc, key, value)?;
    }
    if let Some(s) = seed {
        set_path(&mut doc, "seed", s.into())?;
    }
    if let Some(s) = sigma_db {
        set_path(&mut doc, "noise_sigma_db", s.into())?;
    }
    Ok(ExperimentConfig::from_json(&doc.to_string())?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::new("Io", format!("{}: {e}", path.display())))
}

/// Slope in a readable unit, e.g. `(2.94, "MHz/%")`.
fn slope_display(unit: MeasurandUnit, slope_hz: f64) -> (f64, &'static str) {
    match unit {
        MeasurandUnit::PercentStrain => (slope_hz / 1e6, "MHz/%"),
        MeasurandUnit::MmHg => (slope_hz / 1e6, "MHz/mmHg"),
        MeasurandUnit::Micrometre => (slope_hz / 1e3, "kHz/um"),
        MeasurandUnit::Degrees => (slope_hz / 1e6, "MHz/deg"),
        MeasurandUnit::RelativePermittivity => (slope_hz / 1e6, "MHz/er"),
        MeasurandUnit::Days => (slope_hz / 1e3, "kHz/day"),
    }
}

/// Fixed-point with `decimals` places, trailing zeros removed.
fn trim(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn print_model(m: &CalibrationModel) {
    let (b, unit) = slope_display(m.measurand_unit, m.slope);
    println!("b = {} {unit}", trim(b, 3));
    println!("a = {} GHz", trim(m.intercept / 1e9, 6));
    println!("r2 = {}", trim(m.r_squared, 6));
    println!("residual_sd = {} MHz", trim(m.residual_sd / 1e6, 4));
    if let Some(r) = m.reference {
        let (rb, _) = slope_display(m.measurand_unit, r.slope);
        println!(
            "reference: b = {} {unit}, a = {} GHz, r2 = {}",
            trim(rb, 3),
            trim(r.intercept / 1e9, 6),
            r.r_squared
        );
    }
}

fn experiment_frames(result: &ExperimentResult, device_id: u64) -> Vec<Vec<u8>> {
    result
        .sweeps()
        .enumerate()
        .map(|(i, (_, s))| {
            TelemetryFrame::from_sweep(device_id, i as u64 * FRAME_PERIOD_US, s).encode()
        })
        .collect()
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let c = &a.config;
    let config = load_config(&c.config, c.seed, c.sigma_db, &c.overrides)?;
    let result = run_experiment(&config)?;
    fs::create_dir_all(&a.out)?;

    let mut csv = Vec::new();
    result.write_summary_csv(&mut csv)?;
    write_file(&a.out.join("summary.csv"), &csv)?;

    let mut dat = String::from("# measurand mean_f0_hz sd_f0_hz n failures\n");
    for p in &result.points {
        dat.push_str(&format!(
            "{} {} {} {} {}\n",
            p.measurand, p.mean_f0_hz, p.sd_f0_hz, p.n, p.failures
        ));
    }
    write_file(&a.out.join("summary.dat"), dat.as_bytes())?;

    if a.sweeps {
        result.write_sweeps(&a.out.join("sweeps"))?;
    }
    if a.frames {
        write_file(
            &a.out.join("frames.bin"),
            &experiment_frames(&result, a.device_id).concat(),
        )?;
    }
    println!("mode = {}", config.mode.name());
    println!(
        "trials = {}, failures = {}",
        result.trials.len(),
        result.failures
    );
    match &result.summary {
        Some(m) => {
            write_file(&a.out.join("fit.json"), m.to_json().as_bytes())?;
            print_model(m);
        }
        None => println!("no fit: fewer than two distinct points produced a resonance"),
    }
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<(), Failure> {
    let sweep = S11Sweep::read_path(&a.input)?;
    let e = extract_resonance(&sweep, a.min_depth_db)?;
    println!("f0_hat_hz = {}", e.f0_hat);
    println!("depth_db = {}", e.depth_db);
    println!("snr = {}", e.snr_estimate);
    println!("refined = {}", e.refined);
    Ok(())
}

fn fit(a: FitArgs) -> Result<(), Failure> {
    let model = match (a.table, a.points) {
        (Some(t), _) => t.fit(),
        (None, Some(path)) => {
            let from_name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(BuiltinTable::from_name)
                .map(|t| t.unit());
            let unit = a
                .unit
                .map(MeasurandUnit::from)
                .or(from_name)
                .ok_or_else(|| {
                    Failure::new(
                        "Config",
                        format!("cannot infer the unit of {}; pass --unit", path.display()),
                    )
                })?;
            let file = fs::File::open(&path)
                .map_err(|e| Failure::new("Io", format!("{}: {e}", path.display())))?;
            maicas_core::calibration::fit_linear(&read_points(file)?, unit)?
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    print_model(&model);
    if let Some(out) = a.out {
        model.write_path(&out)?;
    }
    Ok(())
}

fn invert(a: InvertArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let inv = model.invert(a.f0)?;
    let quality = if inv.extrapolated {
        "extrapolated"
    } else {
        "ok"
    };
    println!("value = {} {}", inv.value, model.measurand_unit.label());
    println!("quality = {quality}");
    Ok(())
}

fn sweep_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("s1p" | "csv")))
        .collect();
    files.sort();
    Ok(files)
}

/// Encoded frames from a recording: a `.bin` frame stream, one sweep file, or
/// a directory of sweep files taken in name order.
fn recorded_frames(path: &Path, device_id: u64) -> Result<Vec<Vec<u8>>, Failure> {
    let sweeps = if path.is_dir() {
        sweep_files(path)?
    } else if path.extension().is_some_and(|e| e == "bin") {
        let bytes = fs::read(path)?;
        return Ok(split_frames(&bytes)?
            .into_iter()
            .map(<[u8]>::to_vec)
            .collect());
    } else {
        vec![path.to_path_buf()]
    };
    sweeps
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let s = S11Sweep::read_path(p)?;
            Ok(TelemetryFrame::from_sweep(device_id, i as u64 * FRAME_PERIOD_US, &s).encode())
        })
        .collect()
}

fn load_model(path: &Path) -> Result<CalibrationModel, Failure> {
    CalibrationModel::read_path(path).map_err(|e| {
        let f = Failure::from(e);
        Failure::new(f.kind, format!("{}: {}", path.display(), f.msg))
    })
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    Ok(tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?)
}

/// Shutdown channel that flips on Ctrl-C.
fn ctrl_c_shutdown() -> tokio::sync::watch::Receiver<bool> {
    let (tx, rx) = tokio::sync::watch::channel(false);
    tokio::spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            let _ = tx.send(true);
        }
        // keep the sender alive until the process exits
        std::future::pending::<()>().await;
    });
    rx
}

fn serve_cmd(a: ServeArgs) -> Result<(), Failure> {
    let frames = match (&a.config, &a.input) {
        (Some(cfg), _) => experiment_frames(
            &run_experiment(&load_config(cfg, a.seed, a.sigma_db, &[])?)?,
            a.device_id,
        ),
        (None, Some(input)) => recorded_frames(input, a.device_id)?,
        (None, None) => unreachable!("clap requires a source"),
    };
    let n = frames.len();
    runtime()?.block_on(async move {
        let listener =
            tokio::net::TcpListener::bind((a.endpoint.host.as_str(), a.endpoint.port)).await?;
        let addr: SocketAddr = listener.local_addr()?;
        println!("listening on {addr} ({n} frames per session)");
        std::io::stdout().flush()?;
        serve(
            listener,
            Arc::new(frames),
            Duration::from_millis(a.interval_ms),
            ctrl_c_shutdown(),
        )
        .await?;
        Ok(())
    })
}

fn gateway(a: GatewayArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let pipeline = FramePipeline::new(model).with_min_depth(a.min_depth_db);
    let mut cfg = GatewayConfig::new(format!("{}:{}", a.endpoint.host, a.endpoint.port), a.out);
    cfg.fsync = match a.fsync {
        FsyncArg::Never => FsyncPolicy::Never,
        FsyncArg::EveryRecord => FsyncPolicy::EveryRecord,
        FsyncArg::OnClose => FsyncPolicy::OnClose,
    };
    cfg.max_frames = a.frames;
    cfg.exit_on_eof = a.exit_on_eof;
    cfg.max_connect_attempts = a.max_connect_attempts;
    let stats =
        runtime()?.block_on(async { run_gateway(&cfg, &pipeline, ctrl_c_shutdown()).await })?;
    println!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let pipeline = FramePipeline::new(model).with_min_depth(a.min_depth_db);
    let frames = recorded_frames(&a.input, a.device_id)?;
    let mut log = MeasurandLog::open(&a.out, FsyncPolicy::OnClose)?;
    let (mut ok, mut extrapolated, mut failed) = (0usize, 0usize, 0usize);
    for f in &frames {
        let rec = pipeline.process(f);
        match (rec.quality, &rec.error) {
            (_, Some(_)) => failed += 1,
            (Quality::Extrapolated, None) => extrapolated += 1,
            _ => ok += 1,
        }
        log.append(&rec)?;
    }
    log.close()?;
    println!(
        "frames = {}, ok = {ok}, extrapolated = {extrapolated}, errors = {failed}",
        frames.len()
    );
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<(), Failure> {
    let device = DeviceGeometry::default();
    let fit = calibrate_baseline(
        &device,
        a.target_f0,
        a.target_depth_db,
        &CalibrationBounds::default(),
        &ModelCalibration::default(),
        &ReaderCouple::default(),
    )?;
    fs::create_dir_all(&a.out)?;
    write_file(
        &a.out.join("baseline.json"),
        serde_json::to_string_pretty(&fit)?.as_bytes(),
    )?;
    println!(
        "baseline: dip {} GHz at {} dB, eff_permittivity_scale = {}, k = {}",
        trim(fit.dip_frequency_hz / 1e9, 6),
        trim(fit.dip_depth_db, 3),
        fit.calibration.eff_permittivity_scale,
        fit.reader.coupling_coefficient
    );
    for p in build_presets(&device, &fit.calibration, &fit.reader, a.seed)? {
        let path = a.out.join(format!("{}.json", p.name));
        write_file(&path, (p.config.to_json() + "\n").as_bytes())?;
        match p.note {
            Some(n) => println!("{}: {} (note: {n})", p.name, path.display()),
            None => println!("{}: {}", p.name, path.display()),
        }
    }
    Ok(())
}

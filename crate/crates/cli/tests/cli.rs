//! End-to-end checks of the `maicas` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 8] = [
    "simulate",
    "extract",
    "fit",
    "invert",
    "serve",
    "gateway",
    "replay",
    "calibrate-baseline",
];

fn maicas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maicas"))
        .args(args)
        .env_remove("MAICAS_PORT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn snapshot_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/snapshots")
        .join(format!("{name}.txt"))
}

/// Compare against a stored snapshot; `UPDATE_SNAPSHOTS=1` rewrites it.
fn assert_snapshot(name: &str, actual: &str) {
    let path = snapshot_path(name);
    if std::env::var_os("UPDATE_SNAPSHOTS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing snapshot {}", path.display()));
    assert_eq!(
        actual, expected,
        "snapshot {name} changed; rerun with UPDATE_SNAPSHOTS=1 if intended"
    );
}

#[test]
fn help_snapshots() {
    let top = maicas(&["--help"]);
    assert!(top.status.success());
    assert_snapshot("help", &stdout(&top));
    for sub in SUBCOMMANDS {
        let o = maicas(&[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        assert_snapshot(&format!("help-{sub}"), &stdout(&o));
    }
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let o = maicas(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage: maicas <COMMAND>"));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["fit", "--table", "strain", "--bogus"][..],
        &["fit"][..],
        &["fit", "--table", "strain", "--points", "x.csv"][..],
        &["fit", "--table", "elbow"][..],
        &["invert", "--model", "m.json", "--f0", "abc"][..],
        &["serve", "--config", "a.json", "--input", "b.bin"][..],
    ] {
        let o = maicas(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn fit_strain_table_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("strain.csv");
    std::fs::write(
        &csv,
        "x,y_hz\n0,1710000000\n5,1726000000\n10,1740000000\n15,1755000000\n20,1769000000\n",
    )
    .unwrap();
    let model = dir.path().join("model.json");
    let o = maicas(&[
        "fit",
        "--points",
        csv.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("b = 2.94 MHz/%\n"), "{}", stdout(&o));

    let inv = maicas(&[
        "invert",
        "--model",
        model.to_str().unwrap(),
        "--f0",
        "1740000000",
    ]);
    assert!(inv.status.success());
    let text = stdout(&inv);
    let value: f64 = text
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!((value - 10.0).abs() < 0.5, "{text}");
    assert!(text.contains("quality = ok"));
}

#[test]
fn fit_bundled_tables() {
    for (table, line) in [
        ("pressure", "b = 0.432 MHz/mmHg"),
        ("stent", "b = 310 kHz/um"),
        ("bend", "b = 4.885 MHz/deg"),
    ] {
        let o = maicas(&["fit", "--table", table]);
        assert!(o.status.success());
        assert!(stdout(&o).starts_with(line), "{table}: {}", stdout(&o));
    }
}

#[test]
fn unknown_unit_needs_flag() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("points.csv");
    std::fs::write(&csv, "x,y_hz\n0,1\n1,2\n").unwrap();
    let o = maicas(&["fit", "--points", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).starts_with("error: kind=Config msg="),
        "{}",
        stderr(&o)
    );
    let o = maicas(&["fit", "--points", csv.to_str().unwrap(), "--unit", "mmHg"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn domain_errors_exit_1_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("strain.csv");
    std::fs::write(&csv, "x,y_hz\n5,1710000000\n5,1720000000\n").unwrap();
    let o = maicas(&["fit", "--points", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(
        err.starts_with("error: kind=DegenerateInput msg=\""),
        "{err}"
    );

    let flat = dir.path().join("flat.csv");
    let mut body = String::from("frequency_hz,magnitude_db\n");
    for i in 0..101 {
        body.push_str(&format!("{},-0.5\n", 1.0e9 + f64::from(i) * 1e7));
    }
    std::fs::write(&flat, body).unwrap();
    let o = maicas(&["extract", "--input", flat.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).starts_with("error: kind=NoResonance"),
        "{}",
        stderr(&o)
    );

    let o = maicas(&[
        "calibrate-baseline",
        "--out",
        dir.path().to_str().unwrap(),
        "--target-f0",
        "1e11",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).starts_with("error: kind=CalibrationFailed"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn simulate_is_byte_identical_and_reacts_to_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs_dir().join("graft_pressure.json");
    let run = |out: &str, seed: &str| {
        let out = dir.path().join(out);
        let o = maicas(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "--frames",
            "--sweeps",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b, c) = (run("a", "5"), run("b", "5"), run("c", "6"));
    for file in ["summary.csv", "summary.dat", "fit.json", "frames.bin"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    assert_ne!(
        std::fs::read(a.join("summary.csv")).unwrap(),
        std::fs::read(c.join("summary.csv")).unwrap()
    );
    let summary = std::fs::read_to_string(a.join("summary.csv")).unwrap();
    assert!(summary.starts_with("measurand,mean_f0_hz,sd_f0_hz,n\n"));
    assert_eq!(summary.lines().count(), 5);
    assert_eq!(std::fs::read_dir(a.join("sweeps")).unwrap().count(), 20);
}

#[test]
fn set_overrides_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs_dir().join("graft_pressure.json");
    let out = dir.path().join("o");
    let o = maicas(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "repeats=1",
        "--set",
        "measurand_grid=[0, 200]",
        "--sigma-db",
        "0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(
        summary.lines().skip(1).all(|l| l.ends_with(",0.0,1")),
        "{summary}"
    );

    let o = maicas(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "repeats=0",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: kind=Config"));
}

#[test]
fn calibrate_baseline_reproduces_bundled_configs() {
    let dir = tempfile::tempdir().unwrap();
    let o = maicas(&["calibrate-baseline", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut bundled: Vec<String> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    bundled.sort();
    assert_eq!(names, bundled);
    for name in names {
        assert_eq!(
            std::fs::read(dir.path().join(&name)).unwrap(),
            std::fs::read(configs_dir().join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn replay_writes_one_record_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs_dir().join("graft_pressure.json");
    let out = dir.path().join("sim");
    let o = maicas(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--frames",
        "--sweeps",
    ]);
    assert!(o.status.success());
    let model = out.join("fit.json");
    let log = dir.path().join("log.ndjson");
    for input in [out.join("frames.bin"), out.join("sweeps")] {
        let o = maicas(&[
            "replay",
            "--input",
            input.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
            "--out",
            log.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("frames = 20,"), "{}", stdout(&o));
    }
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.starts_with("{\"schema\":\"maicas-log/1\"}\n"));
    assert_eq!(text.lines().count(), 41);
}

#[test]
fn serve_and_gateway_over_loopback() {
    use std::io::{BufRead, BufReader};
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    assert!(maicas(&[
        "fit",
        "--table",
        "pressure",
        "--out",
        model.to_str().unwrap()
    ])
    .status
    .success());

    let config = configs_dir().join("graft_pressure.json");
    let mut server = Command::new(env!("CARGO_BIN_EXE_maicas"))
        .args([
            "serve",
            "--port",
            "0",
            "--interval-ms",
            "1",
            "--config",
            config.to_str().unwrap(),
        ])
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.as_mut().unwrap())
        .read_line(&mut line)
        .unwrap();
    let port = line
        .split(':')
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .to_string();

    let log = dir.path().join("log.ndjson");
    let o = maicas(&[
        "gateway",
        "--port",
        &port,
        "--model",
        model.to_str().unwrap(),
        "--out",
        log.to_str().unwrap(),
        "--frames",
        "20",
    ]);
    server.kill().unwrap();
    server.wait().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&o).trim(),
        r#"{"frames":20,"error_records":0,"sessions":1}"#
    );
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 21);
}

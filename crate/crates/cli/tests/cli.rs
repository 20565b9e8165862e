use std::path::Path;
use std::process::{Command, Output};

use phasemac::registration::read_volume;
use phasemac::report::{read_linearity_csv, read_sweep_csv, read_tracking_csv, Summary};

fn phasemac(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasemac"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Summary {
    let out = phasemac(dir, args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    Summary::parse(&String::from_utf8(out.stdout).unwrap()).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    phasemac(dir, args).status.code().unwrap()
}

fn num(s: &Summary, key: &str) -> f64 {
    s.get(key)
        .unwrap_or_else(|| panic!("no {key}"))
        .parse()
        .unwrap()
}

#[test]
fn linearity_default_reaches_seven_bits() {
    let dir = tempfile::tempdir().unwrap();
    let s = ok(dir.path(), &["linearity", "--summary", "summary.txt"]);
    assert!(num(&s, "effective_bits") >= 7.0);
    let rows =
        read_linearity_csv(std::fs::File::open(dir.path().join("linearity.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 512);
    let from_file =
        Summary::parse(&std::fs::read_to_string(dir.path().join("summary.txt")).unwrap()).unwrap();
    assert_eq!(from_file, s);
}

#[test]
fn linearity_linear_cell_stays_within_one_lsb() {
    let dir = tempfile::tempdir().unwrap();
    let s = ok(
        dir.path(),
        &["linearity", "--noise-sigma", "0", "--alpha3", "0"],
    );
    assert!(num(&s, "max_abs_error") <= num(&s, "lsb"));
}

#[test]
fn linearity_validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(dir.path(), &["linearity", "--length", "0"]), 2);
    assert_eq!(code(dir.path(), &["linearity", "--n-stages", "4"]), 2);
    std::fs::write(dir.path().join("bad.toml"), "[cell]\nkv = \"fast\"\n").unwrap();
    let out = phasemac(dir.path(), &["linearity", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kv") && err.contains("line 2"), "{err}");
    assert_eq!(
        code(dir.path(), &["linearity", "--config", "missing.toml"]),
        2
    );
    assert_eq!(code(dir.path(), &["no-such-command"]), 2);
}

#[test]
fn negative_oscillator_frequency_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(dir.path(), &["linearity", "--length", "64", "--kv", "6e8"]),
        1
    );
}

#[test]
fn calibrate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let s = ok(
        dir.path(),
        &["calibrate", "--target", "7.0", "--out", "a.toml"],
    );
    ok(
        dir.path(),
        &["calibrate", "--target", "7.0", "--out", "b.toml"],
    );
    let a = std::fs::read(dir.path().join("a.toml")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.toml")).unwrap());
    assert!((num(&s, "effective_bits") - 7.0).abs() <= 0.25);

    let rerun = ok(dir.path(), &["linearity", "--config", "a.toml"]);
    assert!((num(&rerun, "effective_bits") - 7.0).abs() <= 0.25);
}

#[test]
fn calibrate_unreachable_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasemac(dir.path(), &["calibrate", "--target", "12.0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("calibration failed"));
}

#[test]
fn track_reports_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let s = ok(
        dir.path(),
        &["track", "--perturbation", "0", "--cycles", "10"],
    );
    let trace =
        read_tracking_csv(std::fs::File::open(dir.path().join("track.csv")).unwrap()).unwrap();
    assert!(trace
        .records
        .iter()
        .all(|r| r.code_before == 128 && r.code_after == 128));
    assert_eq!(s.get("converged"), Some("true"));

    let s = ok(
        dir.path(),
        &["track", "--perturbation", "0.10", "--cycles", "60"],
    );
    assert_eq!(s.get("converged"), Some("true"));
    assert!(num(&s, "limit_cycle_span") <= 2.0);

    let s = ok(
        dir.path(),
        &["track", "--perturbation", "-0.9", "--cycles", "300"],
    );
    assert_eq!(s.get("converged"), Some("false"));
    assert_eq!(s.get("saturated"), Some("true"));

    assert_eq!(code(dir.path(), &["track", "--cycles", "0"]), 2);
    assert_eq!(code(dir.path(), &["track", "--code-bits", "0"]), 2);
}

#[test]
fn register_identity_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "phantom", "--size", "20", "--dtype", "i16", "--out", "ph.raw",
        ],
    );
    ok(
        dir.path(),
        &[
            "register",
            "--input",
            "ph.raw",
            "--output",
            "id.raw",
            "--backend",
            "ideal",
        ],
    );
    assert_eq!(
        std::fs::read(dir.path().join("ph.raw")).unwrap(),
        std::fs::read(dir.path().join("id.raw")).unwrap()
    );
    let s = ok(
        dir.path(),
        &[
            "register",
            "--input",
            "ph.raw",
            "--output",
            "r.raw",
            "--rotate",
            "z:10",
            "--translate",
            "3.5,-2.25,1.0",
        ],
    );
    assert!(num(&s, "match_rate_vs_ideal") >= 0.98);
    assert_eq!(
        read_volume(&dir.path().join("r.raw")).unwrap().dims(),
        [20, 20, 20]
    );

    std::fs::write(
        dir.path().join("m.txt"),
        "1 0 0 0\n0 1 0 0\n0 0 1 0\n1 2 3 1\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "register",
            "--input",
            "ph.raw",
            "--output",
            "t.raw",
            "--transform",
            "m.txt",
        ],
    );

    std::fs::copy(dir.path().join("ph.raw"), dir.path().join("orphan.raw")).unwrap();
    let out = phasemac(
        dir.path(),
        &["register", "--input", "orphan.raw", "--output", "o.raw"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("orphan.raw.meta"));

    std::fs::write(
        dir.path().join("sing.txt"),
        "0 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n",
    )
    .unwrap();
    assert_eq!(
        code(
            dir.path(),
            &[
                "register",
                "--input",
                "ph.raw",
                "--output",
                "o.raw",
                "--transform",
                "sing.txt"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            dir.path(),
            &["register", "--input", "ph.raw", "--output", "o.raw", "--rotate", "w:3"]
        ),
        2
    );
}

#[test]
fn sweep_rows_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("grid.toml"),
        "[[point]]\nkv = 1e8\n\n[[point]]\nkv = 5e7\npulse_scale = 2\n",
    )
    .unwrap();
    let s = ok(
        dir.path(),
        &["sweep", "--grid", "grid.toml", "--out", "g.csv"],
    );
    assert_eq!(num(&s, "rows"), 2.0);
    let rows = read_sweep_csv(std::fs::File::open(dir.path().join("g.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);

    let s = ok(dir.path(), &["sweep", "--tradeoff", "5"]);
    assert_eq!(num(&s, "rows"), 5.0);
    let rows = read_sweep_csv(std::fs::File::open(dir.path().join("sweep.csv")).unwrap()).unwrap();
    for pair in rows.windows(2) {
        assert!(pair[1].effective_bits >= pair[0].effective_bits);
    }

    std::fs::write(dir.path().join("empty.toml"), "").unwrap();
    assert_eq!(code(dir.path(), &["sweep", "--grid", "empty.toml"]), 2);
    assert_eq!(code(dir.path(), &["sweep", "--tradeoff", "0"]), 2);
    assert_eq!(code(dir.path(), &["sweep"]), 2);
}

#[test]
fn phantom_and_energy() {
    let dir = tempfile::tempdir().unwrap();
    let s = ok(dir.path(), &["phantom", "--size", "8", "--out", "p.raw"]);
    assert_eq!(num(&s, "voxels"), 512.0);
    assert!(dir.path().join("p.raw.meta").exists());
    assert_eq!(
        code(dir.path(), &["phantom", "--size", "0", "--out", "z.raw"]),
        2
    );

    let s = ok(dir.path(), &["energy", "--ops", "1000"]);
    assert_eq!(num(&s, "ratio"), 484.0);
    assert!(s.get("note").unwrap().contains("not a simulated"));
    let s = ok(dir.path(), &["energy", "--ops", "10", "--f0", "5e7"]);
    assert_eq!(s.get("clock_consistent"), Some("false"));
    assert_eq!(code(dir.path(), &["energy"]), 2);
}

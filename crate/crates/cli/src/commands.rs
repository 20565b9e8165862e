use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use phasemac::metrics::{tradeoff_points, MetricsError};
use phasemac::registration::{read_volume, voxel_match_rate, write_volume};
use phasemac::report::{self, Summary};
use phasemac::{
    calibrate_config, energy_report, power_consistency_check, resample_volume, run_calibration,
    run_sweep, sine_mac_experiment, Axis, BackendId, CalibrationError, RegistrationError,
    RigidTransform, SweepPoint, TrackingError, VoxelType,
};

use crate::config::{resolve, CellArgs, RunConfig};
use crate::CliError;

fn sim(e: impl std::fmt::Display) -> CliError {
    CliError::Sim(e.to_string())
}

fn metrics_err(e: MetricsError) -> CliError {
    match e {
        MetricsError::InvalidExperiment { .. } => CliError::Usage(e.to_string()),
        _ => sim(e),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| sim(format!("{}: {e}", path.display())))
}

fn print(s: &Summary) {
    print!("{s}");
}

#[derive(Debug, Args)]
pub struct LinearityArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    cell: CellArgs,
    /// Number of samples.
    #[arg(long)]
    length: Option<usize>,
    /// Sine frequency, Hz.
    #[arg(long)]
    f_sig: Option<f64>,
    /// Sample period and nominal pulse width, s.
    #[arg(long)]
    ts: Option<f64>,
    /// Pulse width multiplier.
    #[arg(long)]
    pulse_scale: Option<u64>,
    /// Per-step CSV trace.
    #[arg(long, default_value = "linearity.csv")]
    trace: PathBuf,
    /// Also write the summary to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
}

pub fn linearity(a: &LinearityArgs) -> Result<(), CliError> {
    let mut rc = resolve(a.config.as_deref(), &a.cell)?;
    let exp = &mut rc.linearity;
    if let Some(v) = a.length {
        exp.length = v;
    }
    if let Some(v) = a.f_sig {
        exp.f_sig = v;
    }
    if let Some(v) = a.ts {
        exp.ts = v;
    }
    if let Some(v) = a.pulse_scale {
        exp.pulse_scale = v;
    }
    exp.validate().map_err(metrics_err)?;
    exp.pulse_ticks(&rc.cell).map_err(metrics_err)?;

    let rep = sine_mac_experiment(&rc.cell, &rc.linearity).map_err(metrics_err)?;
    report::write_linearity_csv(create(&a.trace)?, &rep).map_err(sim)?;

    let lsb = rc.cell.phase_lsb();
    let mut s = rep.summary().to_summary();
    s.push("lsb", lsb)
        .push("max_error_lsb", rep.max_abs_error / lsb)
        .push("alpha3", rc.cell.alpha3)
        .push("kv", rc.cell.kv)
        .push("trace", a.trace.display());
    if let Some(p) = &a.summary {
        std::fs::write(p, s.to_string()).map_err(|e| sim(format!("{}: {e}", p.display())))?;
    }
    print(&s);
    Ok(())
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    cell: CellArgs,
    /// Effective bits to reach on the configured linearity experiment.
    #[arg(long, default_value_t = 7.0)]
    target: f64,
    /// Calibrated run configuration (TOML).
    #[arg(long, default_value = "calibrated.toml")]
    out: PathBuf,
}

pub fn calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let mut rc = resolve(a.config.as_deref(), &a.cell)?;
    rc.linearity.validate().map_err(metrics_err)?;
    let cal = calibrate_config(&rc.cell, &rc.linearity, a.target).map_err(|e| match e {
        CalibrationError::Metrics(m) => metrics_err(m),
        other => CliError::Sim(format!("calibration failed: {other}")),
    })?;
    rc.cell = cal.config;
    std::fs::write(&a.out, rc.to_toml()).map_err(|e| sim(format!("{}: {e}", a.out.display())))?;

    let mut s = Summary::new();
    s.push("target_bits", a.target)
        .push("alpha3", rc.cell.alpha3)
        .push("effective_bits", cal.effective_bits);
    if let Some(note) = &cal.note {
        s.push("note", note);
    }
    s.push("config", a.out.display());
    print(&s);
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    cell: CellArgs,
    /// Relative error of the free-running frequency, e.g. 0.1 for +10%.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    perturbation: f64,
    /// Comparison windows to simulate.
    #[arg(long, default_value_t = 64)]
    cycles: usize,
    /// Target count per comparison window.
    #[arg(long)]
    f_in: Option<u64>,
    #[arg(long)]
    divide_ratio: Option<u32>,
    #[arg(long)]
    code_bits: Option<u32>,
    /// Fractional frequency change per code step.
    #[arg(long)]
    step_per_code: Option<f64>,
    #[arg(long)]
    initial_code: Option<u32>,
    /// Per-cycle CSV trace.
    #[arg(long, default_value = "track.csv")]
    trace: PathBuf,
}

pub fn track(a: &TrackArgs) -> Result<(), CliError> {
    let mut rc = resolve(a.config.as_deref(), &a.cell)?;
    let lc = &mut rc.tracking;
    if let Some(v) = a.f_in {
        lc.f_in = v;
    }
    if let Some(v) = a.divide_ratio {
        lc.divide_ratio = v;
    }
    if let Some(v) = a.code_bits {
        lc.code_bits = v;
    }
    if let Some(v) = a.step_per_code {
        lc.step_per_code = v;
    }
    if let Some(v) = a.initial_code {
        lc.initial_code = v;
    }
    let out =
        run_calibration(&rc.cell, &rc.tracking, a.perturbation, a.cycles).map_err(|e| match e {
            TrackingError::InvalidConfig { .. } => CliError::Usage(e.to_string()),
            TrackingError::Cell(phasemac::CellError::Config(_)) => CliError::Usage(e.to_string()),
            _ => sim(e),
        })?;
    report::write_tracking_csv(create(&a.trace)?, &out.trace).map_err(sim)?;

    let f_in = rc.tracking.f_in;
    let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
    let mut s = Summary::new();
    s.push("perturbation", a.perturbation)
        .push("cycles", a.cycles)
        .push("initial_code", rc.tracking.initial_code)
        .push("final_code", out.final_code)
        .push("converged", out.converged)
        .push(
            "converged_at",
            opt(out.trace.converged_at(f_in).map(|v| v.to_string())),
        )
        .push(
            "limit_cycle_span",
            opt(out.trace.limit_cycle_span(f_in).map(|v| v.to_string())),
        )
        .push("saturated", out.saturated)
        .push("trace", a.trace.display());
    print(&s);
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Backend {
    Ideal,
    Vco,
}

impl From<Backend> for BackendId {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Ideal => BackendId::Ideal,
            Backend::Vco => BackendId::VcoCell,
        }
    }
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    cell: CellArgs,
    /// Input raw volume (metadata in `<input>.meta`).
    #[arg(long)]
    input: PathBuf,
    /// Output raw volume.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "vco")]
    backend: Backend,
    /// Rotation `AXIS:DEGREES` about the voxel origin; repeatable, applied in order.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "transform")]
    rotate: Vec<String>,
    /// Translation `x,y,z` in voxels, applied after the rotations.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "transform")]
    translate: Option<String>,
    /// File with 16 numbers of a row-vector 4×4 matrix.
    #[arg(long)]
    transform: Option<PathBuf>,
}

fn parse_triple(s: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("expected `x,y,z`, got `{s}`")))?;
    <[f64; 3]>::try_from(parts).map_err(|_| CliError::Usage(format!("expected `x,y,z`, got `{s}`")))
}

fn parse_rotation(s: &str) -> Result<RigidTransform, CliError> {
    let bad = || CliError::Usage(format!("expected `AXIS:DEGREES`, got `{s}`"));
    let (axis, deg) = s.split_once(':').ok_or_else(bad)?;
    let axis = match axis.trim().to_ascii_lowercase().as_str() {
        "x" => Axis::X,
        "y" => Axis::Y,
        "z" => Axis::Z,
        _ => return Err(bad()),
    };
    let deg: f64 = deg.trim().parse().map_err(|_| bad())?;
    if !deg.is_finite() {
        return Err(bad());
    }
    Ok(RigidTransform::rotation(axis, deg.to_radians()))
}

fn build_transform(a: &RegisterArgs) -> Result<RigidTransform, CliError> {
    if let Some(p) = &a.transform {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        return RigidTransform::parse(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())));
    }
    let mut m = RigidTransform::identity();
    for r in &a.rotate {
        m = m.then(&parse_rotation(r)?);
    }
    if let Some(t) = &a.translate {
        m = m.then(&RigidTransform::translation(parse_triple(t)?));
    }
    Ok(m)
}

fn registration_err(e: RegistrationError) -> CliError {
    match e {
        RegistrationError::Mac(_) => sim(e),
        _ => CliError::Usage(e.to_string()),
    }
}

pub fn register(a: &RegisterArgs) -> Result<(), CliError> {
    let rc = resolve(a.config.as_deref(), &a.cell)?;
    let m = build_transform(a)?;
    let src = read_volume(&a.input).map_err(|e| CliError::Usage(e.to_string()))?;
    let backend = BackendId::from(a.backend);
    let out = resample_volume(&src, &m, backend, &rc.cell).map_err(registration_err)?;
    write_volume(&a.output, &out.volume).map_err(sim)?;

    let [nx, ny, nz] = src.dims();
    let mut s = Summary::new();
    s.push("backend", backend)
        .push("dims", format!("{nx}x{ny}x{nz}"))
        .push("voxels", src.len())
        .push("determinant", m.determinant())
        .push("ops_count", out.ops_count);
    if backend == BackendId::VcoCell {
        let ideal =
            resample_volume(&src, &m, BackendId::Ideal, &rc.cell).map_err(registration_err)?;
        s.push(
            "match_rate_vs_ideal",
            voxel_match_rate(&out.volume, &ideal.volume),
        );
    }
    s.push("output", a.output.display());
    print(&s);
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    cell: CellArgs,
    /// Points halving kv and doubling the pulse width at each step.
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    tradeoff: Option<usize>,
    /// TOML grid with one `[[point]]` table per sweep point.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// One CSV row per point.
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(default)]
    point: Vec<SweepPoint>,
}

pub fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let rc: RunConfig = resolve(a.config.as_deref(), &a.cell)?;
    rc.linearity.validate().map_err(metrics_err)?;
    let points = match (&a.grid, a.tradeoff) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            toml::from_str::<GridFile>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
                .point
        }
        (None, Some(n)) => tradeoff_points(&rc.cell, &rc.linearity, n),
        (None, None) => Vec::new(),
    };
    if points.is_empty() {
        return Err(CliError::Usage("sweep grid is empty".into()));
    }
    for (i, pt) in points.iter().enumerate() {
        let (cfg, exp) = pt.apply(&rc.cell, &rc.linearity);
        cfg.validate()
            .map_err(|e| CliError::Usage(format!("point {i}: {e}")))?;
        exp.pulse_ticks(&cfg)
            .map_err(|e| CliError::Usage(format!("point {i}: {e}")))?;
    }
    let rows = run_sweep(&rc.cell, &rc.linearity, &points).map_err(metrics_err)?;
    report::write_sweep_csv(create(&a.out)?, &rows).map_err(sim)?;

    let mut s = Summary::new();
    s.push("rows", rows.len());
    for r in &rows {
        s.push(
            &format!("row {}", r.index),
            format!(
                "kv={} pulse_scale={} alpha3={} n_stages={} effective_bits={} max_abs_error={}",
                r.kv, r.pulse_scale, r.alpha3, r.n_stages, r.effective_bits, r.max_abs_error
            ),
        );
    }
    s.push("out", a.out.display());
    print(&s);
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Dtype {
    U8,
    I16,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Edge length in voxels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, value_enum, default_value = "u8")]
    dtype: Dtype,
    /// Output raw volume; metadata goes to `<out>.meta`.
    #[arg(long)]
    out: PathBuf,
}

pub fn phantom(a: &PhantomArgs) -> Result<(), CliError> {
    let dtype = match a.dtype {
        Dtype::U8 => VoxelType::U8,
        Dtype::I16 => VoxelType::I16,
    };
    let vol = phasemac::registration::phantom(a.size, dtype)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_volume(&a.out, &vol).map_err(sim)?;
    let nonzero = vol
        .data()
        .iter()
        .filter(|&&v| v != vol.background())
        .count();
    let mut s = Summary::new();
    s.push("size", a.size)
        .push("voxels", vol.len())
        .push("foreground_voxels", nonzero)
        .push("output", a.out.display());
    print(&s);
    Ok(())
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    cell: CellArgs,
    /// Number of multiply-accumulate operations.
    #[arg(long)]
    ops: u64,
}

pub fn energy(a: &EnergyArgs) -> Result<(), CliError> {
    let rc = resolve(a.config.as_deref(), &a.cell)?;
    let mut s = energy_report(a.ops).to_summary();
    let pc = power_consistency_check(&rc.cell);
    s.push("reported_power_w", format!("{:e}", pc.reported_power_w))
        .push("reported_supply_v", pc.reported_supply_v)
        .push("reported_clock_hz", pc.reported_clock_hz)
        .push("model_f0", pc.model_f0)
        .push("clock_consistent", pc.consistent)
        .push("energy_per_clock_j", format!("{:e}", pc.energy_per_clock))
        .push("supply_current_a", format!("{:e}", pc.supply_current));
    print(&s);
    Ok(())
}

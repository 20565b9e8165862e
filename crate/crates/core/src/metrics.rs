//! Linearity and energy measurements.
//!
//! The linearity experiment multiplies a sampled sine row vector with a
//! constant column vector on both backends and records the running MAC after
//! every step. Effective bits are `log2(full_scale / max_abs_error) − 1`, where
//! `full_scale` is the span of the ideal running trajectory (including the
//! zero it starts from).

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{CellError, MacCellConfig};
use crate::mac::{compare_backends, MacError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("invalid experiment `{field}`: {reason}")]
    InvalidExperiment { field: &'static str, reason: String },
    #[error(transparent)]
    Mac(#[from] MacError),
}

impl From<CellError> for MetricsError {
    fn from(e: CellError) -> Self {
        MetricsError::Mac(MacError::Cell(e))
    }
}

/// Sine-times-constant MAC experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SineExperiment {
    pub length: usize,
    /// Sample period of the sine and nominal pulse width, s.
    pub ts: f64,
    /// Sine frequency, Hz.
    pub f_sig: f64,
    /// Pulse width multiplier; the pulse is `ts · pulse_scale`.
    pub pulse_scale: u64,
}

impl Default for SineExperiment {
    fn default() -> Self {
        SineExperiment {
            length: 512,
            ts: 10e-9,
            f_sig: 0.6e6,
            pulse_scale: 1,
        }
    }
}

impl SineExperiment {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let bad = |field, reason: &str| {
            Err(MetricsError::InvalidExperiment {
                field,
                reason: reason.to_string(),
            })
        };
        if self.length == 0 {
            return bad("length", "must be at least 1");
        }
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return bad("ts", "must be finite and > 0");
        }
        if !(self.f_sig.is_finite() && self.f_sig >= 0.0) {
            return bad("f_sig", "must be finite and >= 0");
        }
        if self.pulse_scale == 0 {
            return bad("pulse_scale", "must be at least 1");
        }
        Ok(())
    }

    /// Pulse width in ticks of `cfg.t_lsb`.
    pub fn pulse_ticks(&self, cfg: &MacCellConfig) -> Result<u64, MetricsError> {
        let exact = self.ts * self.pulse_scale as f64 / cfg.t_lsb;
        let ticks = exact.round();
        if ticks < 1.0 || (exact - ticks).abs() > 1e-6 * ticks {
            return Err(MetricsError::InvalidExperiment {
                field: "ts",
                reason: format!("pulse width is not a whole number of {} s ticks", cfg.t_lsb),
            });
        }
        Ok(ticks as u64)
    }

    /// Row vector `v_fs·sin(j·ω·ts)` and the constant weight column.
    pub fn vectors(&self, cfg: &MacCellConfig) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
        self.validate()?;
        let ticks = self.pulse_ticks(cfg)?;
        let omega_ts = TAU * self.f_sig * self.ts;
        let x = (0..self.length)
            .map(|j| cfg.v_fullscale * (j as f64 * omega_ts).sin())
            .collect();
        let w = vec![cfg.weight_per_tick() * ticks as f64; self.length];
        Ok((x, w))
    }
}

/// `log2(full_scale / max_abs_error) − 1`; `+∞` when the error is exactly zero.
pub fn effective_bits(full_scale: f64, max_abs_error: f64) -> f64 {
    if max_abs_error == 0.0 {
        f64::INFINITY
    } else {
        (full_scale / max_abs_error).log2() - 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearityReport {
    pub ideal: Vec<f64>,
    pub measured: Vec<f64>,
    pub errors: Vec<f64>,
    pub max_abs_error: f64,
    pub rms_error: f64,
    pub effective_bits: f64,
    pub full_scale: f64,
}

impl LinearityReport {
    pub fn summary(&self) -> LinearitySummary {
        LinearitySummary {
            length: self.ideal.len(),
            effective_bits: self.effective_bits,
            max_abs_error: self.max_abs_error,
            rms_error: self.rms_error,
            full_scale: self.full_scale,
        }
    }
}

/// Scalar part of a [`LinearityReport`], as printed and written to summary files.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearitySummary {
    pub length: usize,
    pub effective_bits: f64,
    pub max_abs_error: f64,
    pub rms_error: f64,
    pub full_scale: f64,
}

pub fn sine_mac_experiment(
    cfg: &MacCellConfig,
    exp: &SineExperiment,
) -> Result<LinearityReport, MetricsError> {
    let (x, w) = exp.vectors(cfg)?;
    let rec = compare_backends(cfg, &x, &w)?;
    let (lo, hi) = rec
        .ideal
        .iter()
        .fold((0.0_f64, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let full_scale = hi - lo;
    Ok(LinearityReport {
        effective_bits: effective_bits(full_scale, rec.max_abs_error),
        full_scale,
        max_abs_error: rec.max_abs_error,
        rms_error: rec.rms_error,
        ideal: rec.ideal,
        measured: rec.measured,
        errors: rec.errors,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("target {0} bits is outside the supported range (4, 10)")]
    TargetOutOfRange(f64),
    #[error("target {target} bits is unreachable: {reason}")]
    Unreachable { target: f64, reason: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub config: MacCellConfig,
    pub effective_bits: f64,
    pub note: Option<String>,
}

/// Upper end of the third-order coefficient search.
pub const ALPHA3_MAX: f64 = 20.0;
/// Accepted distance between the achieved and the requested effective bits.
pub const CALIBRATION_TOLERANCE_BITS: f64 = 0.25;

/// Calibrates the default config on the default sine experiment.
pub fn calibrate_default_config(target_bits: f64) -> Result<Calibration, CalibrationError> {
    calibrate_config(
        &MacCellConfig::default(),
        &SineExperiment::default(),
        target_bits,
    )
}

/// Bisects `alpha3` for the largest tuning-curve nonlinearity that still meets
/// `target_bits` on `exp`. The result reaches at least the target and at most
/// `target + CALIBRATION_TOLERANCE_BITS`.
pub fn calibrate_config(
    base: &MacCellConfig,
    exp: &SineExperiment,
    target_bits: f64,
) -> Result<Calibration, CalibrationError> {
    if !(target_bits > 4.0 && target_bits < 10.0) {
        return Err(CalibrationError::TargetOutOfRange(target_bits));
    }
    let with_alpha3 = |a: f64| MacCellConfig {
        alpha3: a,
        ..base.clone()
    };
    let bits = |a: f64| -> Result<f64, MetricsError> {
        Ok(sine_mac_experiment(&with_alpha3(a), exp)?.effective_bits)
    };

    let floor_bits = bits(0.0)?;
    if floor_bits < target_bits {
        if floor_bits >= target_bits - CALIBRATION_TOLERANCE_BITS {
            return Ok(Calibration {
                config: with_alpha3(0.0),
                effective_bits: floor_bits,
                note: Some(format!(
                    "quantization alone limits the cell to {floor_bits:.3} bits; returning alpha3 = 0"
                )),
            });
        }
        return Err(CalibrationError::Unreachable {
            target: target_bits,
            reason: format!("alpha3 = 0 only reaches {floor_bits:.3} bits"),
        });
    }
    if bits(ALPHA3_MAX)? >= target_bits {
        return Err(CalibrationError::Unreachable {
            target: target_bits,
            reason: format!("alpha3 = {ALPHA3_MAX} still exceeds the target"),
        });
    }

    let (mut lo, mut hi) = (0.0_f64, ALPHA3_MAX);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if bits(mid)? >= target_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let achieved = bits(lo)?;
    if achieved > target_bits + CALIBRATION_TOLERANCE_BITS {
        return Err(CalibrationError::Unreachable {
            target: target_bits,
            reason: format!("search settled at {achieved:.3} bits"),
        });
    }
    Ok(Calibration {
        config: with_alpha3(lo),
        effective_bits: achieved,
        note: None,
    })
}

/// Published per-operation energy of the time-domain cell, fJ.
pub const TIME_DOMAIN_FJ_PER_OP: f64 = 2.0;
/// Published per-operation energy of an optimized digital multiplier, fJ.
pub const DIGITAL_FJ_PER_OP: f64 = 968.0;

pub const ENERGY_NOTE: &str =
    "accounting model: published per-op constants, not a simulated electrical quantity";

/// Energy bookkeeping for a given number of MAC operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub ops_count: u64,
    /// J/op.
    pub e_per_op_time_domain: f64,
    /// J/op.
    pub e_per_op_digital: f64,
    /// J.
    pub total_time_domain: f64,
    /// J.
    pub total_digital: f64,
    pub ratio: f64,
}

pub fn energy_report(ops_count: u64) -> EnergyReport {
    let ops = ops_count as f64;
    EnergyReport {
        ops_count,
        e_per_op_time_domain: TIME_DOMAIN_FJ_PER_OP * 1e-15,
        e_per_op_digital: DIGITAL_FJ_PER_OP * 1e-15,
        total_time_domain: ops * TIME_DOMAIN_FJ_PER_OP * 1e-15,
        total_digital: ops * DIGITAL_FJ_PER_OP * 1e-15,
        ratio: DIGITAL_FJ_PER_OP / TIME_DOMAIN_FJ_PER_OP,
    }
}

pub const REPORTED_POWER_W: f64 = 86e-6;
pub const REPORTED_SUPPLY_V: f64 = 1.1;
pub const REPORTED_CLOCK_HZ: f64 = 100e6;

/// Reported silicon operating point next to the model's clocking. Nothing here
/// is simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCheck {
    pub reported_power_w: f64,
    pub reported_supply_v: f64,
    pub reported_clock_hz: f64,
    pub model_f0: f64,
    pub consistent: bool,
    /// Reported power divided by the reported clock, J per clock period.
    pub energy_per_clock: f64,
    /// Reported supply current, A.
    pub supply_current: f64,
}

pub fn power_consistency_check(cfg: &MacCellConfig) -> PowerCheck {
    PowerCheck {
        reported_power_w: REPORTED_POWER_W,
        reported_supply_v: REPORTED_SUPPLY_V,
        reported_clock_hz: REPORTED_CLOCK_HZ,
        model_f0: cfg.f0,
        consistent: cfg.f0 == REPORTED_CLOCK_HZ,
        energy_per_clock: REPORTED_POWER_W / REPORTED_CLOCK_HZ,
        supply_current: REPORTED_POWER_W / REPORTED_SUPPLY_V,
    }
}

/// Overrides applied to the base config for one sweep point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepPoint {
    pub kv: Option<f64>,
    pub pulse_scale: Option<u64>,
    pub alpha3: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub n_stages: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub kv: f64,
    pub pulse_scale: u64,
    pub alpha3: f64,
    pub n_stages: u32,
    pub effective_bits: f64,
    pub max_abs_error: f64,
    pub rms_error: f64,
    pub final_ideal: f64,
}

/// `n` points halving `kv` and doubling the pulse width each step, which keeps
/// every realized weight, and hence the ideal result, unchanged.
pub fn tradeoff_points(base: &MacCellConfig, exp: &SineExperiment, n: usize) -> Vec<SweepPoint> {
    (0..n)
        .map(|k| SweepPoint {
            kv: Some(base.kv / f64::powi(2.0, k as i32)),
            pulse_scale: Some(exp.pulse_scale << k),
            ..Default::default()
        })
        .collect()
}

impl SweepPoint {
    pub fn apply(
        &self,
        base: &MacCellConfig,
        exp: &SineExperiment,
    ) -> (MacCellConfig, SineExperiment) {
        let mut cfg = base.clone();
        let mut exp = exp.clone();
        if let Some(v) = self.kv {
            cfg.kv = v;
        }
        if let Some(v) = self.alpha3 {
            cfg.alpha3 = v;
        }
        if let Some(v) = self.noise_sigma {
            cfg.noise_sigma = v;
        }
        if let Some(v) = self.n_stages {
            cfg.n_stages = v;
        }
        if let Some(v) = self.pulse_scale {
            exp.pulse_scale = v;
        }
        (cfg, exp)
    }
}

/// Runs the sine experiment at every point. Points are evaluated in parallel
/// but rows come back in input order.
pub fn run_sweep(
    base: &MacCellConfig,
    exp: &SineExperiment,
    points: &[SweepPoint],
) -> Result<Vec<SweepRow>, MetricsError> {
    points
        .par_iter()
        .enumerate()
        .map(|(index, pt)| {
            let (cfg, exp) = pt.apply(base, exp);
            cfg.validate().map_err(CellError::from)?;
            let rep = sine_mac_experiment(&cfg, &exp)?;
            Ok(SweepRow {
                index,
                kv: cfg.kv,
                pulse_scale: exp.pulse_scale,
                alpha3: cfg.alpha3,
                n_stages: cfg.n_stages,
                effective_bits: rep.effective_bits,
                max_abs_error: rep.max_abs_error,
                rms_error: rep.rms_error,
                final_ideal: rep.ideal.last().copied().unwrap_or(0.0),
            })
        })
        .collect()
}

//! Multiply-accumulate semantics and backend dispatch.
//!
//! Values are expressed in radians of differential phase: a weight is
//! `W_j = 2π·K_v·Δt_j` (rad/V) and an input is a voltage, so `Σ W_j·X_j` is
//! directly comparable with the phase a physical cell accumulates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{run_mac_schedule, CellError, MacCellConfig, VcoCell, WeightPulse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendId {
    /// Exact floating-point evaluation.
    Ideal,
    /// Behavioral model of the time-domain cell.
    VcoCell,
}

impl std::fmt::Display for BackendId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendId::Ideal => "ideal",
            BackendId::VcoCell => "vco",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacResult {
    pub value: f64,
    /// Differential phase code, only produced by physical backends.
    pub raw_code: Option<i64>,
    pub ops_count: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MacError {
    #[error("input has {x_len} elements but weights have {w_len}")]
    Dimension { x_len: usize, w_len: usize },
    #[error("MAC vectors must have at least one element")]
    Empty,
    #[error("{which}[{index}] is not finite")]
    NonFinite { which: &'static str, index: usize },
    #[error(transparent)]
    Cell(#[from] CellError),
}

fn check_inputs(x: &[f64], w: &[f64]) -> Result<(), MacError> {
    if x.len() != w.len() {
        return Err(MacError::Dimension {
            x_len: x.len(),
            w_len: w.len(),
        });
    }
    if x.is_empty() {
        return Err(MacError::Empty);
    }
    for (which, v) in [("x", x), ("w", w)] {
        if let Some(index) = v.iter().position(|e| !e.is_finite()) {
            return Err(MacError::NonFinite { which, index });
        }
    }
    Ok(())
}

/// Running left-to-right sums of `w_j·x_j`. Inputs must already be checked.
fn running_ideal(x: &[f64], w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    x.iter()
        .zip(w)
        .map(|(xi, wi)| {
            acc += wi * xi;
            acc
        })
        .collect()
}

/// `Σ w_j·x_j`, summed strictly left to right so results are bit-reproducible.
pub fn mac_ideal(x: &[f64], w: &[f64]) -> Result<MacResult, MacError> {
    check_inputs(x, w)?;
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        acc += wi * xi;
    }
    Ok(MacResult {
        value: acc,
        raw_code: None,
        ops_count: x.len(),
    })
}

/// Encodes output-unit weights as signed pulses for `cfg`.
pub fn weights_to_pulses(w: &[f64], cfg: &MacCellConfig) -> Result<Vec<WeightPulse>, CellError> {
    w.iter()
        .enumerate()
        .map(|(j, &wj)| WeightPulse::from_weight(wj, cfg, j))
        .collect()
}

/// Runs one MAC on the chosen backend. The VcoCell path builds a fresh cell,
/// so concurrent calls never share state.
pub fn mac_run(
    backend: BackendId,
    cfg: &MacCellConfig,
    x: &[f64],
    w: &[f64],
) -> Result<MacResult, MacError> {
    match backend {
        BackendId::Ideal => mac_ideal(x, w),
        BackendId::VcoCell => {
            check_inputs(x, w)?;
            cfg.validate().map_err(CellError::from)?;
            let pulses = weights_to_pulses(w, cfg)?;
            let (result, _) = run_mac_schedule(cfg, x, &pulses, cfg.t_hold)?;
            Ok(result)
        }
    }
}

/// Step-by-step comparison of the VcoCell backend against the ideal oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub ideal: Vec<f64>,
    pub measured: Vec<f64>,
    /// `measured − ideal` after every accumulation step.
    pub errors: Vec<f64>,
    pub max_abs_error: f64,
    pub rms_error: f64,
}

impl ErrorRecord {
    fn from_traces(ideal: Vec<f64>, measured: Vec<f64>) -> Self {
        let errors: Vec<f64> = measured.iter().zip(&ideal).map(|(m, i)| m - i).collect();
        let max_abs_error = errors.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
        let rms_error = if errors.is_empty() {
            0.0
        } else {
            (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
        };
        ErrorRecord {
            ideal,
            measured,
            errors,
            max_abs_error,
            rms_error,
        }
    }
}

pub fn compare_backends(
    cfg: &MacCellConfig,
    x: &[f64],
    w: &[f64],
) -> Result<ErrorRecord, MacError> {
    check_inputs(x, w)?;
    let pulses = weights_to_pulses(w, cfg)?;
    let ideal = running_ideal(x, w);

    let mut cell = VcoCell::new(cfg.clone())?;
    let mut codes = Vec::with_capacity(x.len());
    let (baseline, _) =
        cell.run_schedule(x, &pulses, cfg.t_hold, |_, r| codes.push(r.code_diff))?;
    let measured = codes
        .into_iter()
        .map(|c| cell.code_to_value(c - baseline.code_diff))
        .collect();
    Ok(ErrorRecord::from_traces(ideal, measured))
}

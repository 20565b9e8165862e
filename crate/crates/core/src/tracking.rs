//! Background tracking of the oscillator gain.
//!
//! A counter clocked by a reference oscillator is compared against a preset
//! `f_in` once per comparator period (the sampling clock divided by
//! `divide_ratio`). The comparator nudges the tail-current code one step per
//! comparison: down when the oscillator runs fast, up when it runs slow, and
//! not at all on an exact match. The counter is cleared after each comparison.
//! The settled code is then broadcast to every cell in the array, where
//! per-cell tail-current mismatch limits how well it corrects them.
//!
//! The code acts additively on the tuning curve: an oscillator with process
//! error `p` and code `c` runs at `f0·(1 + p + step·(c − mid))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{CellError, ConfigError, MacCellConfig, VcoCell};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackingError {
    #[error("invalid tracking `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("mismatch model has {factors} factors but {cells} cells were given")]
    MissingFactors { factors: usize, cells: usize },
    #[error(transparent)]
    Cell(#[from] CellError),
}

impl From<ConfigError> for TrackingError {
    fn from(e: ConfigError) -> Self {
        TrackingError::Cell(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingLoopConfig {
    /// Target count per comparison window.
    pub f_in: u64,
    /// Sampling clock cycles per comparison window.
    pub divide_ratio: u32,
    pub code_bits: u32,
    /// Fractional frequency change per code step.
    pub step_per_code: f64,
    pub initial_code: u32,
    /// Sampling clock, Hz.
    pub sample_clock_hz: f64,
}

impl Default for TrackingLoopConfig {
    fn default() -> Self {
        TrackingLoopConfig {
            f_in: 200,
            divide_ratio: 200,
            code_bits: 8,
            step_per_code: 0.005,
            initial_code: 128,
            sample_clock_hz: 100e6,
        }
    }
}

impl TrackingLoopConfig {
    pub fn validate(&self) -> Result<(), TrackingError> {
        let bad = |field, reason: String| Err(TrackingError::InvalidConfig { field, reason });
        if self.f_in == 0 {
            return bad("f_in", "must be > 0".into());
        }
        if self.divide_ratio == 0 {
            return bad("divide_ratio", "must be >= 1".into());
        }
        if !(1..=31).contains(&self.code_bits) {
            return bad("code_bits", "must be in 1..=31".into());
        }
        if !(self.step_per_code.is_finite() && self.step_per_code > 0.0) {
            return bad("step_per_code", "must be finite and > 0".into());
        }
        if self.initial_code > self.max_code() {
            return bad(
                "initial_code",
                format!(
                    "{} exceeds the {}-bit range",
                    self.initial_code, self.code_bits
                ),
            );
        }
        if !(self.sample_clock_hz.is_finite() && self.sample_clock_hz > 0.0) {
            return bad("sample_clock_hz", "must be finite and > 0".into());
        }
        Ok(())
    }

    pub fn max_code(&self) -> u32 {
        (1u32 << self.code_bits) - 1
    }

    pub fn mid_code(&self) -> u32 {
        1u32 << (self.code_bits - 1)
    }

    /// Comparator period, s.
    pub fn window(&self) -> f64 {
        f64::from(self.divide_ratio) / self.sample_clock_hz
    }

    /// Fractional frequency trim realized by `code`.
    pub fn trim(&self, code: u32) -> f64 {
        self.step_per_code * (f64::from(code) - f64::from(self.mid_code()))
    }
}

/// One bang-bang update; saturates at both ends of the code range.
pub fn tracking_step(code: u32, measured_count: u64, cfg: &TrackingLoopConfig) -> u32 {
    use std::cmp::Ordering::*;
    match measured_count.cmp(&cfg.f_in) {
        Greater => code.saturating_sub(1),
        Less => (code + 1).min(cfg.max_code()),
        Equal => code,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackingRecord {
    pub cycle: usize,
    pub count: u64,
    pub code_before: u32,
    pub code_after: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrackingTrace {
    pub records: Vec<TrackingRecord>,
}

impl TrackingTrace {
    /// First record index from which every measured count stays within ±1 of `f_in`.
    pub fn converged_at(&self, f_in: u64) -> Option<usize> {
        let within = |r: &TrackingRecord| r.count.abs_diff(f_in) <= 1;
        let tail = self.records.iter().rev().take_while(|r| within(r)).count();
        (tail > 0).then(|| self.records.len() - tail)
    }

    /// Peak-to-peak code excursion after convergence.
    pub fn limit_cycle_span(&self, f_in: u64) -> Option<u32> {
        let start = self.converged_at(f_in)?;
        let codes = self.records[start..]
            .iter()
            .flat_map(|r| [r.code_before, r.code_after]);
        let (lo, hi) = codes.fold((u32::MAX, 0), |(lo, hi), c| (lo.min(c), hi.max(c)));
        Some(hi - lo)
    }

    /// Codes are monotone up to the first comparison that hits or crosses the target.
    pub fn monotone_until_first_crossing(&self, f_in: u64) -> bool {
        let Some(first) = self.records.first() else {
            return true;
        };
        let above = first.count > f_in;
        let mut prev = first.code_before;
        for r in &self.records {
            let crossed = if above {
                r.count <= f_in
            } else {
                r.count >= f_in
            };
            if crossed {
                break;
            }
            let ok = if above {
                r.code_after <= prev
            } else {
                r.code_after >= prev
            };
            if !ok {
                return false;
            }
            prev = r.code_after;
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingOutcome {
    pub final_code: u32,
    pub trace: TrackingTrace,
    pub converged: bool,
    /// Code pinned at a range end while the count was still off target.
    pub saturated: bool,
}

/// Simulates `n_cycles` comparison windows of the reference oscillator with a
/// relative process error `perturbation` on its free-running frequency.
pub fn run_calibration(
    cell_cfg: &MacCellConfig,
    loop_cfg: &TrackingLoopConfig,
    perturbation: f64,
    n_cycles: usize,
) -> Result<TrackingOutcome, TrackingError> {
    loop_cfg.validate()?;
    if n_cycles == 0 {
        return Err(TrackingError::InvalidConfig {
            field: "n_cycles",
            reason: "must be >= 1".into(),
        });
    }
    let cfg = MacCellConfig {
        pvt_scale: cell_cfg.pvt_scale + perturbation,
        ..cell_cfg.clone()
    };
    let mut cell = VcoCell::new(cfg)?;
    let mut code = loop_cfg.initial_code;
    cell.apply_tail_code(code, loop_cfg.trim(code))?;

    let window = loop_cfg.window();
    let mut trace = TrackingTrace::default();
    let mut saturated = false;
    for cycle in 0..n_cycles {
        let start = cell.sample_phase().count_p;
        cell.idle_hold(window)?;
        let count = cell.sample_phase().count_p - start;
        let next = tracking_step(code, count, loop_cfg);
        saturated =
            next == code && count != loop_cfg.f_in && (code == 0 || code == loop_cfg.max_code());
        trace.records.push(TrackingRecord {
            cycle,
            count,
            code_before: code,
            code_after: next,
        });
        if next != code {
            code = next;
            cell.apply_tail_code(code, loop_cfg.trim(code))?;
        }
    }
    let converged = trace.converged_at(loop_cfg.f_in).is_some() && !saturated;
    Ok(TrackingOutcome {
        final_code: code,
        trace,
        converged,
        saturated,
    })
}

/// Per-cell multiplicative tail-current gain factors.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchModel {
    pub sigma_rel: f64,
    pub factors: Vec<f64>,
}

impl MismatchModel {
    /// Draws `n_cells` factors `1 + sigma_rel·z`, redrawing the (vanishingly
    /// rare) non-positive ones.
    pub fn new(sigma_rel: f64, n_cells: usize, seed: u64) -> Result<Self, TrackingError> {
        if !(sigma_rel.is_finite() && sigma_rel >= 0.0) {
            return Err(TrackingError::InvalidConfig {
                field: "sigma_rel",
                reason: "must be finite and >= 0".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factors = (0..n_cells)
            .map(|_| loop {
                let z: f64 = StandardNormal.sample(&mut rng);
                let f = 1.0 + sigma_rel * z;
                if f > 0.0 {
                    break f;
                }
            })
            .collect();
        Ok(MismatchModel { sigma_rel, factors })
    }
}

/// Applies the tracked code to every cell together with its mismatch factor.
pub fn broadcast_code(
    code: u32,
    loop_cfg: &TrackingLoopConfig,
    cells: &[MacCellConfig],
    mm: &MismatchModel,
) -> Result<Vec<MacCellConfig>, TrackingError> {
    if mm.factors.len() < cells.len() {
        return Err(TrackingError::MissingFactors {
            factors: mm.factors.len(),
            cells: cells.len(),
        });
    }
    let trim = loop_cfg.trim(code);
    Ok(cells
        .iter()
        .zip(&mm.factors)
        .map(|(c, &m)| MacCellConfig {
            tail_trim: trim,
            mismatch: m,
            ..c.clone()
        })
        .collect())
}

//! Pseudo-differential time-domain MAC cell.
//!
//! A differential input voltage is converted to a differential current by a
//! degenerated V/I stage. During the weight pulse (φ1) that current is split
//! across two matched current-controlled ring oscillators, one speeding up and
//! one slowing down, so the phase difference between them integrates
//! `K_v · V_in · Δt`. During the hold window (φ2) both oscillators idle at the
//! same frequency and the difference is preserved. Readout is a flip-flop
//! snapshot of each ring (`2·N_stages` levels per cycle) plus an overflow
//! counter, giving a total code of `2N·count + φ̂` per oscillator.
//!
//! The input is held constant over each pulse, so every phase increment is a
//! closed-form `f · Δt` and no ODE integration is involved.
//!
//! Phases are stored as whole cycles plus a fractional turn. Adding an integer
//! number of cycles is therefore exact and never perturbs the quantizer.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mac::MacResult;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellError {
    #[error("input {value} V exceeds the ±{limit} V full scale{}", fmt_index(*.index))]
    Overrange {
        index: Option<usize>,
        value: f64,
        limit: f64,
    },
    #[error("oscillator frequency {freq} Hz is outside the valid model region{}", fmt_index(*.index))]
    ModelValidity { index: Option<usize>, freq: f64 },
    #[error("overflow counter exceeded {max} cycles{}", fmt_index(*.index))]
    CounterOverflow { index: Option<usize>, max: u64 },
    #[error("weight {weight} at sample {index} is not an integer number of {t_lsb} s time steps")]
    WeightNotRepresentable {
        index: usize,
        weight: f64,
        t_lsb: f64,
    },
    #[error("hold duration must be finite and non-negative, got {0}")]
    InvalidDuration(f64),
    #[error("schedule has {inputs} inputs but {pulses} pulses")]
    LengthMismatch { inputs: usize, pulses: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn fmt_index(index: Option<usize>) -> String {
    index.map(|i| format!(" at sample {i}")).unwrap_or_default()
}

impl CellError {
    /// Attaches the schedule position to errors raised by a single-sample operation.
    pub fn at_sample(self, j: usize) -> Self {
        match self {
            CellError::Overrange { value, limit, .. } => CellError::Overrange {
                index: Some(j),
                value,
                limit,
            },
            CellError::ModelValidity { freq, .. } => CellError::ModelValidity {
                index: Some(j),
                freq,
            },
            CellError::CounterOverflow { max, .. } => CellError::CounterOverflow {
                index: Some(j),
                max,
            },
            other => other,
        }
    }
}

/// A configuration field that failed validation.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid `{field}`: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError {
            field,
            reason: reason.into(),
        }
    }
}

/// Physical and architectural parameters of one simulated cell.
///
/// `kv` is the differential gain: a constant input `v` held for `Δt` advances
/// the phase difference by `2π·kv·v·Δt`. The effective tuning curve of both
/// oscillators is multiplied by `mismatch · (pvt_scale + tail_trim)`; the
/// readout conversion always uses the nominal `kv`, so any deviation of that
/// factor from one shows up as gain error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacCellConfig {
    /// Differential VCO gain, Hz/V.
    pub kv: f64,
    /// Free-running oscillator frequency, Hz.
    pub f0: f64,
    /// Ring stages per oscillator (odd, ≥ 3).
    pub n_stages: u32,
    /// V/I source degeneration resistance, Ω.
    pub r_deg: f64,
    /// V/I input transconductance, S.
    pub gm: f64,
    /// Idle bias current that sets `f0`, A.
    pub i_low: f64,
    /// Differential input full scale, V (inputs must satisfy `|v| ≤ v_fullscale`).
    pub v_fullscale: f64,
    /// Time resolution of weight pulses, s.
    pub t_lsb: f64,
    /// Hold (φ2) window after each pulse, s.
    pub t_hold: f64,
    /// Second-order tuning-curve coefficient.
    pub alpha2: f64,
    /// Third-order tuning-curve coefficient.
    pub alpha3: f64,
    /// V/I soft-saturation scale, V. `None` keeps the V/I stage linear.
    pub vi_sat: Option<f64>,
    /// White phase-noise standard deviation per pulse, rad.
    pub noise_sigma: f64,
    pub counter_bits: u32,
    pub seed: u64,
    /// Process/temperature multiplier on the tuning curve.
    pub pvt_scale: f64,
    /// Per-cell tail-current mismatch multiplier.
    pub mismatch: f64,
    /// Fractional frequency correction applied through the tail-current code.
    pub tail_trim: f64,
}

/// Third-order coefficient frozen from `calibrate_default_config(7.0)`.
pub const CALIBRATED_ALPHA3: f64 = 0.0916650012269901;

impl Default for MacCellConfig {
    fn default() -> Self {
        MacCellConfig {
            kv: 100e6,
            f0: 100e6,
            n_stages: 15,
            r_deg: 10e3,
            gm: 10e-3,
            i_low: 50e-6,
            v_fullscale: 0.4,
            t_lsb: 1e-9,
            t_hold: 10e-9,
            alpha2: 0.0,
            alpha3: CALIBRATED_ALPHA3,
            vi_sat: None,
            noise_sigma: 0.0,
            counter_bits: 32,
            seed: 0,
            pvt_scale: 1.0,
            mismatch: 1.0,
            tail_trim: 0.0,
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(
            field,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

fn finite(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be finite, got {v}")))
    }
}

impl MacCellConfig {
    /// Config with the tuning-curve and V/I nonlinearities and the noise switched off.
    pub fn ideal_linear() -> Self {
        MacCellConfig {
            alpha2: 0.0,
            alpha3: 0.0,
            vi_sat: None,
            noise_sigma: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("kv", self.kv)?;
        positive("f0", self.f0)?;
        if self.n_stages < 3 || self.n_stages.is_multiple_of(2) {
            return Err(ConfigError::new(
                "n_stages",
                format!("must be odd and >= 3, got {}", self.n_stages),
            ));
        }
        positive("r_deg", self.r_deg)?;
        positive("gm", self.gm)?;
        positive("i_low", self.i_low)?;
        positive("v_fullscale", self.v_fullscale)?;
        positive("t_lsb", self.t_lsb)?;
        if !(self.t_hold.is_finite() && self.t_hold >= 0.0) {
            return Err(ConfigError::new("t_hold", "must be finite and >= 0"));
        }
        finite("alpha2", self.alpha2)?;
        finite("alpha3", self.alpha3)?;
        if let Some(s) = self.vi_sat {
            positive("vi_sat", s)?;
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(ConfigError::new("noise_sigma", "must be finite and >= 0"));
        }
        if self.counter_bits == 0 || self.counter_bits > 64 {
            return Err(ConfigError::new("counter_bits", "must be in 1..=64"));
        }
        positive("pvt_scale", self.pvt_scale)?;
        positive("mismatch", self.mismatch)?;
        finite("tail_trim", self.tail_trim)?;
        if self.tuning_scale() <= 0.0 {
            return Err(ConfigError::new(
                "tail_trim",
                "pvt_scale + tail_trim must stay positive",
            ));
        }
        Ok(())
    }

    /// Quantizer levels per oscillator cycle (`2·N_stages`).
    pub fn levels(&self) -> u64 {
        2 * u64::from(self.n_stages)
    }

    /// One quantizer step, in radians. This is also the output LSB of the cell.
    pub fn phase_lsb(&self) -> f64 {
        TAU / self.levels() as f64
    }

    /// Realized weight of one pulse tick, `2π·kv·t_lsb` (rad/V).
    pub fn weight_per_tick(&self) -> f64 {
        TAU * self.kv * self.t_lsb
    }

    /// Degenerated transconductance `gm / (1 + gm·R)`, which tends to `1/R`.
    pub fn effective_gm(&self) -> f64 {
        self.gm / (1.0 + self.gm * self.r_deg)
    }

    /// Oscillator current gain (Hz/A) chosen so that `cco_freq(vi_convert(v)) ≈ f0 + kv·v`.
    pub fn k_cco(&self) -> f64 {
        self.kv / self.effective_gm()
    }

    /// Multiplier applied to the whole tuning curve by PVT, mismatch and trim.
    pub fn tuning_scale(&self) -> f64 {
        self.mismatch * (self.pvt_scale + self.tail_trim)
    }

    /// Idle frequency of both oscillators.
    pub fn effective_f0(&self) -> f64 {
        self.tuning_scale() * self.f0
    }

    pub fn counter_max(&self) -> u64 {
        if self.counter_bits >= 64 {
            u64::MAX
        } else {
            (1u64 << self.counter_bits) - 1
        }
    }

    /// Differential V/I conversion with optional `tanh` soft limit.
    pub fn vi_convert(&self, v_diff: f64) -> Result<f64, CellError> {
        if !v_diff.is_finite() || v_diff.abs() > self.v_fullscale {
            return Err(CellError::Overrange {
                index: None,
                value: v_diff,
                limit: self.v_fullscale,
            });
        }
        let v = match self.vi_sat {
            Some(s) => s * (v_diff / s).tanh(),
            None => v_diff,
        };
        Ok(self.effective_gm() * v)
    }

    /// Oscillator tuning curve `f0 + K·i·(1 + α2·u + α3·u²)`, `u = K·i/f0`.
    pub fn cco_freq(&self, i: f64) -> Result<f64, CellError> {
        let dev = self.k_cco() * i;
        let u = dev / self.f0;
        let f =
            self.tuning_scale() * (self.f0 + dev * (1.0 + self.alpha2 * u + self.alpha3 * u * u));
        if f.is_finite() && f > 0.0 {
            Ok(f)
        } else {
            Err(CellError::ModelValidity {
                index: None,
                freq: f,
            })
        }
    }
}

/// Unwrapped oscillator phase as whole cycles plus a fractional turn in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OscPhase {
    cycles: u64,
    frac: f64,
}

impl OscPhase {
    pub fn new(cycles: u64, frac: f64) -> Self {
        assert!(
            (0.0..1.0).contains(&frac),
            "fractional turn must lie in [0, 1), got {frac}"
        );
        OscPhase { cycles, frac }
    }

    /// Builds a phase from radians. Values that land exactly on a quantizer
    /// boundary may round to either side; use [`OscPhase::new`] when that matters.
    pub fn from_radians(phase: f64) -> Self {
        assert!(phase.is_finite() && phase >= 0.0);
        let turns = phase / TAU;
        let whole = turns.floor();
        OscPhase::new(whole as u64, (turns - whole).min(1.0 - f64::EPSILON))
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn frac(&self) -> f64 {
        self.frac
    }

    pub fn radians(&self) -> f64 {
        TAU * (self.cycles as f64 + self.frac)
    }

    fn advanced(self, turns: f64) -> OscPhase {
        debug_assert!(turns >= 0.0);
        let whole = turns.floor();
        let mut frac = self.frac + (turns - whole);
        let mut cycles = self.cycles.saturating_add(whole as u64);
        if frac >= 1.0 {
            frac -= 1.0;
            cycles = cycles.saturating_add(1);
        }
        OscPhase { cycles, frac }
    }

    /// Flip-flop snapshot: `(count, φ̂)` with `φ̂ ∈ [0, levels)`.
    pub fn quantize(&self, levels: u64) -> (u64, u32) {
        let inst = (snap_whole(self.frac * levels as f64).floor() as u64).min(levels - 1);
        (self.cycles, inst as u32)
    }

    /// Total code `levels·count + φ̂`.
    pub fn total_code(&self, levels: u64) -> i128 {
        let (count, inst) = self.quantize(levels);
        i128::from(count) * i128::from(levels) + i128::from(inst)
    }
}

/// Snaps values within a few ulps of an integer onto it. Hold windows are
/// produced by a digital timer, so `f·(k/f)` must count exactly `k` cycles,
/// and a phase landing on a level edge must read as that level.
fn snap_whole(turns: f64) -> f64 {
    let r = turns.round();
    if (turns - r).abs() <= 4.0 * f64::EPSILON * r.abs().max(1.0) {
        r
    } else {
        turns
    }
}

/// Complete mutable state of one cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CellState {
    pub phase_p: OscPhase,
    pub phase_n: OscPhase,
    /// Tail-current code last applied by the tracking loop, if any.
    pub cal_code: Option<u32>,
    /// Number of pulses applied so far; indexes the noise stream.
    pub samples: u64,
}

impl CellState {
    /// Continuous (unquantized) differential phase, rad.
    pub fn differential_phase(&self) -> f64 {
        let whole = self.phase_p.cycles as i128 - self.phase_n.cycles as i128;
        TAU * (whole as f64 + (self.phase_p.frac - self.phase_n.frac))
    }
}

/// Quantized snapshot of both oscillators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseReading {
    pub count_p: u64,
    pub count_n: u64,
    pub inst_p: u32,
    pub inst_n: u32,
    pub code_diff: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

/// One weight pulse: `Δt = ticks · t_lsb`, with the sign realized by swapping
/// which oscillator receives the positive V/I output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightPulse {
    pub ticks: u64,
    pub polarity: Polarity,
}

impl WeightPulse {
    pub fn positive(ticks: u64) -> Self {
        WeightPulse {
            ticks,
            polarity: Polarity::Positive,
        }
    }

    pub fn negative(ticks: u64) -> Self {
        WeightPulse {
            ticks,
            polarity: Polarity::Negative,
        }
    }

    /// Encodes a weight in output units (rad/V). The weight must be an integer
    /// multiple of `cfg.weight_per_tick()` to within 1e-6 of a tick.
    pub fn from_weight(w: f64, cfg: &MacCellConfig, index: usize) -> Result<Self, CellError> {
        let err = || CellError::WeightNotRepresentable {
            index,
            weight: w,
            t_lsb: cfg.t_lsb,
        };
        if !w.is_finite() {
            return Err(err());
        }
        let exact = w.abs() / cfg.weight_per_tick();
        let ticks = exact.round();
        if (exact - ticks).abs() > 1e-6 * ticks.max(1.0) || ticks > u64::MAX as f64 {
            return Err(err());
        }
        let ticks = ticks as u64;
        Ok(if w < 0.0 {
            WeightPulse::negative(ticks)
        } else {
            WeightPulse::positive(ticks)
        })
    }

    /// Realized weight in output units.
    pub fn weight(&self, cfg: &MacCellConfig) -> f64 {
        let w = cfg.weight_per_tick() * self.ticks as f64;
        match self.polarity {
            Polarity::Positive => w,
            Polarity::Negative => -w,
        }
    }

    pub fn duration(&self, cfg: &MacCellConfig) -> f64 {
        self.ticks as f64 * cfg.t_lsb
    }
}

/// A single simulated cell: an immutable config plus its evolving state.
#[derive(Debug, Clone)]
pub struct VcoCell {
    cfg: MacCellConfig,
    state: CellState,
}

impl VcoCell {
    pub fn new(cfg: MacCellConfig) -> Result<Self, CellError> {
        cfg.validate()?;
        Ok(VcoCell {
            cfg,
            state: CellState::default(),
        })
    }

    pub fn with_state(cfg: MacCellConfig, state: CellState) -> Result<Self, CellError> {
        let mut cell = VcoCell::new(cfg)?;
        cell.state = state;
        Ok(cell)
    }

    pub fn config(&self) -> &MacCellConfig {
        &self.cfg
    }

    pub fn state(&self) -> &CellState {
        &self.state
    }

    /// Applies a tail-current code: sets the fractional trim and records the code.
    pub fn apply_tail_code(&mut self, code: u32, trim: f64) -> Result<(), CellError> {
        let mut cfg = self.cfg.clone();
        cfg.tail_trim = trim;
        cfg.validate()?;
        self.cfg = cfg;
        self.state.cal_code = Some(code);
        Ok(())
    }

    fn commit(&mut self, p: OscPhase, n: OscPhase) -> Result<(), CellError> {
        let max = self.cfg.counter_max();
        if p.cycles > max || n.cycles > max {
            return Err(CellError::CounterOverflow { index: None, max });
        }
        self.state.phase_p = p;
        self.state.phase_n = n;
        Ok(())
    }

    /// φ1: drives the pair with `v_in` for the pulse width.
    pub fn accumulate(&mut self, v_in: f64, pulse: WeightPulse) -> Result<(), CellError> {
        self.accumulate_with_common_mode(v_in, pulse, 0.0)
    }

    /// φ1 with an extra current `i_cm` added equally to both oscillators.
    pub fn accumulate_with_common_mode(
        &mut self,
        v_in: f64,
        pulse: WeightPulse,
        i_cm: f64,
    ) -> Result<(), CellError> {
        let half = 0.5 * self.cfg.vi_convert(v_in)?;
        let (ip, i_n) = match pulse.polarity {
            Polarity::Positive => (half, -half),
            Polarity::Negative => (-half, half),
        };
        let fp = self.cfg.cco_freq(ip + i_cm)?;
        let f_n = self.cfg.cco_freq(i_n + i_cm)?;
        let dt = pulse.duration(&self.cfg);
        let mut dp = fp * dt;
        let mut dn = f_n * dt;
        if self.cfg.noise_sigma > 0.0 {
            let eps = self.noise_draw() * self.cfg.noise_sigma / TAU;
            // monotone phase: a draw can stall an oscillator but never rewind it
            dp = (dp + 0.5 * eps).max(0.0);
            dn = (dn - 0.5 * eps).max(0.0);
        }
        let p = self.state.phase_p.advanced(dp);
        let n = self.state.phase_n.advanced(dn);
        self.commit(p, n)?;
        self.state.samples += 1;
        Ok(())
    }

    fn noise_draw(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(self.state.samples);
        StandardNormal.sample(&mut rng)
    }

    /// φ2: both oscillators idle at the same frequency for `duration` seconds.
    pub fn idle_hold(&mut self, duration: f64) -> Result<(), CellError> {
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(CellError::InvalidDuration(duration));
        }
        let turns = snap_whole(self.cfg.effective_f0() * duration);
        let p = self.state.phase_p.advanced(turns);
        let n = self.state.phase_n.advanced(turns);
        self.commit(p, n)
    }

    /// Non-destructive flip-flop snapshot of both rings.
    pub fn sample_phase(&self) -> PhaseReading {
        let levels = self.cfg.levels();
        let (count_p, inst_p) = self.state.phase_p.quantize(levels);
        let (count_n, inst_n) = self.state.phase_n.quantize(levels);
        let diff = self.state.phase_p.total_code(levels) - self.state.phase_n.total_code(levels);
        PhaseReading {
            count_p,
            count_n,
            inst_p,
            inst_n,
            code_diff: diff as i64,
        }
    }

    /// Runs the alternating φ1/φ2 schedule, calling `on_step` with the reading
    /// taken at the end of each sample period. Returns `(baseline, final)`.
    pub fn run_schedule<F>(
        &mut self,
        x: &[f64],
        pulses: &[WeightPulse],
        t_hold: f64,
        mut on_step: F,
    ) -> Result<(PhaseReading, PhaseReading), CellError>
    where
        F: FnMut(usize, &PhaseReading),
    {
        if x.len() != pulses.len() {
            return Err(CellError::LengthMismatch {
                inputs: x.len(),
                pulses: pulses.len(),
            });
        }
        let baseline = self.sample_phase();
        let mut last = baseline;
        for (j, (&v, &pulse)) in x.iter().zip(pulses).enumerate() {
            self.accumulate(v, pulse).map_err(|e| e.at_sample(j))?;
            self.idle_hold(t_hold).map_err(|e| e.at_sample(j))?;
            last = self.sample_phase();
            on_step(j, &last);
        }
        Ok((baseline, last))
    }

    /// Converts a code difference into output units (rad of differential phase).
    pub fn code_to_value(&self, code: i64) -> f64 {
        code as f64 * self.cfg.phase_lsb()
    }
}

/// Runs a full schedule on a fresh cell. The result is the code difference
/// between the final reading and a baseline taken before the first pulse.
pub fn run_mac_schedule(
    cfg: &MacCellConfig,
    x: &[f64],
    pulses: &[WeightPulse],
    t_hold: f64,
) -> Result<(MacResult, PhaseReading), CellError> {
    let mut cell = VcoCell::new(cfg.clone())?;
    let (baseline, last) = cell.run_schedule(x, pulses, t_hold, |_, _| {})?;
    let code = last.code_diff - baseline.code_diff;
    Ok((
        MacResult {
            value: cell.code_to_value(code),
            raw_code: Some(code),
            ops_count: x.len(),
        },
        last,
    ))
}

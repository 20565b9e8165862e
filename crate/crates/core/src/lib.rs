//! Behavioral simulator of a VCO-based time-domain multiply-accumulate cell.
//!
//! The crate is organized bottom-up:
//!
//! - [`cell`]: the pseudo-differential oscillator pair, its V/I front end,
//!   hold behavior and quantized phase readout.
//! - [`mac`]: exact MAC semantics and dispatch between the ideal oracle and
//!   the cell model.
//! - [`tracking`]: the bang-bang background loop that trims the oscillator
//!   frequency and broadcasts the code to an array.
//! - [`registration`]: rigid transforms and volume resampling whose
//!   coordinate arithmetic runs on a MAC backend.
//! - [`metrics`]: the sine linearity experiment, effective bits, calibration
//!   of the default nonlinearity, energy bookkeeping and parameter sweeps.
//! - [`report`]: CSV traces and `key: value` summaries.

pub mod cell;
pub mod mac;
pub mod metrics;
pub mod registration;
pub mod report;
pub mod tracking;

pub use cell::{
    run_mac_schedule, CellError, CellState, ConfigError, MacCellConfig, OscPhase, PhaseReading,
    Polarity, VcoCell, WeightPulse,
};
pub use mac::{compare_backends, mac_ideal, mac_run, BackendId, ErrorRecord, MacError, MacResult};
pub use metrics::{
    calibrate_config, calibrate_default_config, energy_report, power_consistency_check, run_sweep,
    sine_mac_experiment, Calibration, CalibrationError, EnergyReport, LinearityReport,
    MetricsError, SineExperiment, SweepPoint, SweepRow,
};
pub use registration::{
    resample_volume, transform_point, Axis, CoordNormalization, RegistrationError, RigidTransform,
    VoxelType, VoxelVolume,
};
pub use tracking::{
    broadcast_code, run_calibration, tracking_step, MismatchModel, TrackingError,
    TrackingLoopConfig, TrackingOutcome, TrackingTrace,
};

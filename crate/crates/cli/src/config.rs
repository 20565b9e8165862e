//! Run configuration: a TOML file with `[cell]`, `[tracking]` and
//! `[linearity]` sections. Missing sections and keys take library defaults;
//! command-line flags are applied on top of the file.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use phasemac::{MacCellConfig, SineExperiment, TrackingLoopConfig};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cell: MacCellConfig,
    pub tracking: TrackingLoopConfig,
    pub linearity: SineExperiment,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// Cell parameter overrides shared by every simulating command.
#[derive(Debug, Clone, Default, Args)]
pub struct CellArgs {
    /// Differential VCO gain, Hz/V.
    #[arg(long)]
    pub kv: Option<f64>,
    /// Free-running oscillator frequency, Hz.
    #[arg(long)]
    pub f0: Option<f64>,
    /// Ring stages (odd, >= 3).
    #[arg(long)]
    pub n_stages: Option<u32>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub alpha3: Option<f64>,
    /// White phase noise per sample, rad.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Time LSB of weight pulses, s.
    #[arg(long)]
    pub t_lsb: Option<f64>,
    /// Hold window after each pulse, s.
    #[arg(long)]
    pub t_hold: Option<f64>,
    /// Differential input full scale, V.
    #[arg(long)]
    pub v_fullscale: Option<f64>,
    #[arg(long)]
    pub counter_bits: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl CellArgs {
    pub fn apply(&self, cfg: &mut MacCellConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(
            kv,
            f0,
            n_stages,
            alpha2,
            alpha3,
            noise_sigma,
            t_lsb,
            t_hold,
            v_fullscale,
            counter_bits,
            seed
        );
    }
}

/// Loads the config file (if any), applies cell overrides and validates the cell.
pub fn resolve(path: Option<&Path>, cell: &CellArgs) -> Result<RunConfig, CliError> {
    let mut rc = RunConfig::load(path)?;
    cell.apply(&mut rc.cell);
    rc.cell
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(rc)
}

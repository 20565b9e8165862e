//! Rigid registration running its coordinate arithmetic on a MAC backend.
//!
//! Every mapped voxel costs three length-4 dot products, `[x y z 1]` against
//! the columns of the transform. Coordinates are first normalized so the
//! volume's bounding-box diagonal spans 90% of the cell's input range, and the
//! homogeneous `1` is driven as a fixed reference voltage.

mod transform;
mod volume;

pub use transform::{Axis, RigidTransform};
pub use volume::{
    phantom, read_volume, sidecar_path, voxel_match_rate, write_volume, VolumeError, VoxelType,
    VoxelVolume,
};

use rayon::prelude::*;
use thiserror::Error;

use crate::cell::{run_mac_schedule, CellError, MacCellConfig, WeightPulse};
use crate::mac::{mac_ideal, BackendId, MacError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistrationError {
    #[error("transform is singular")]
    Singular,
    #[error("cannot compose an empty transform list")]
    EmptyComposition,
    #[error("transform is not affine: {0}")]
    NotAffine(String),
    #[error("transform text: {0}")]
    Parse(String),
    #[error(transparent)]
    Mac(#[from] MacError),
}

impl From<CellError> for RegistrationError {
    fn from(e: CellError) -> Self {
        RegistrationError::Mac(MacError::Cell(e))
    }
}

/// Fraction of the cell full scale covered by the half-diagonal of a volume.
pub const DIAGONAL_FRACTION: f64 = 0.9;
/// Drive level of the homogeneous coordinate, as a fraction of full scale.
pub const HOMOGENEOUS_FRACTION: f64 = 0.25;
/// Pulse ticks that realize a unit matrix entry on the VcoCell backend.
pub const WEIGHT_TICKS_PER_UNIT: f64 = 1024.0;

/// Affine map between voxel coordinates and backend input voltages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordNormalization {
    pub center: [f64; 3],
    /// Input volts per voxel unit.
    pub scale: f64,
    /// Voltage standing in for the homogeneous coordinate.
    pub homogeneous: f64,
}

impl CoordNormalization {
    pub fn for_dims(dims: [usize; 3], cfg: &MacCellConfig) -> Self {
        let ext = dims.map(|n| n as f64 - 1.0);
        let half_diag = 0.5 * ext.iter().map(|e| e * e).sum::<f64>().sqrt();
        CoordNormalization {
            center: ext.map(|e| 0.5 * e),
            scale: DIAGONAL_FRACTION * cfg.v_fullscale / half_diag.max(0.5),
            homogeneous: HOMOGENEOUS_FRACTION * cfg.v_fullscale,
        }
    }

    pub fn to_volts(&self, p: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| (p[i] - self.center[i]) * self.scale)
    }

    pub fn from_volts(&self, q: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| q[i] / self.scale + self.center[i])
    }
}

/// A transform prepared for one backend: the normalized-domain weights for
/// each output coordinate, already encoded as pulses on the VcoCell path.
#[derive(Debug, Clone)]
pub struct MacTransformPlan {
    backend: BackendId,
    cfg: MacCellConfig,
    norm: CoordNormalization,
    /// Per output column: real-valued weights in input-voltage units.
    weights: [[f64; 4]; 3],
    pulses: [[WeightPulse; 4]; 3],
    /// Output units per normalized volt (VcoCell path).
    unit: f64,
}

impl MacTransformPlan {
    pub fn new(
        m: &RigidTransform,
        backend: BackendId,
        cfg: &MacCellConfig,
        norm: CoordNormalization,
    ) -> Result<Self, RegistrationError> {
        cfg.validate().map_err(CellError::from)?;
        // q' = q·A + scale·(c·A + t − c)
        let a = m.linear();
        let c = norm.center;
        let ca = m.apply(c);
        let mut weights = [[0.0; 4]; 3];
        for (j, col) in weights.iter_mut().enumerate() {
            for i in 0..3 {
                col[i] = a[i][j];
            }
            col[3] = norm.scale * (ca[j] - c[j]) / norm.homogeneous;
        }
        let pulses = weights.map(|col| {
            col.map(|w| {
                let ticks = (w.abs() * WEIGHT_TICKS_PER_UNIT).round() as u64;
                if w < 0.0 {
                    WeightPulse::negative(ticks)
                } else {
                    WeightPulse::positive(ticks)
                }
            })
        });
        Ok(MacTransformPlan {
            backend,
            cfg: cfg.clone(),
            norm,
            weights,
            pulses,
            unit: WEIGHT_TICKS_PER_UNIT * cfg.weight_per_tick(),
        })
    }

    /// Maps one point. `stream` selects the noise stream for the three MACs.
    pub fn apply(&self, p: [f64; 3], stream: u64) -> Result<[f64; 3], RegistrationError> {
        let q = self.norm.to_volts(p);
        let x = [q[0], q[1], q[2], self.norm.homogeneous];
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            *o = match self.backend {
                BackendId::Ideal => mac_ideal(&x, &self.weights[j])?.value,
                BackendId::VcoCell => {
                    let cfg;
                    let cfg_ref = if self.cfg.noise_sigma > 0.0 {
                        cfg = MacCellConfig {
                            seed: mix_seed(self.cfg.seed, stream * 3 + j as u64),
                            ..self.cfg.clone()
                        };
                        &cfg
                    } else {
                        &self.cfg
                    };
                    let (r, _) = run_mac_schedule(cfg_ref, &x, &self.pulses[j], cfg_ref.t_hold)?;
                    r.value / self.unit
                }
            };
        }
        Ok(self.norm.from_volts(out))
    }
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        ^ stream
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps a single point through `m` on the chosen backend.
pub fn transform_point(
    m: &RigidTransform,
    p: [f64; 3],
    backend: BackendId,
    cfg: &MacCellConfig,
    norm: CoordNormalization,
) -> Result<[f64; 3], RegistrationError> {
    MacTransformPlan::new(m, backend, cfg, norm)?.apply(p, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub volume: VoxelVolume,
    /// Multiply-accumulate steps spent on coordinate mapping.
    pub ops_count: u64,
}

/// Inverse-mapping nearest-neighbor resampling of `src` under `m`.
///
/// Each output voxel center is pulled back through `m⁻¹` on the backend and
/// the nearest source voxel is copied; reads outside the grid give the
/// background. Z-slices are processed in parallel with per-voxel noise
/// streams, so the result does not depend on the worker count.
pub fn resample_volume(
    src: &VoxelVolume,
    m: &RigidTransform,
    backend: BackendId,
    cfg: &MacCellConfig,
) -> Result<Resampled, RegistrationError> {
    let inv = m.inverse()?;
    let dims = src.dims();
    let norm = CoordNormalization::for_dims(dims, cfg);
    let plan = MacTransformPlan::new(&inv, backend, cfg, norm)?;
    let [nx, ny, _] = dims;
    let mut data = vec![src.background(); src.len()];
    data.par_chunks_mut(nx * ny).enumerate().try_for_each(
        |(z, slice)| -> Result<(), RegistrationError> {
            for y in 0..ny {
                for x in 0..nx {
                    let idx = x + nx * (y + ny * z);
                    let p = plan.apply([x as f64, y as f64, z as f64], idx as u64)?;
                    slice[x + nx * y] = src.get_or_background(p.map(|c| c.round() as i64));
                }
            }
            Ok(())
        },
    )?;
    let volume = src
        .with_data(data)
        .expect("resampled values come from the source");
    Ok(Resampled {
        volume,
        ops_count: src.len() as u64 * 12,
    })
}

//! Voxel volumes and their on-disk format.
//!
//! A volume is stored as a raw little-endian array (`u8` or `i16`, x fastest,
//! then y, then z) next to a sidecar `<data file>.meta` holding TOML keys
//! `dims`, `dtype`, `spacing` and `background`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoxelType {
    U8,
    I16,
}

impl VoxelType {
    pub fn bytes(self) -> usize {
        match self {
            VoxelType::U8 => 1,
            VoxelType::I16 => 2,
        }
    }

    fn holds(self, v: i16) -> bool {
        match self {
            VoxelType::U8 => (0..=255).contains(&v),
            VoxelType::I16 => true,
        }
    }
}

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("volume dims must all be >= 1, got {0:?}")]
    BadDims([usize; 3]),
    #[error("volume spacing must be finite and > 0, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("expected {expected} voxels, got {got}")]
    Length { expected: usize, got: usize },
    #[error("value {value} does not fit dtype {dtype:?}")]
    Range { value: i16, dtype: VoxelType },
    #[error("missing sidecar metadata {0}")]
    MissingSidecar(PathBuf),
    #[error("{path}: {reason}")]
    Metadata { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    dtype: VoxelType,
    background: i16,
    data: Vec<i16>,
}

impl VoxelVolume {
    pub fn filled(
        dims: [usize; 3],
        spacing: [f64; 3],
        dtype: VoxelType,
        background: i16,
    ) -> Result<Self, VolumeError> {
        let n = check_shape(dims, spacing)?;
        Self::from_data(dims, spacing, dtype, background, vec![background; n])
    }

    pub fn from_data(
        dims: [usize; 3],
        spacing: [f64; 3],
        dtype: VoxelType,
        background: i16,
        data: Vec<i16>,
    ) -> Result<Self, VolumeError> {
        let n = check_shape(dims, spacing)?;
        if data.len() != n {
            return Err(VolumeError::Length {
                expected: n,
                got: data.len(),
            });
        }
        if let Some(&value) = std::iter::once(&background)
            .chain(&data)
            .find(|&&v| !dtype.holds(v))
        {
            return Err(VolumeError::Range { value, dtype });
        }
        Ok(VoxelVolume {
            dims,
            spacing,
            dtype,
            background,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn dtype(&self) -> VoxelType {
        self.dtype
    }

    pub fn background(&self) -> i16 {
        self.background
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> i16 {
        self.data[self.index(x, y, z)]
    }

    /// Value at a signed voxel index, or the background outside the grid.
    pub fn get_or_background(&self, p: [i64; 3]) -> i16 {
        let inside = p
            .iter()
            .zip(&self.dims)
            .all(|(&c, &n)| c >= 0 && (c as usize) < n);
        if inside {
            self.get(p[0] as usize, p[1] as usize, p[2] as usize)
        } else {
            self.background
        }
    }

    /// Copy with the same geometry and new voxel values.
    pub fn with_data(&self, data: Vec<i16>) -> Result<Self, VolumeError> {
        Self::from_data(self.dims, self.spacing, self.dtype, self.background, data)
    }
}

fn check_shape(dims: [usize; 3], spacing: [f64; 3]) -> Result<usize, VolumeError> {
    if dims.contains(&0) {
        return Err(VolumeError::BadDims(dims));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(VolumeError::BadSpacing(spacing));
    }
    Ok(dims.iter().product())
}

/// Fraction of voxels with identical values. Volumes must share dims.
pub fn voxel_match_rate(a: &VoxelVolume, b: &VoxelVolume) -> f64 {
    assert_eq!(a.dims, b.dims, "volumes must share dims");
    let same = a.data.iter().zip(&b.data).filter(|(x, y)| x == y).count();
    same as f64 / a.len() as f64
}

/// Deterministic test object: a sphere with three orthogonal bars through its
/// center, all inside a radius of 0.38·n around the middle of an `n³` grid.
pub fn phantom(n: usize, dtype: VoxelType) -> Result<VoxelVolume, VolumeError> {
    let (sphere, bar) = match dtype {
        VoxelType::U8 => (100, 200),
        VoxelType::I16 => (1000, 2000),
    };
    let c = (n as f64 - 1.0) / 2.0;
    let r_sphere = 0.30 * n as f64;
    let r_bar = 0.38 * n as f64;
    let half_width = (n as f64 / 16.0).max(0.5);
    let mut data = Vec::with_capacity(n * n * n);
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let d = [x as f64 - c, y as f64 - c, z as f64 - c];
                let r2: f64 = d.iter().map(|v| v * v).sum();
                let on_bar = (0..3).any(|axis| {
                    d[axis].abs() <= r_bar
                        && (0..3)
                            .filter(|&o| o != axis)
                            .all(|o| d[o].abs() <= half_width)
                });
                let v = if on_bar {
                    bar
                } else if r2 <= r_sphere * r_sphere {
                    sphere
                } else {
                    0
                };
                data.push(v);
            }
        }
    }
    VoxelVolume::from_data([n; 3], [1.0; 3], dtype, 0, data)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VolumeMeta {
    dims: [usize; 3],
    dtype: VoxelType,
    spacing: [f64; 3],
    background: i16,
}

pub fn sidecar_path(data_path: &Path) -> PathBuf {
    let mut s = data_path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn write_volume(path: &Path, vol: &VoxelVolume) -> Result<(), VolumeError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| VolumeError::Io { path: p, source }
    };
    let mut bytes = Vec::with_capacity(vol.len() * vol.dtype.bytes());
    for &v in &vol.data {
        match vol.dtype {
            VoxelType::U8 => bytes.push(v as u8),
            VoxelType::I16 => bytes.extend_from_slice(&v.to_le_bytes()),
        }
    }
    fs::write(path, bytes).map_err(io(path))?;
    let meta = VolumeMeta {
        dims: vol.dims,
        dtype: vol.dtype,
        spacing: vol.spacing,
        background: vol.background,
    };
    let text = toml::to_string(&meta).expect("volume metadata always serializes");
    let side = sidecar_path(path);
    fs::write(&side, text).map_err(io(&side))
}

pub fn read_volume(path: &Path) -> Result<VoxelVolume, VolumeError> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Err(VolumeError::MissingSidecar(side));
    }
    let text = fs::read_to_string(&side).map_err(|source| VolumeError::Io {
        path: side.clone(),
        source,
    })?;
    let meta: VolumeMeta = toml::from_str(&text).map_err(|e| VolumeError::Metadata {
        path: side.clone(),
        reason: e.to_string(),
    })?;
    let bytes = fs::read(path).map_err(|source| VolumeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let n: usize = meta.dims.iter().product();
    let expected = n * meta.dtype.bytes();
    if bytes.len() != expected {
        return Err(VolumeError::Metadata {
            path: path.to_path_buf(),
            reason: format!(
                "expected {expected} bytes for {:?}, found {}",
                meta.dims,
                bytes.len()
            ),
        });
    }
    let data = match meta.dtype {
        VoxelType::U8 => bytes.iter().map(|&b| i16::from(b)).collect(),
        VoxelType::I16 => bytes
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]))
            .collect(),
    };
    VoxelVolume::from_data(meta.dims, meta.spacing, meta.dtype, meta.background, data)
}

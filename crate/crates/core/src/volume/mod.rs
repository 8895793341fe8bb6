//! Volume grids, slab decomposition, view-axis selection and classification.

mod decompose;
mod raw;
mod synth;
mod transfer;

pub use decompose::{choose_axis, decompose, Decomposition, SlabAssignment};
pub use raw::{read_descriptor, write_dataset, Descriptor};
pub use synth::{blob_center, synthesize, SynthKind};
pub use transfer::{Breakpoint, TransferFunction};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum VolumeError {
    #[error("invalid partition: {workers} workers for {slices} slices")]
    InvalidPartition { workers: usize, slices: usize },
    #[error("invalid view direction: zero or non-finite vector")]
    InvalidView,
    #[error("invalid dimensions {0}")]
    InvalidDims(Dims),
    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),
    #[error("data length {got} does not match {dims} ({expected} voxels)")]
    LengthMismatch { dims: Dims, expected: usize, got: usize },
    #[error("descriptor: {0}")]
    Descriptor(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One of the three principal axes of model space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Axis::ALL.get(i).copied()
    }

    /// The two axes spanning the plane perpendicular to `self`, in (u, v)
    /// texture order.
    pub fn transverse(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }

    pub fn to_u8(self) -> u8 {
        self.index() as u8
    }

    pub fn from_u8(v: u8) -> Option<Axis> {
        Axis::from_index(v as usize)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "X",
            Axis::Y => "Y",
            Axis::Z => "Z",
        })
    }
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "X" | "x" => Ok(Axis::X),
            "Y" | "y" => Ok(Axis::Y),
            "Z" | "z" => Ok(Axis::Z),
            other => Err(format!("unknown axis {other:?}")),
        }
    }
}

/// Voxel counts along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims { nx, ny, nz }
    }

    pub const fn cube(n: usize) -> Self {
        Dims { nx: n, ny: n, nz: n }
    }

    pub fn get(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.nx,
            Axis::Y => self.ny,
            Axis::Z => self.nz,
        }
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn with(mut self, axis: Axis, n: usize) -> Self {
        match axis {
            Axis::X => self.nx = n,
            Axis::Y => self.ny = n,
            Axis::Z => self.nz = n,
        }
        self
    }

    pub fn voxel_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Bytes of one timestep stored as 32-bit floats.
    pub fn byte_size(&self) -> usize {
        self.voxel_count() * 4
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(VolumeError::InvalidDims(*self));
        }
        Ok(())
    }

    /// Linear index with x varying fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

impl FromStr for Dims {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split([',', 'x']).map(str::trim).collect();
        let nums: Result<Vec<usize>, _> = parts.iter().map(|p| p.parse::<usize>()).collect();
        match nums.map_err(|e| e.to_string())?.as_slice() {
            [n] => Ok(Dims::cube(*n)),
            [nx, ny, nz] => Ok(Dims::new(*nx, *ny, *nz)),
            _ => Err(format!("expected nx,ny,nz, got {s:?}")),
        }
    }
}

/// A single timestep of scalar data, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self, VolumeError> {
        dims.validate()?;
        if data.len() != dims.voxel_count() {
            return Err(VolumeError::LengthMismatch {
                dims,
                expected: dims.voxel_count(),
                got: data.len(),
            });
        }
        Ok(Volume { dims, data })
    }

    pub fn filled(dims: Dims, value: f32) -> Self {
        Volume {
            dims,
            data: vec![value; dims.voxel_count()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(dims.voxel_count());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Volume { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    /// Copies the sub-array covered by `slab`.
    pub fn extract_slab(&self, slab: &SlabAssignment) -> Volume {
        let lo = slab.range.start;
        let local = self.dims.with(slab.axis, slab.len());
        Volume::from_fn(local, |x, y, z| {
            let mut p = [x, y, z];
            p[slab.axis.index()] += lo;
            self.get(p[0], p[1], p[2])
        })
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Little-endian byte image of the timestep.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(dims: Dims, bytes: &[u8]) -> Result<Self, VolumeError> {
        if bytes.len() != dims.byte_size() {
            return Err(VolumeError::LengthMismatch {
                dims,
                expected: dims.voxel_count(),
                got: bytes.len() / 4,
            });
        }
        Volume::new(dims, decode_f32_le(bytes))
    }
}

pub(crate) fn decode_f32_le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Where a dataset's timesteps live.
#[derive(Debug, Clone)]
pub enum VolumeSource {
    Memory(Vec<Volume>),
    /// One block-cache dataset name per timestep.
    Cache(Vec<String>),
    /// Raw files described by a sidecar descriptor.
    Files { dir: PathBuf, descriptor: Descriptor },
}

/// A time-varying 3-D scalar grid of 32-bit floats.
#[derive(Debug, Clone)]
pub struct VolumeDataset {
    pub dims: Dims,
    pub timesteps: usize,
    pub source: VolumeSource,
}

impl VolumeDataset {
    pub fn in_memory(frames: Vec<Volume>) -> Result<Self, VolumeError> {
        let dims = frames.first().map(Volume::dims).ok_or_else(|| {
            VolumeError::Descriptor("dataset needs at least one timestep".into())
        })?;
        if let Some(bad) = frames.iter().find(|f| f.dims() != dims) {
            return Err(VolumeError::InvalidDims(bad.dims()));
        }
        Ok(VolumeDataset {
            dims,
            timesteps: frames.len(),
            source: VolumeSource::Memory(frames),
        })
    }

    /// Bytes of one timestep.
    pub fn timestep_bytes(&self) -> usize {
        self.dims.byte_size()
    }

    /// Loads timestep `t` from memory or local files. Cache-backed datasets
    /// are read through a block-cache client instead.
    pub fn load_local(&self, t: usize) -> Result<Volume, VolumeError> {
        match &self.source {
            VolumeSource::Memory(frames) => frames
                .get(t)
                .cloned()
                .ok_or_else(|| VolumeError::Descriptor(format!("no timestep {t}"))),
            VolumeSource::Files { dir, descriptor } => {
                let bytes = std::fs::read(dir.join(descriptor.file_name(t)))?;
                Volume::from_le_bytes(self.dims, &bytes)
            }
            VolumeSource::Cache(_) => Err(VolumeError::Descriptor(
                "cache-backed dataset has no local data".into(),
            )),
        }
    }

    /// Rescales every timestep to `[0, 1]` using the global min/max across
    /// the dataset. Degenerate (constant) datasets are left unchanged.
    pub fn normalized(&self) -> Result<VolumeDataset, VolumeError> {
        let frames: Vec<Volume> = (0..self.timesteps)
            .map(|t| self.load_local(t))
            .collect::<Result<_, _>>()?;
        let (lo, hi) = frames.iter().map(Volume::min_max).fold(
            (f32::INFINITY, f32::NEG_INFINITY),
            |(a, b), (c, d)| (a.min(c), b.max(d)),
        );
        if !(hi > lo) {
            return VolumeDataset::in_memory(frames);
        }
        let scale = 1.0 / (hi - lo);
        let frames = frames
            .into_iter()
            .map(|f| {
                let dims = f.dims();
                let data = f.into_data().into_iter().map(|v| (v - lo) * scale).collect();
                Volume { dims, data }
            })
            .collect();
        VolumeDataset::in_memory(frames)
    }
}

/// Name under which timestep `t` of dataset `name` is stored in the block cache.
pub fn timestep_dataset_name(name: &str, t: usize) -> String {
    format!("{name}@{t}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_slab_matches_direct_indexing() {
        let dims = Dims::new(5, 4, 3);
        let v = Volume::from_fn(dims, |x, y, z| (x * 100 + y * 10 + z) as f32);
        let slab = SlabAssignment {
            axis: Axis::Y,
            worker_index: 1,
            range: 1..3,
        };
        let s = v.extract_slab(&slab);
        assert_eq!(s.dims(), Dims::new(5, 2, 3));
        assert_eq!(s.get(4, 0, 2), v.get(4, 1, 2));
        assert_eq!(s.get(0, 1, 1), v.get(0, 2, 1));
    }

    #[test]
    fn byte_size_is_four_per_voxel() {
        assert_eq!(Dims::new(640, 256, 256).byte_size(), 167_772_160);
    }

    #[test]
    fn dims_parse() {
        assert_eq!("64,32,16".parse::<Dims>().unwrap(), Dims::new(64, 32, 16));
        assert_eq!("8".parse::<Dims>().unwrap(), Dims::cube(8));
        assert!("1,2".parse::<Dims>().is_err());
    }

    #[test]
    fn normalize_rescales_and_keeps_constants() {
        let ds = VolumeDataset::in_memory(vec![
            Volume::filled(Dims::cube(2), 2.0),
            Volume::filled(Dims::cube(2), 6.0),
        ])
        .unwrap();
        let n = ds.normalized().unwrap();
        assert_eq!(n.load_local(0).unwrap().data()[0], 0.0);
        assert_eq!(n.load_local(1).unwrap().data()[0], 1.0);

        let c = VolumeDataset::in_memory(vec![Volume::filled(Dims::cube(2), 7.0)]).unwrap();
        assert_eq!(c.normalized().unwrap().load_local(0).unwrap().data()[0], 7.0);
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(Volume::new(Dims::new(0, 1, 1), vec![]).is_err());
    }
}

//! Slab loading from the block cache or from local data.

use crate::block_cache::{CacheClient, CacheHandle};
use crate::volume::{timestep_dataset_name, Descriptor, Axis, Dims, SlabAssignment, Volume, VolumeDataset};

use super::BackendError;

/// Upper bound on batched requests per slab load.
pub const MAX_BATCHES: usize = 64;

/// Byte ranges, in file order, of the contiguous runs that make up
/// `slab` in an x-fastest f32 file.
pub fn slab_ranges(dims: Dims, slab: &SlabAssignment) -> Vec<(u64, usize)> {
    let r = &slab.range;
    let row = dims.nx;
    let plane = dims.nx * dims.ny;
    match slab.axis {
        Axis::X => {
            let mut out = Vec::with_capacity(dims.ny * dims.nz);
            for z in 0..dims.nz {
                for y in 0..dims.ny {
                    out.push((4 * (dims.index(r.start, y, z)) as u64, 4 * slab.len()));
                }
            }
            out
        }
        Axis::Y => (0..dims.nz)
            .map(|z| (4 * (dims.index(0, r.start, z)) as u64, 4 * row * slab.len()))
            .collect(),
        Axis::Z => vec![(4 * (r.start * plane) as u64, 4 * plane * slab.len())],
    }
}

/// Reads `slab` of a timestep through an open handle. Runs are grouped into
/// at most [`MAX_BATCHES`] batched requests.
pub fn load_slab(handle: &mut CacheHandle, dims: Dims, slab: &SlabAssignment) -> Result<Volume, BackendError> {
    let ranges = slab_ranges(dims, slab);
    let per_batch = ranges.len().div_ceil(MAX_BATCHES).max(1);
    let local = slab.local_dims(dims);
    let mut data = Vec::with_capacity(local.voxel_count());
    for batch in ranges.chunks(per_batch) {
        for bytes in handle.read_many(batch)? {
            data.extend(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        }
    }
    Ok(Volume::new(local, data)?)
}

/// Where worker loads come from.
#[derive(Clone)]
pub enum SlabSource {
    /// Per-timestep datasets `{name}@{t}` in the block cache.
    Cache { client: CacheClient, name: String, dims: Dims, timesteps: usize },
    Local(VolumeDataset),
}

impl std::fmt::Debug for SlabSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SlabSource::Cache { name, dims, timesteps, .. } => f
                .debug_struct("Cache")
                .field("name", name)
                .field("dims", dims)
                .field("timesteps", timesteps)
                .finish(),
            SlabSource::Local(ds) => f.debug_tuple("Local").field(&ds.dims).finish(),
        }
    }
}

impl SlabSource {
    /// Stores every timestep of `dataset` as `{name}@{t}` and a descriptor
    /// under `name`.
    pub fn ingest(client: &CacheClient, name: &str, dataset: &VolumeDataset) -> Result<SlabSource, BackendError> {
        for t in 0..dataset.timesteps {
            client.ingest_bytes(&timestep_dataset_name(name, t), &dataset.load_local(t)?.to_le_bytes())?;
        }
        let desc = Descriptor {
            dims: dataset.dims,
            timesteps: dataset.timesteps,
            pattern: format!("{name}@{{t}}"),
        };
        client.ingest_bytes(name, desc.to_text().as_bytes())?;
        Ok(SlabSource::Cache { client: client.clone(), name: name.to_string(), dims: dataset.dims, timesteps: dataset.timesteps })
    }

    /// Opens a dataset previously stored with [`SlabSource::ingest`].
    pub fn from_cache(client: &CacheClient, name: &str) -> Result<SlabSource, BackendError> {
        let text = client.fetch(name)?;
        let desc = Descriptor::parse(&String::from_utf8_lossy(&text))?;
        Ok(SlabSource::Cache { client: client.clone(), name: name.to_string(), dims: desc.dims, timesteps: desc.timesteps })
    }

    pub fn dims(&self) -> Dims {
        match self {
            SlabSource::Cache { dims, .. } => *dims,
            SlabSource::Local(ds) => ds.dims,
        }
    }

    pub fn timesteps(&self) -> usize {
        match self {
            SlabSource::Cache { timesteps, .. } => *timesteps,
            SlabSource::Local(ds) => ds.timesteps,
        }
    }

    /// Loads one slab of timestep `t`, returning voxels and bytes read.
    pub fn load(&self, t: usize, slab: &SlabAssignment) -> Result<(Volume, u64), BackendError> {
        let dims = self.dims();
        let vol = match self {
            SlabSource::Cache { client, name, .. } => {
                let mut h = client.open(&timestep_dataset_name(name, t))?;
                let expected = dims.byte_size() as u64;
                if h.entry().total_bytes != expected {
                    return Err(BackendError::Dataset(format!(
                        "{} holds {} bytes, expected {expected}",
                        h.entry().name,
                        h.entry().total_bytes
                    )));
                }
                let v = load_slab(&mut h, dims, slab)?;
                h.close();
                v
            }
            SlabSource::Local(ds) => ds.load_local(t)?.extract_slab(slab),
        };
        let bytes = vol.dims().byte_size() as u64;
        Ok((vol, bytes))
    }
}

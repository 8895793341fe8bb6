//! The parallel renderer: per-worker slab loading, ray casting and payload
//! transmission, in serial or overlapped (double-buffered) mode.

mod load;
mod pipeline;
mod render;
mod sync;
mod timing;

pub use load::{load_slab, slab_ranges, SlabSource, MAX_BATCHES};
pub use pipeline::{
    run, run_overlapped, run_serial, AxisControl, BackendConfig, BackendReport, CapturedFrame,
    FeedbackEffect, Mode, PayloadCapture, ViewerEndpoint,
};
pub use render::{placement, render_slab, Direction, SlabImage};
pub use sync::{Command, ControlCell, DoubleBuffer, Gate, Staged};
pub use timing::{predict, required_rate_mbps, Prediction, TimingModel};

use crate::block_cache::CacheError;
use crate::volume::VolumeError;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("slab has no voxels")]
    EmptySlab,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("viewer at {addr} unreachable: {source}")]
    ViewerUnreachable { addr: String, source: std::io::Error },
    #[error("viewer connection for worker {worker} lost: {source}")]
    ViewerLost { worker: usize, source: std::io::Error },
    #[error("protocol violation: {0}")]
    Protocol(String),
}

//! Image-based compositing viewer: receives slab textures from the back
//! end, composites them at any orientation, and steers the decomposition
//! axis.

mod bridge;
mod composite;
mod receive;
mod reference;
mod scene;
mod server;
mod view;

pub use bridge::{parse_view_message, Bridge, SlotHeader};
pub use composite::{composite, composite_layers, depth_order, Camera, Raster};
pub use receive::{receive_loop, ReceiveEvent, ReceiveStats};
pub use reference::{artifact_error, reference_render, slab_layers};
pub use scene::{SceneGraph, SlotContent};
pub use server::{Viewer, ViewerConfig, ViewerSummary};
pub use view::{cross, dot, is_rotation, look_along, mat_mul, rotation, transpose, Mat3, ViewState, ViewUpdate, IDENTITY, ORTHONORMAL_TOL};

use crate::backend::BackendError;
use crate::volume::VolumeError;

#[derive(Debug, thiserror::Error)]
pub enum ViewerError {
    #[error("invalid orientation: {0}")]
    InvalidOrientation(String),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error("ui bridge: {0}")]
    Bridge(String),
    #[error(transparent)]
    Render(#[from] BackendError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

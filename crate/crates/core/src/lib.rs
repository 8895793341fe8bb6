//! Remote volume visualization pipeline: a striped network block cache, a
//! slab-parallel ray-casting back end with overlapped loading, an
//! image-based compositing viewer, and precision event logging to measure
//! all of it.
//!
//! Runnable examples, one per capability (`cargo run --example <name>`):
//!
//! - `striped_cache`: stripe a file over cache servers, read ranges back
//! - `slab_compositing`: slab-parallel render versus the monolithic render
//! - `overlapped_backend`: serial versus overlapped loading against the model
//! - `steering`: rotating the viewer switches the decomposition axis
//! - `event_timeline`: collect, analyze and plot event records
//! - `experiment`: full-stack serial/overlapped run with a report
//! - `artifact_cone`: approximation error as the view leaves the axis
//! - `ui_bridge`: the viewer's websocket feed, as a browser sees it
//! - `timing_model`: wall-time and link-rate arithmetic

pub mod backend;
pub mod block_cache;
pub mod color;
pub mod event_log;
pub mod orchestrator;
pub mod protocol;
pub mod viewer;
pub mod volume;

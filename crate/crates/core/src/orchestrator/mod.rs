//! One-call experiment runs: launch every component on explicit endpoints,
//! drive a dataset through the pipeline and check the result against the
//! timing model.

mod config;
mod run;

pub use config::{DatasetSpec, RunConfig, RUN_LOCAL_KEYS};
pub use run::{compare, probe_listening, run, run_matrix, Check, Comparison, RunReport, MIN_OVERLAP, MODEL_TOLERANCE};

use std::time::Duration;

use crate::backend::BackendError;
use crate::block_cache::CacheError;
use crate::event_log::EventLogError;
use crate::viewer::ViewerError;
use crate::volume::VolumeError;

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("cannot start {component} on {addr}: {reason}")]
    Launch { component: String, addr: String, reason: String },
    #[error("{component} failed: {message}")]
    Component { component: String, message: String },
    #[error("run did not finish within {0:?}")]
    Timeout(Duration),
    #[error("reports are not comparable: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Viewer(#[from] ViewerError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    EventLog(#[from] EventLogError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

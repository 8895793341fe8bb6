//! Precision event logging: emitters, a collector daemon, the tag
//! vocabulary, trace analysis and lifeline plots.

mod analyze;
mod collector;
mod emitter;
mod plot;
mod record;
pub mod tags;

pub use analyze::{
    analyze, buffer_conflicts, serial_violations, BufferConflict, throughput_mbps, AnalyzeOptions, FramePhases, OrderingViolation,
    PhaseReport, ViolationKind,
};
pub use collector::{CollectSummary, Collector};
pub use emitter::{now_us, EmitStats, Emitter, MemoryLog, Sink};
pub use plot::{lifelines, plot, LifelinePlot, Polyline, EVEN_FRAME_COLOR, ODD_FRAME_COLOR};
pub use record::{escape, merge_logs, parse_log, read_log, unescape, write_log, EventRecord};

#[derive(Debug, thiserror::Error)]
pub enum EventLogError {
    #[error("malformed record {line:?}: {reason}")]
    Parse { line: String, reason: String },
    #[error("event log is empty")]
    EmptyLog,
    #[error("collector stopped: {0}")]
    CollectorFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::backend::{self, predict, BackendConfig, BackendReport, Mode, Prediction, SlabSource, TimingModel, ViewerEndpoint};
use crate::block_cache::{CacheClient, CacheServer, Storage, StoreConfig};
use crate::event_log::{self, analyze, buffer_conflicts, merge_logs, read_log, serial_violations, AnalyzeOptions, Collector, Emitter, Sink};
use crate::viewer::{look_along, Viewer, ViewerConfig, ViewerError, ViewerSummary};
use crate::volume::{read_descriptor, synthesize, Axis, VolumeDataset};

use super::config::{DatasetSpec, RunConfig, RUN_LOCAL_KEYS};
use super::OrchestratorError;

const POLL: Duration = Duration::from_millis(20);
/// How long the back end gets to wind down after a stop request.
const STOP_GRACE: Duration = Duration::from_secs(10);
/// Accepted measured/predicted wall-time band when delays are injected.
pub const MODEL_TOLERANCE: f64 = 0.15;
/// Minimum overlap fraction expected of an overlapped run.
pub const MIN_OVERLAP: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Check {
        Check { name: name.to_string(), passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: BTreeMap<String, String>,
    pub mode: Mode,
    pub servers: usize,
    pub workers: usize,
    pub timesteps: usize,
    pub timesteps_completed: usize,
    /// Back-end wall time, first load to last send.
    pub wall_time_s: f64,
    /// Span of the back-end records in the event log.
    pub log_span_s: f64,
    pub mean_load_s: Option<f64>,
    pub mean_render_s: Option<f64>,
    /// Model evaluated at the measured mean phase times.
    pub predicted: Option<Prediction>,
    /// The prediction for this run's mode.
    pub predicted_wall_s: Option<f64>,
    pub measured_over_predicted: Option<f64>,
    pub overlap_fraction: Option<f64>,
    pub load_throughput_mbps: Option<f64>,
    pub heavy_throughput_mbps: f64,
    pub heavy_bytes: u64,
    pub light_bytes: u64,
    pub raw_bytes: u64,
    pub axis_by_timestep: Vec<Axis>,
    pub ordering_violations: usize,
    pub buffer_conflicts: usize,
    pub viewer_frames: Vec<Option<u32>>,
    pub snapshots: Vec<PathBuf>,
    pub log_path: PathBuf,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn write(&self, path: &Path) -> Result<(), OrchestratorError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<RunReport, OrchestratorError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub timesteps: usize,
    pub serial_s: f64,
    pub overlapped_s: f64,
    pub measured_speedup: f64,
    /// Model speedup at the phase times measured in the overlapped run.
    pub predicted_speedup: Option<f64>,
    pub bound: f64,
}

/// Measured serial/overlapped speedup of two runs that differ only in mode.
pub fn compare(a: &RunReport, b: &RunReport) -> Result<Comparison, OrchestratorError> {
    let (serial, over) = match (a.mode, b.mode) {
        (Mode::Serial, Mode::Overlapped) => (a, b),
        (Mode::Overlapped, Mode::Serial) => (b, a),
        (m, n) => return Err(OrchestratorError::Mismatch(format!("need one serial and one overlapped run, got {m} and {n}"))),
    };
    let strip = |r: &RunReport| {
        let mut m = r.config.clone();
        m.retain(|k, _| !RUN_LOCAL_KEYS.contains(&k.as_str()));
        m
    };
    let (x, y) = (strip(serial), strip(over));
    if x != y {
        let diff: Vec<String> = x
            .keys()
            .chain(y.keys())
            .filter(|k| x.get(*k) != y.get(*k))
            .map(|k| format!("{k}: {:?} vs {:?}", x.get(k), y.get(k)))
            .collect();
        return Err(OrchestratorError::Mismatch(diff.join("; ")));
    }
    if over.wall_time_s <= 0.0 {
        return Err(OrchestratorError::Mismatch("overlapped run has no wall time".into()));
    }
    Ok(Comparison {
        timesteps: serial.timesteps,
        serial_s: serial.wall_time_s,
        overlapped_s: over.wall_time_s,
        measured_speedup: serial.wall_time_s / over.wall_time_s,
        predicted_speedup: over.predicted.map(|p| p.speedup),
        bound: TimingModel::speedup_bound(serial.timesteps),
    })
}

/// Everything launched for one run, torn down on drop.
#[derive(Default)]
struct Stack {
    collector: Option<Collector>,
    servers: Vec<CacheServer>,
    viewer: Option<Viewer>,
    emitters: Vec<Emitter>,
    addrs: Vec<(String, SocketAddr)>,
}

impl Stack {
    fn finish_emitters(&mut self) -> Vec<PathBuf> {
        let mut spools = Vec::new();
        for e in self.emitters.drain(..) {
            let s = e.finish();
            if s.spooled {
                spools.extend(s.spool_path);
            }
        }
        spools
    }

    fn teardown(&mut self) -> Option<ViewerSummary> {
        let summary = self.viewer.take().map(Viewer::shutdown);
        self.finish_emitters();
        if let Some(c) = self.collector.take() {
            if let Err(e) = c.shutdown() {
                warn!("collector: {e}");
            }
        }
        for s in self.servers.drain(..) {
            s.shutdown();
        }
        summary
    }
}

impl Drop for Stack {
    fn drop(&mut self) {
        self.teardown();
    }
}

/// Components still accepting connections.
pub fn probe_listening(addrs: &[(String, SocketAddr)]) -> Vec<String> {
    addrs
        .iter()
        .filter(|(_, a)| TcpStream::connect_timeout(a, Duration::from_millis(200)).is_ok())
        .map(|(n, a)| format!("{n} at {a}"))
        .collect()
}

fn load_dataset(config: &RunConfig) -> Result<VolumeDataset, OrchestratorError> {
    let mut ds = match &config.dataset {
        DatasetSpec::Synthetic { kind, dims } => synthesize(*kind, *dims, config.timesteps),
        DatasetSpec::Files(dir) => read_descriptor(dir)?,
    };
    if ds.timesteps < config.timesteps {
        return Err(OrchestratorError::Config(format!(
            "dataset has {} timesteps, {} requested",
            ds.timesteps, config.timesteps
        )));
    }
    ds.timesteps = config.timesteps;
    Ok(ds.normalized()?)
}

fn bind_err(component: &str, port: u16, host: &str, e: impl std::fmt::Display) -> OrchestratorError {
    OrchestratorError::Launch { component: component.to_string(), addr: format!("{host}:{port}"), reason: e.to_string() }
}

/// Launches the cache servers, collector, viewer and back end for one run,
/// drives it to completion and writes `report-<mode>.json` to the output
/// directory. On any failure every component is stopped before returning.
pub fn run(config: &RunConfig) -> Result<RunReport, OrchestratorError> {
    config.validate()?;
    let out = &config.out_dir;
    std::fs::create_dir_all(out)?;
    let host = &config.host;
    let mut stack = Stack::default();

    let log_path = out.join(format!("events-{}.log", config.mode));
    let collector = Collector::bind((host.as_str(), config.collector_port), &log_path)
        .map_err(|e| bind_err("collector", config.collector_port, host, e))?;
    let collector_addr = collector.local_addr();
    stack.addrs.push(("collector".into(), collector_addr));
    stack.collector = Some(collector);

    for i in 0..config.servers {
        let port = config.cache_ports.get(i).copied().unwrap_or(0);
        let storage = if config.persist_cache { Storage::Dir(out.join(format!("cache-{i}"))) } else { Storage::Memory };
        let s = CacheServer::spawn((host.as_str(), port), storage).map_err(|e| bind_err("cache server", port, host, e))?;
        stack.addrs.push((format!("cache server {i}"), s.local_addr()));
        stack.servers.push(s);
    }
    let store = StoreConfig::new(stack.servers.iter().map(|s| s.local_addr().to_string()).collect(), config.block_size)?;
    let client = CacheClient::new(store)?;
    let dataset = load_dataset(config)?;
    let dims = dataset.dims;
    let source = SlabSource::ingest(&client, &config.name, &dataset)?;
    info!("ingested {} timesteps of {dims} over {} servers", config.timesteps, config.servers);

    let emitter = |program: &str| {
        let spool = out.join(format!("spool-{program}-{}.log", config.mode));
        Emitter::new(host.clone(), program, Sink::Collector { addr: collector_addr, spool })
    };
    let viewer_em = emitter("viewer");
    let backend_em = emitter("backend");
    stack.emitters.extend([viewer_em.clone(), backend_em.clone()]);

    let mut d = [0.0; 3];
    d[config.initial_axis.index()] = 1.0;
    let viewer = Viewer::start(
        ViewerConfig {
            listen: format!("{host}:{}", config.viewer_port),
            workers: config.workers,
            raster: config.raster,
            ui_listen: config.ui_port.map(|p| format!("{host}:{p}")),
            headless_out: config.snapshot_every.map(|_| out.join(format!("snapshots-{}", config.mode))),
            snapshot_every: config.snapshot_every.unwrap_or(1),
            initial_orientation: look_along(d).expect("axis direction is a unit vector"),
            volume_dims: Some(dims),
        },
        viewer_em,
    )
    .map_err(|e| match e {
        ViewerError::Bind { addr, source } => {
            OrchestratorError::Launch { component: "viewer".into(), addr, reason: source.to_string() }
        }
        other => other.into(),
    })?;
    let viewer_addr = viewer.local_addr();
    stack.addrs.push(("viewer".into(), viewer_addr));
    if let Some(ui) = viewer.ui_addr() {
        stack.addrs.push(("viewer bridge".into(), ui));
    }
    stack.viewer = Some(viewer);

    let be_config = BackendConfig {
        workers: config.workers,
        timesteps: Some(config.timesteps),
        mode: config.mode,
        inject_load: config.inject_load,
        inject_render: config.inject_render,
        initial_axis: config.initial_axis,
        ..Default::default()
    };
    let stop = be_config.stop.clone();
    let endpoint = ViewerEndpoint::Tcp(viewer_addr.to_string());
    let backend = thread::Builder::new()
        .name("backend".into())
        .spawn(move || backend::run(&be_config, source, &endpoint, &backend_em))?;

    // Supervise until the back end finishes or the run times out.
    let started = Instant::now();
    let mut timed_out = false;
    while !backend.is_finished() {
        if !timed_out && started.elapsed() > config.timeout {
            warn!("run exceeded {:?}, stopping the back end", config.timeout);
            stop.store(true, Ordering::SeqCst);
            timed_out = true;
        }
        if timed_out && started.elapsed() > config.timeout + STOP_GRACE {
            stack.teardown();
            return Err(OrchestratorError::Timeout(config.timeout));
        }
        thread::sleep(POLL);
    }
    let result = backend.join().map_err(|_| OrchestratorError::Component {
        component: "back end".into(),
        message: "worker thread panicked".into(),
    })?;
    let be: BackendReport = match result {
        Ok(r) => r,
        Err(e) => {
            stack.teardown();
            return Err(OrchestratorError::Component { component: "back end".into(), message: e.to_string() });
        }
    };
    if timed_out {
        stack.teardown();
        return Err(OrchestratorError::Timeout(config.timeout));
    }
    if let Some(why) = &be.aborted {
        stack.teardown();
        return Err(OrchestratorError::Component { component: "back end".into(), message: why.clone() });
    }

    if let Some(v) = &stack.viewer {
        if !v.wait_idle(Duration::from_secs(10)) {
            warn!("viewer still has open connections at teardown");
        }
    }
    let viewer_summary = stack.teardown().unwrap_or_default();
    let addrs = std::mem::take(&mut stack.addrs);
    let alive = probe_listening(&addrs);

    let mut logs = vec![read_log(&log_path)?];
    for p in std::fs::read_dir(out)?.flatten().map(|e| e.path()) {
        let is_spool = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("spool-") && n.ends_with(&format!("-{}.log", config.mode)));
        if is_spool {
            logs.push(read_log(&p)?);
        }
    }
    let records = merge_logs(logs);
    event_log::write_log(&log_path, &records)?;

    let report = build_report(config, &be, &viewer_summary, &records, &alive, log_path)?;
    report.write(&out.join(format!("report-{}.json", config.mode)))?;
    Ok(report)
}

fn build_report(
    config: &RunConfig,
    be: &BackendReport,
    viewer: &ViewerSummary,
    records: &[event_log::EventRecord],
    alive: &[String],
    log_path: PathBuf,
) -> Result<RunReport, OrchestratorError> {
    let phases = analyze(records, &AnalyzeOptions::default());
    let n = config.timesteps;
    let predicted = match (phases.mean_load_s, phases.mean_render_s) {
        (Some(l), Some(r)) => Some(predict(&TimingModel::new(l, r, n)?)?),
        _ => None,
    };
    let predicted_wall_s = predicted.map(|p| match config.mode {
        Mode::Serial => p.serial_s,
        Mode::Overlapped => p.overlapped_s,
    });
    let measured_over_predicted = predicted_wall_s.filter(|p| *p > 0.0).map(|p| be.wall_time_s / p);
    let ordering = match config.mode {
        Mode::Serial => serial_violations(records).len(),
        Mode::Overlapped => phases.violations.len(),
    };
    let conflicts = buffer_conflicts(records).len();
    let heavy: u64 = be.heavy_bytes_by_timestep.iter().sum();

    let mut checks = vec![
        Check::new("complete", be.timesteps_completed == n, format!("{} of {n} timesteps", be.timesteps_completed)),
        Check::new("event ordering", ordering == 0, format!("{ordering} violations")),
        Check::new(
            "viewer received",
            viewer.last_frames.iter().all(|f| *f == Some(n as u32 - 1)) && viewer.receive_errors.is_empty(),
            format!("last frames {:?}, errors {:?}", viewer.last_frames, viewer.receive_errors),
        ),
        Check::new("teardown", alive.is_empty(), if alive.is_empty() { "all ports closed".into() } else { alive.join(", ") }),
    ];
    match config.mode {
        Mode::Serial => checks.push(Check::new(
            "no overlap",
            phases.overlap_fraction.unwrap_or(0.0) == 0.0,
            format!("overlap fraction {:?}", phases.overlap_fraction),
        )),
        Mode::Overlapped => {
            checks.push(Check::new("buffer exclusion", conflicts == 0, format!("{conflicts} conflicts")));
            if let (Some(f), Some(l), Some(r)) = (phases.overlap_fraction, phases.mean_load_s, phases.mean_render_s) {
                // Only meaningful when neither phase dominates.
                if (l - r).abs() <= 0.25 * l.max(r) {
                    checks.push(Check::new("overlap", f >= MIN_OVERLAP, format!("overlap fraction {f:.3}")));
                }
            }
        }
    }
    if !config.inject_load.is_zero() && !config.inject_render.is_zero() {
        if let Some(ratio) = measured_over_predicted {
            checks.push(Check::new(
                "timing model",
                (ratio - 1.0).abs() <= MODEL_TOLERANCE,
                format!("measured/predicted {ratio:.3}"),
            ));
        }
    }

    Ok(RunReport {
        config: config.to_pairs(),
        mode: config.mode,
        servers: config.servers,
        workers: config.workers,
        timesteps: n,
        timesteps_completed: be.timesteps_completed,
        wall_time_s: be.wall_time_s,
        log_span_s: phases.wall_time_s,
        mean_load_s: phases.mean_load_s,
        mean_render_s: phases.mean_render_s,
        predicted,
        predicted_wall_s,
        measured_over_predicted,
        overlap_fraction: phases.overlap_fraction,
        load_throughput_mbps: phases.load_throughput_mbps,
        heavy_throughput_mbps: if be.wall_time_s > 0.0 { event_log::throughput_mbps(heavy, be.wall_time_s) } else { 0.0 },
        heavy_bytes: heavy,
        light_bytes: be.light_bytes_by_timestep.iter().sum(),
        raw_bytes: be.raw_bytes_by_timestep.iter().sum(),
        axis_by_timestep: be.axis_by_timestep.clone(),
        ordering_violations: ordering,
        buffer_conflicts: conflicts,
        viewer_frames: viewer.last_frames.clone(),
        snapshots: viewer.snapshots.clone(),
        log_path,
        checks,
    })
}

/// Runs the same configuration serially and overlapped, each into its own
/// subdirectory, and compares them.
pub fn run_matrix(config: &RunConfig) -> Result<(RunReport, RunReport, Comparison), OrchestratorError> {
    let mut reports = Vec::new();
    for mode in [Mode::Serial, Mode::Overlapped] {
        let mut c = config.clone();
        c.mode = mode;
        reports.push(run(&c)?);
    }
    let over = reports.pop().expect("two runs");
    let serial = reports.pop().expect("two runs");
    let cmp = compare(&serial, &over)?;
    std::fs::write(config.out_dir.join("comparison.json"), serde_json::to_string_pretty(&cmp)?)?;
    Ok((serial, over, cmp))
}

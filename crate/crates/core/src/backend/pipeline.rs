//! Worker loops for serial and overlapped execution.

use std::fmt;
use std::io;
use std::net::{Shutdown, TcpStream};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, warn};

use crate::event_log::{tags, Emitter};
use crate::protocol::{self, Feedback, FrameType, HeavyPayload, LightPayload};
use crate::volume::{decompose, Axis, Dims, SlabAssignment, TransferFunction, Volume};

use super::load::SlabSource;
use super::render::{placement, render_slab, Direction};
use super::sync::{Command, ControlCell, DoubleBuffer, Gate, Staged};
use super::BackendError;

const CLOSE_PATIENCE: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Serial,
    Overlapped,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Serial => "serial",
            Mode::Overlapped => "overlapped",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "serial" => Ok(Mode::Serial),
            "overlapped" => Ok(Mode::Overlapped),
            other => Err(format!("unknown mode {other:?} (serial|overlapped)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BackendConfig {
    pub workers: usize,
    /// Timesteps to render; `None` renders all of the source.
    pub timesteps: Option<usize>,
    pub mode: Mode,
    /// Each load is padded to at least this long.
    pub inject_load: Duration,
    /// Each render is padded to at least this long.
    pub inject_render: Duration,
    pub transfer_function: TransferFunction,
    pub initial_axis: Axis,
    pub initial_direction: Direction,
    /// Subset of worker indices hosted by this process; `None` hosts all.
    pub local_workers: Option<Vec<usize>>,
    /// How long to keep retrying the viewer connection.
    pub connect_timeout: Duration,
    /// Set to stop after the timestep in progress.
    pub stop: Arc<AtomicBool>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            workers: 1,
            timesteps: None,
            mode: Mode::Serial,
            inject_load: Duration::ZERO,
            inject_render: Duration::ZERO,
            transfer_function: TransferFunction::gray_ramp(),
            initial_axis: Axis::Z,
            initial_direction: Direction::Positive,
            local_workers: None,
            connect_timeout: Duration::from_secs(5),
            stop: Arc::new(AtomicBool::new(false)),
        }
    }
}

/// Where workers send payloads.
#[derive(Debug, Clone)]
pub enum ViewerEndpoint {
    Tcp(String),
    Capture(PayloadCapture),
    Null,
}

#[derive(Debug, Clone)]
pub struct CapturedFrame {
    pub worker: usize,
    pub light: LightPayload,
    pub heavy: HeavyPayload,
}

/// In-memory payload recorder, for tests and dry runs.
#[derive(Debug, Clone, Default)]
pub struct PayloadCapture(Arc<Mutex<Vec<CapturedFrame>>>);

impl PayloadCapture {
    pub fn new() -> Self {
        PayloadCapture::default()
    }

    pub fn frames(&self) -> Vec<CapturedFrame> {
        self.0.lock().unwrap().clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackEffect {
    /// Takes effect at `from_timestep`, the first timestep not yet latched.
    Scheduled { axis: Axis, direction: Direction, from_timestep: usize },
    Unchanged,
    Ignored(String),
}

#[derive(Debug)]
struct AxisInner {
    requested: (Axis, Direction),
    latched: Vec<(Axis, Direction)>,
    messages: usize,
}

/// Shared frame schedule: the axis and direction for timestep `t` are fixed
/// the first time any worker starts loading `t`.
#[derive(Debug)]
pub struct AxisControl {
    dims: Dims,
    workers: usize,
    inner: Mutex<AxisInner>,
}

impl AxisControl {
    pub fn new(dims: Dims, workers: usize, axis: Axis, direction: Direction) -> Self {
        AxisControl {
            dims,
            workers,
            inner: Mutex::new(AxisInner { requested: (axis, direction), latched: Vec::new(), messages: 0 }),
        }
    }

    /// Applies one encoded feedback payload from the viewer.
    pub fn handle_axis_feedback(&self, payload: &[u8]) -> FeedbackEffect {
        match Feedback::decode(payload) {
            Ok(fb) => self.apply(fb),
            Err(e) => {
                warn!("ignoring malformed axis feedback: {e}");
                self.inner.lock().unwrap().messages += 1;
                FeedbackEffect::Ignored(e.to_string())
            }
        }
    }

    pub fn apply(&self, fb: Feedback) -> FeedbackEffect {
        let mut g = self.inner.lock().unwrap();
        g.messages += 1;
        let c = fb.direction[fb.axis.index()];
        if !c.is_finite() {
            warn!("ignoring axis feedback with non-finite direction");
            return FeedbackEffect::Ignored("non-finite direction".into());
        }
        if let Err(e) = decompose(self.dims, fb.axis, self.workers) {
            warn!("ignoring axis feedback {}: {e}", fb.axis);
            return FeedbackEffect::Ignored(e.to_string());
        }
        let want = (fb.axis, Direction::from_component(c as f64));
        if want == g.requested {
            return FeedbackEffect::Unchanged;
        }
        g.requested = want;
        FeedbackEffect::Scheduled { axis: want.0, direction: want.1, from_timestep: g.latched.len() }
    }

    pub fn latch(&self, t: usize) -> (Axis, Direction) {
        let mut g = self.inner.lock().unwrap();
        while g.latched.len() <= t {
            let r = g.requested;
            g.latched.push(r);
        }
        g.latched[t]
    }

    pub fn requested(&self) -> (Axis, Direction) {
        self.inner.lock().unwrap().requested
    }

    pub fn schedule(&self) -> Vec<(Axis, Direction)> {
        self.inner.lock().unwrap().latched.clone()
    }

    pub fn messages(&self) -> usize {
        self.inner.lock().unwrap().messages
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BackendReport {
    pub mode: Mode,
    pub workers: usize,
    pub timesteps_requested: usize,
    /// Timesteps every hosted worker delivered in full.
    pub timesteps_completed: usize,
    pub wall_time_s: f64,
    pub axis_by_timestep: Vec<Axis>,
    pub final_axis: Axis,
    pub heavy_bytes_by_timestep: Vec<u64>,
    pub light_bytes_by_timestep: Vec<u64>,
    pub raw_bytes_by_timestep: Vec<u64>,
    pub feedback_messages: usize,
    pub redecompositions: usize,
    pub protocol_violations: usize,
    pub aborted: Option<String>,
}

#[derive(Default)]
struct Tally {
    heavy: Vec<u64>,
    light: Vec<u64>,
    raw: Vec<u64>,
}

struct Shared {
    config: BackendConfig,
    source: SlabSource,
    dims: Dims,
    timesteps: usize,
    control: Arc<AxisControl>,
    emitter: Emitter,
    tally: Mutex<Tally>,
    abort: AtomicBool,
    violations: AtomicUsize,
    redecompositions: AtomicUsize,
}

impl Shared {
    fn stopped(&self) -> bool {
        self.abort.load(Ordering::SeqCst) || self.config.stop.load(Ordering::SeqCst)
    }

    fn emit(&self, tag: &str, t: usize, w: usize) {
        self.emitter.emit(tag, t as u32, w as i32);
    }

    fn emit_kv(&self, tag: &str, t: usize, w: usize, kv: &[(&str, String)]) {
        let extra = kv.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        self.emitter.emit_with(tag, t as u32, w as i32, extra);
    }

    fn add(&self, t: usize, f: impl FnOnce(&mut Tally) -> (&mut Vec<u64>, u64)) {
        let mut g = self.tally.lock().unwrap();
        let (v, n) = f(&mut g);
        if v.len() <= t {
            v.resize(t + 1, 0);
        }
        v[t] += n;
    }

    /// Latches timestep `t` and re-decomposes if its axis differs from the
    /// worker's current slab.
    fn assignment(&self, t: usize, w: usize, current: &mut Option<SlabAssignment>) -> Result<(SlabAssignment, Direction), BackendError> {
        let (axis, dir) = self.control.latch(t);
        if let Some(s) = current.as_ref().filter(|s| s.axis == axis) {
            return Ok((s.clone(), dir));
        }
        let slab = decompose(self.dims, axis, self.config.workers)?.swap_remove(w);
        if let Some(old) = current.as_ref() {
            debug!("worker {w}: axis {} -> {axis} at timestep {t}", old.axis);
            self.emit_kv(tags::BE_REDECOMPOSE, t, w, &[("axis", axis.to_string())]);
            self.redecompositions.fetch_add(1, Ordering::SeqCst);
        }
        *current = Some(slab.clone());
        Ok((slab, dir))
    }

    fn light_payload(&self, t: usize, slab: &SlabAssignment) -> LightPayload {
        let (ua, va) = slab.axis.transverse();
        LightPayload {
            frame: t as u32,
            width: self.dims.get(ua) as u32,
            height: self.dims.get(va) as u32,
            bytes_per_pixel: 4,
            axis: slab.axis,
            placement: placement(self.dims, slab),
        }
    }

    fn send_light(&self, t: usize, w: usize, slab: &SlabAssignment, sink: &mut WorkerSink) -> Result<(), BackendError> {
        let light = self.light_payload(t, slab);
        self.emit(tags::BE_LIGHT_SEND, t, w);
        sink.send_light(w, &light).map_err(|source| BackendError::ViewerLost { worker: w, source })?;
        self.emit(tags::BE_LIGHT_END, t, w);
        self.add(t, |g| (&mut g.light, protocol::LIGHT_PAYLOAD_LEN as u64));
        Ok(())
    }

    fn render(&self, t: usize, w: usize, voxels: &Volume, slab: &SlabAssignment, dir: Direction) -> Result<Vec<u8>, BackendError> {
        self.emit(tags::BE_RENDER_START, t, w);
        let started = Instant::now();
        let img = render_slab(voxels, &self.config.transfer_function, slab.axis, dir)?;
        pad(started, self.config.inject_render);
        self.emit(tags::BE_RENDER_END, t, w);
        Ok(img.to_rgba8())
    }

    fn send_heavy(&self, t: usize, w: usize, pixels: Vec<u8>, sink: &mut WorkerSink) -> Result<(), BackendError> {
        let heavy = HeavyPayload { frame: t as u32, pixels, geometry: Vec::new() };
        let n = heavy.pixels.len() as u64;
        self.emit(tags::BE_HEAVY_SEND, t, w);
        sink.send_heavy(w, heavy).map_err(|source| BackendError::ViewerLost { worker: w, source })?;
        self.emit_kv(tags::BE_HEAVY_END, t, w, &[("bytes", n.to_string())]);
        self.add(t, |g| (&mut g.heavy, n));
        Ok(())
    }

    fn load(&self, t: usize, w: usize, slab: &SlabAssignment) -> Result<(Volume, u64), BackendError> {
        let started = Instant::now();
        let out = self.source.load(t, slab);
        pad(started, self.config.inject_load);
        if let Ok((_, bytes)) = &out {
            self.emit_kv(tags::BE_LOAD_END, t, w, &[("bytes", bytes.to_string())]);
            self.add(t, |g| (&mut g.raw, *bytes));
        }
        out
    }
}

fn pad(started: Instant, target: Duration) {
    let elapsed = started.elapsed();
    if elapsed < target {
        thread::sleep(target - elapsed);
    }
}

enum WorkerSink {
    Tcp {
        stream: TcpStream,
        feedback: Option<(JoinHandle<()>, mpsc::Receiver<()>)>,
    },
    Capture {
        capture: PayloadCapture,
        pending: Option<LightPayload>,
    },
    Null,
}

impl WorkerSink {
    fn connect(endpoint: &ViewerEndpoint, worker: usize, patience: Duration, control: &Arc<AxisControl>, emitter: &Emitter) -> Result<Self, BackendError> {
        match endpoint {
            ViewerEndpoint::Null => Ok(WorkerSink::Null),
            ViewerEndpoint::Capture(c) => Ok(WorkerSink::Capture { capture: c.clone(), pending: None }),
            ViewerEndpoint::Tcp(addr) => {
                let deadline = Instant::now() + patience;
                let stream = loop {
                    match TcpStream::connect(addr.as_str()) {
                        Ok(s) => break s,
                        Err(e) if Instant::now() >= deadline => {
                            return Err(BackendError::ViewerUnreachable { addr: addr.clone(), source: e })
                        }
                        Err(_) => thread::sleep(Duration::from_millis(20)),
                    }
                };
                stream.set_nodelay(true).ok();
                let feedback = if worker == 0 {
                    let rd = stream
                        .try_clone()
                        .map_err(|source| BackendError::ViewerUnreachable { addr: addr.clone(), source })?;
                    let (tx, rx) = mpsc::channel();
                    let control = control.clone();
                    let emitter = emitter.clone();
                    let h = thread::spawn(move || {
                        feedback_loop(rd, &control, &emitter);
                        let _ = tx.send(());
                    });
                    Some((h, rx))
                } else {
                    None
                };
                Ok(WorkerSink::Tcp { stream, feedback })
            }
        }
    }

    fn send_light(&mut self, worker: usize, light: &LightPayload) -> io::Result<()> {
        match self {
            WorkerSink::Tcp { stream, .. } => {
                protocol::write_frame(stream, FrameType::Light, worker as u16, light.frame, &light.encode())
            }
            WorkerSink::Capture { pending, .. } => {
                *pending = Some(light.clone());
                Ok(())
            }
            WorkerSink::Null => Ok(()),
        }
    }

    fn send_heavy(&mut self, worker: usize, heavy: HeavyPayload) -> io::Result<()> {
        match self {
            WorkerSink::Tcp { stream, .. } => {
                protocol::write_frame(stream, FrameType::Heavy, worker as u16, heavy.frame, &heavy.encode())
            }
            WorkerSink::Capture { capture, pending } => {
                let light = pending
                    .take()
                    .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "heavy payload without light payload"))?;
                capture.0.lock().unwrap().push(CapturedFrame { worker, light, heavy });
                Ok(())
            }
            WorkerSink::Null => Ok(()),
        }
    }

    /// Half-closes the connection and waits briefly for the viewer to close
    /// its end, so nothing queued is lost to a reset.
    fn close(self) {
        if let WorkerSink::Tcp { stream, feedback } = self {
            let _ = stream.shutdown(Shutdown::Write);
            if let Some((h, done)) = feedback {
                let _ = done.recv_timeout(CLOSE_PATIENCE);
                let _ = stream.shutdown(Shutdown::Both);
                let _ = h.join();
            }
        }
    }
}

fn feedback_loop(mut rd: TcpStream, control: &AxisControl, emitter: &Emitter) {
    loop {
        let head = match protocol::FrameHeader::read_from(&mut rd) {
            Ok(h) => h,
            Err(e) => {
                if e.kind() != io::ErrorKind::UnexpectedEof {
                    debug!("feedback channel closed: {e}");
                }
                return;
            }
        };
        let Ok(payload) = protocol::read_payload(&mut rd, &head) else { return };
        if head.msg_type != FrameType::Feedback {
            warn!("ignoring unexpected {:?} frame on feedback channel", head.msg_type);
            continue;
        }
        let effect = control.handle_axis_feedback(&payload);
        let summary = match &effect {
            FeedbackEffect::Scheduled { axis, from_timestep, .. } => format!("scheduled:{axis}@{from_timestep}"),
            FeedbackEffect::Unchanged => "unchanged".into(),
            FeedbackEffect::Ignored(_) => "ignored".into(),
        };
        emitter.emit_with(tags::BE_AXIS_FEEDBACK, head.frame, 0, vec![("effect".into(), summary)]);
    }
}

fn serial_worker(sh: &Shared, w: usize, sink: &mut WorkerSink) -> Result<usize, BackendError> {
    let mut current = None;
    let mut done = 0;
    for t in 0..sh.timesteps {
        if sh.stopped() {
            break;
        }
        let (slab, dir) = sh.assignment(t, w, &mut current)?;
        sh.emit(tags::BE_FRAME_START, t, w);
        sh.emit(tags::BE_LOAD_START, t, w);
        let (voxels, _) = sh.load(t, w, &slab)?;
        sh.send_light(t, w, &slab, sink)?;
        let pixels = sh.render(t, w, &voxels, &slab, dir)?;
        sh.send_heavy(t, w, pixels, sink)?;
        done += 1;
    }
    Ok(done)
}

struct Group {
    gate_a: Gate,
    gate_b: Gate,
    control: ControlCell,
    buffer: DoubleBuffer,
    reader_error: Mutex<Option<BackendError>>,
}

impl Group {
    fn half(&self, sh: &Shared, t: usize, w: usize, role: &str) -> std::sync::MutexGuard<'_, Staged> {
        let h = DoubleBuffer::half_for(t);
        let g = match self.buffer.try_acquire(h) {
            Some(g) => g,
            None => {
                warn!("worker {w}: {role} found buffer half {h} busy at timestep {t}");
                sh.violations.fetch_add(1, Ordering::SeqCst);
                self.buffer.lock(h)
            }
        };
        sh.emit_kv(tags::BE_BUFFER_ACQUIRE, t, w, &[("role", role.into()), ("half", h.to_string())]);
        g
    }

    fn release(&self, sh: &Shared, t: usize, w: usize, role: &str, g: std::sync::MutexGuard<'_, Staged>) {
        let h = DoubleBuffer::half_for(t);
        sh.emit_kv(tags::BE_BUFFER_RELEASE, t, w, &[("role", role.into()), ("half", h.to_string())]);
        drop(g);
    }
}

fn reader_loop(sh: &Shared, grp: &Group, w: usize) {
    loop {
        grp.gate_a.acquire();
        let (t, slab) = match grp.control.peek() {
            Some(Command::Load { timestep, slab }) => (timestep, slab),
            Some(Command::Terminate) | None => {
                grp.control.mark_taken();
                debug!("worker {w}: reader terminating");
                return;
            }
        };
        sh.emit(tags::BE_FRAME_START, t, w);
        sh.emit(tags::BE_LOAD_START, t, w);
        grp.control.mark_taken();
        let mut g = grp.half(sh, t, w, "reader");
        match sh.load(t, w, &slab) {
            Ok((voxels, bytes)) => {
                *g = Staged { timestep: Some(t), slab: Some(slab), voxels: Some(voxels), bytes };
            }
            Err(e) => {
                *g = Staged::default();
                *grp.reader_error.lock().unwrap() = Some(e);
            }
        }
        grp.release(sh, t, w, "reader", g);
        grp.gate_b.post();
    }
}

fn renderer_loop(sh: &Shared, grp: &Group, w: usize, sink: &mut WorkerSink, terminated: &mut bool) -> Result<usize, BackendError> {
    let mut current = None;
    let mut dirs = Vec::with_capacity(sh.timesteps);
    let mut issue = |t: usize, dirs: &mut Vec<Direction>| -> Result<(), BackendError> {
        let (slab, dir) = sh.assignment(t, w, &mut current)?;
        dirs.push(dir);
        grp.control.set(Command::Load { timestep: t, slab });
        grp.gate_a.post();
        grp.control.wait_taken();
        Ok(())
    };
    let wait_loaded = || -> Result<(), BackendError> {
        grp.gate_b.acquire();
        match grp.reader_error.lock().unwrap().take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    };
    let terminate = |terminated: &mut bool| {
        grp.control.set(Command::Terminate);
        grp.gate_a.post();
        *terminated = true;
    };

    if sh.stopped() {
        return Ok(0);
    }
    issue(0, &mut dirs)?;
    wait_loaded()?;
    let mut t = 0;
    let mut done = 0;
    loop {
        let next = t + 1 < sh.timesteps && !sh.stopped();
        if next {
            issue(t + 1, &mut dirs)?;
        } else {
            terminate(terminated);
        }

        let g = grp.half(sh, t, w, "renderer");
        if g.timestep != Some(t) {
            return Err(BackendError::Protocol(format!(
                "worker {w}: half {} holds timestep {:?}, expected {t}",
                DoubleBuffer::half_for(t),
                g.timestep
            )));
        }
        let slab = g.slab.clone().expect("staged slab");
        let voxels = g.voxels.as_ref().expect("staged voxels");
        let sent = sh.send_light(t, w, &slab, sink).and_then(|_| sh.render(t, w, voxels, &slab, dirs[t]));
        grp.release(sh, t, w, "renderer", g);
        sh.send_heavy(t, w, sent?, sink)?;
        done += 1;

        if !next {
            return Ok(done);
        }
        wait_loaded()?;
        t += 1;
        if sh.stopped() {
            terminate(terminated);
            return Ok(done);
        }
    }
}

fn overlapped_worker(sh: &Shared, w: usize, sink: &mut WorkerSink) -> Result<usize, BackendError> {
    let grp = Group {
        gate_a: Gate::new(),
        gate_b: Gate::new(),
        control: ControlCell::new(),
        buffer: DoubleBuffer::new(),
        reader_error: Mutex::new(None),
    };
    thread::scope(|s| {
        let reader = s.spawn(|| reader_loop(sh, &grp, w));
        let mut terminated = false;
        let out = renderer_loop(sh, &grp, w, sink, &mut terminated);
        if !terminated {
            grp.control.set(Command::Terminate);
            grp.gate_a.post();
        }
        reader.join().expect("reader thread panicked");
        out
    })
}

/// Runs the back end for `config.mode` and returns a report. Failures after
/// start-up abort all workers and are reported in `aborted` with the
/// timesteps completed so far.
pub fn run(config: &BackendConfig, source: SlabSource, endpoint: &ViewerEndpoint, emitter: &Emitter) -> Result<BackendReport, BackendError> {
    let dims = source.dims();
    if config.workers == 0 {
        return Err(BackendError::Config("need at least one worker".into()));
    }
    let available = source.timesteps();
    let timesteps = config.timesteps.unwrap_or(available);
    if timesteps == 0 || timesteps > available {
        return Err(BackendError::Config(format!("{timesteps} timesteps requested, source has {available}")));
    }
    decompose(dims, config.initial_axis, config.workers)?;
    let hosted: Vec<usize> = config.local_workers.clone().unwrap_or_else(|| (0..config.workers).collect());
    if hosted.is_empty() || hosted.iter().any(|&w| w >= config.workers) {
        return Err(BackendError::Config(format!("hosted workers {hosted:?} outside 0..{}", config.workers)));
    }

    let control = Arc::new(AxisControl::new(dims, config.workers, config.initial_axis, config.initial_direction));
    let sh = Shared {
        config: config.clone(),
        source,
        dims,
        timesteps,
        control: control.clone(),
        emitter: emitter.clone(),
        tally: Mutex::new(Tally::default()),
        abort: AtomicBool::new(false),
        violations: AtomicUsize::new(0),
        redecompositions: AtomicUsize::new(0),
    };
    let mut sinks = Vec::with_capacity(hosted.len());
    for &w in &hosted {
        match WorkerSink::connect(endpoint, w, config.connect_timeout, &control, emitter) {
            Ok(s) => sinks.push(s),
            Err(e) => {
                sinks.into_iter().for_each(WorkerSink::close);
                return Err(e);
            }
        }
    }

    let started = Instant::now();
    let results: Vec<Result<usize, BackendError>> = thread::scope(|s| {
        let handles: Vec<_> = hosted
            .iter()
            .zip(sinks)
            .map(|(&w, mut sink)| {
                let sh = &sh;
                s.spawn(move || {
                    let r = match sh.config.mode {
                        Mode::Serial => serial_worker(sh, w, &mut sink),
                        Mode::Overlapped => overlapped_worker(sh, w, &mut sink),
                    };
                    if let Err(e) = &r {
                        warn!("worker {w} aborted: {e}");
                        sh.abort.store(true, Ordering::SeqCst);
                    }
                    sink.close();
                    r
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
    });
    let wall_time_s = started.elapsed().as_secs_f64();
    emitter.flush();

    let aborted = results.iter().find_map(|r| r.as_ref().err().map(|e| e.to_string()));
    let completed = results.iter().map(|r| *r.as_ref().unwrap_or(&0)).min().unwrap_or(0);
    let tally = sh.tally.into_inner().unwrap();
    let pad_to = |mut v: Vec<u64>| {
        v.resize(completed.max(v.len()), 0);
        v.truncate(completed);
        v
    };
    let schedule = control.schedule();
    Ok(BackendReport {
        mode: config.mode,
        workers: config.workers,
        timesteps_requested: timesteps,
        timesteps_completed: completed,
        wall_time_s,
        axis_by_timestep: schedule.iter().take(completed).map(|a| a.0).collect(),
        final_axis: control.requested().0,
        heavy_bytes_by_timestep: pad_to(tally.heavy),
        light_bytes_by_timestep: pad_to(tally.light),
        raw_bytes_by_timestep: pad_to(tally.raw),
        feedback_messages: control.messages(),
        redecompositions: sh.redecompositions.load(Ordering::SeqCst),
        protocol_violations: sh.violations.load(Ordering::SeqCst),
        aborted,
    })
}

pub fn run_serial(config: &BackendConfig, source: SlabSource, endpoint: &ViewerEndpoint, emitter: &Emitter) -> Result<BackendReport, BackendError> {
    let config = BackendConfig { mode: Mode::Serial, ..config.clone() };
    run(&config, source, endpoint, emitter)
}

pub fn run_overlapped(config: &BackendConfig, source: SlabSource, endpoint: &ViewerEndpoint, emitter: &Emitter) -> Result<BackendReport, BackendError> {
    let config = BackendConfig { mode: Mode::Overlapped, ..config.clone() };
    run(&config, source, endpoint, emitter)
}

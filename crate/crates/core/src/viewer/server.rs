//! The viewer process: one receiver per back-end connection, a driver that
//! applies view changes, sends axis feedback and writes snapshots, and an
//! optional UI bridge.

use std::io::{self, Read};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use crate::event_log::{tags, Emitter};
use crate::protocol::{self, Feedback};
use crate::volume::Dims;

use super::bridge::Bridge;
use super::composite::{composite, Camera, Raster};
use super::receive::{receive_loop, ReceiveEvent, ReceiveStats};
use super::scene::SceneGraph;
use super::view::{Mat3, ViewState, ViewUpdate, IDENTITY};
use super::ViewerError;

const POLL: Duration = Duration::from_millis(10);
const READ_POLL: Duration = Duration::from_millis(100);

#[derive(Debug, Clone)]
pub struct ViewerConfig {
    pub listen: String,
    pub workers: usize,
    /// Output raster width and height.
    pub raster: (usize, usize),
    pub ui_listen: Option<String>,
    pub headless_out: Option<PathBuf>,
    /// Write a snapshot whenever every slot has reached the next multiple
    /// of this frame count.
    pub snapshot_every: usize,
    pub initial_orientation: Mat3,
    /// Volume extent, for framing; inferred from the quads when absent.
    pub volume_dims: Option<Dims>,
}

impl Default for ViewerConfig {
    fn default() -> Self {
        ViewerConfig {
            listen: "127.0.0.1:0".into(),
            workers: 1,
            raster: (512, 512),
            ui_listen: None,
            headless_out: None,
            snapshot_every: 1,
            initial_orientation: IDENTITY,
            volume_dims: None,
        }
    }
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct ViewerSummary {
    pub connections: usize,
    pub frames_received: Vec<usize>,
    pub last_frames: Vec<Option<u32>>,
    pub receive_errors: Vec<String>,
    pub feedback_sent: usize,
    pub snapshots: Vec<PathBuf>,
}

enum Cmd {
    View(Mat3, Option<SyncSender<Result<ViewUpdate, ViewerError>>>),
}

struct Shared {
    config: ViewerConfig,
    scene: Arc<SceneGraph>,
    view: Mutex<ViewState>,
    emitter: Emitter,
    stop: AtomicBool,
    /// Worker 0's connection, for feedback.
    upstream: Mutex<Option<TcpStream>>,
    active: AtomicUsize,
    connections: AtomicUsize,
    feedback_sent: AtomicUsize,
    stats: Mutex<Vec<ReceiveStats>>,
    snapshots: Mutex<Vec<PathBuf>>,
    /// Smallest frame number the next snapshot waits for.
    next_snapshot: Mutex<u32>,
}

pub struct Viewer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    commands: Sender<Cmd>,
    bridge: Option<Bridge>,
    threads: Vec<JoinHandle<()>>,
}

/// Retries reads that time out until the viewer is stopping, so a read
/// timeout never splits a frame.
struct StopRead<'a> {
    s: &'a TcpStream,
    stop: &'a AtomicBool,
}

impl Read for StopRead<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        loop {
            let mut s = self.s;
            match s.read(buf) {
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    if self.stop.load(Ordering::SeqCst) {
                        return Err(io::Error::new(io::ErrorKind::ConnectionAborted, "viewer stopping"));
                    }
                }
                r => return r,
            }
        }
    }
}

impl Viewer {
    pub fn start(config: ViewerConfig, emitter: Emitter) -> Result<Viewer, ViewerError> {
        if config.workers == 0 {
            return Err(ViewerError::Config("need at least one worker slot".into()));
        }
        if config.raster.0 == 0 || config.raster.1 == 0 || config.snapshot_every == 0 {
            return Err(ViewerError::Config("raster size and snapshot interval must be positive".into()));
        }
        let view = ViewState::new(config.initial_orientation)?;
        if let Some(dir) = &config.headless_out {
            std::fs::create_dir_all(dir)?;
        }
        let listener = TcpListener::bind(&config.listen).map_err(|source| ViewerError::Bind { addr: config.listen.clone(), source })?;
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let scene = Arc::new(SceneGraph::new(config.workers));
        let (tx, rx) = mpsc::channel();
        let bridge = match &config.ui_listen {
            Some(ui) => {
                let (vtx, vrx) = mpsc::channel::<Mat3>();
                let b = Bridge::start(ui, scene.clone(), vtx)?;
                let fwd = tx.clone();
                thread::spawn(move || {
                    for m in vrx {
                        if fwd.send(Cmd::View(m, None)).is_err() {
                            break;
                        }
                    }
                });
                Some(b)
            }
            None => None,
        };
        let shared = Arc::new(Shared {
            config,
            scene,
            view: Mutex::new(view),
            emitter,
            stop: AtomicBool::new(false),
            upstream: Mutex::new(None),
            active: AtomicUsize::new(0),
            connections: AtomicUsize::new(0),
            feedback_sent: AtomicUsize::new(0),
            stats: Mutex::new(Vec::new()),
            snapshots: Mutex::new(Vec::new()),
            next_snapshot: Mutex::new(0),
        });
        let acceptor = {
            let sh = shared.clone();
            thread::spawn(move || accept_loop(listener, &sh))
        };
        let driver = {
            let sh = shared.clone();
            thread::spawn(move || driver_loop(&sh, rx))
        };
        info!("viewer listening on {addr}");
        Ok(Viewer { addr, shared, commands: tx, bridge, threads: vec![acceptor, driver] })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn ui_addr(&self) -> Option<SocketAddr> {
        self.bridge.as_ref().map(Bridge::local_addr)
    }

    pub fn scene(&self) -> &Arc<SceneGraph> {
        &self.shared.scene
    }

    pub fn view(&self) -> ViewState {
        self.shared.view.lock().unwrap().clone()
    }

    /// Applies an orientation on the driver thread; sends feedback upstream
    /// if the best axis changed.
    pub fn update_view(&self, orientation: Mat3) -> Result<ViewUpdate, ViewerError> {
        let (tx, rx) = mpsc::sync_channel(1);
        self.commands
            .send(Cmd::View(orientation, Some(tx)))
            .map_err(|_| ViewerError::Config("viewer stopped".into()))?;
        rx.recv().map_err(|_| ViewerError::Config("viewer stopped".into()))?
    }

    /// Composites the current scene at the current view.
    pub fn composite_now(&self) -> Raster {
        let view = self.view();
        composite(&self.shared.scene, &camera_for(&self.shared, &view))
    }

    pub fn feedback_sent(&self) -> usize {
        self.shared.feedback_sent.load(Ordering::SeqCst)
    }

    /// Waits until every slot holds frame `frame` or later.
    pub fn wait_for_frame(&self, frame: u32, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut seen = 0;
        loop {
            if self.shared.scene.frames().iter().all(|f| f.is_some_and(|f| f >= frame)) {
                return true;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            seen = self.shared.scene.wait_change(seen, (deadline - now).min(Duration::from_millis(50)));
        }
    }

    /// Waits until `workers` connections have been accepted and all of them
    /// have closed.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while Instant::now() < deadline {
            let sh = &self.shared;
            if sh.connections.load(Ordering::SeqCst) >= sh.config.workers && sh.active.load(Ordering::SeqCst) == 0 {
                return true;
            }
            thread::sleep(POLL);
        }
        false
    }

    pub fn shutdown(mut self) -> ViewerSummary {
        self.stop_all();
        let sh = &self.shared;
        let stats = sh.stats.lock().unwrap().clone();
        let mut frames_received = vec![0; sh.config.workers];
        for s in &stats {
            if let Some(w) = s.worker {
                frames_received[w] += s.frames;
            }
        }
        ViewerSummary {
            connections: sh.connections.load(Ordering::SeqCst),
            frames_received,
            last_frames: sh.scene.frames(),
            receive_errors: stats.iter().filter_map(|s| s.error.clone()).collect(),
            feedback_sent: sh.feedback_sent.load(Ordering::SeqCst),
            snapshots: sh.snapshots.lock().unwrap().clone(),
        }
    }

    fn stop_all(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(b) = self.bridge.take() {
            b.shutdown();
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for Viewer {
    fn drop(&mut self) {
        self.stop_all();
    }
}

fn camera_for(sh: &Shared, view: &ViewState) -> Camera {
    let (w, h) = sh.config.raster;
    let dims = sh.config.volume_dims.unwrap_or_else(|| infer_dims(&sh.scene));
    Camera::fit(view, dims, w, h)
}

/// Bounding extent of all quad corners, rounded up.
fn infer_dims(scene: &SceneGraph) -> Dims {
    let mut hi = [1.0f32; 3];
    for c in scene.snapshot() {
        for p in c.light.placement {
            for k in 0..3 {
                hi[k] = hi[k].max(p[k]);
            }
        }
    }
    Dims::new(hi[0].ceil() as usize, hi[1].ceil() as usize, hi[2].ceil() as usize)
}

fn accept_loop(listener: TcpListener, sh: &Arc<Shared>) {
    let mut receivers = Vec::new();
    while !sh.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((s, peer)) => {
                debug!("back-end connection from {peer}");
                sh.connections.fetch_add(1, Ordering::SeqCst);
                sh.active.fetch_add(1, Ordering::SeqCst);
                let sh2 = sh.clone();
                receivers.push(thread::spawn(move || serve_backend(s, &sh2)));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
    for r in receivers {
        let _ = r.join();
    }
}

fn serve_backend(s: TcpStream, sh: &Shared) {
    let _ = s.set_nonblocking(false);
    let _ = s.set_read_timeout(Some(READ_POLL));
    let _ = s.set_nodelay(true);
    let reader = StopRead { s: &s, stop: &sh.stop };
    let stats = receive_loop(reader, &sh.scene, &sh.emitter, |e| match e {
        ReceiveEvent::Worker(0) => match s.try_clone() {
            Ok(c) => *sh.upstream.lock().unwrap() = Some(c),
            Err(e) => warn!("cannot keep feedback channel: {e}"),
        },
        ReceiveEvent::Worker(_) => {}
        ReceiveEvent::Installed(_) => maybe_snapshot(sh),
    });
    if stats.worker == Some(0) {
        sh.upstream.lock().unwrap().take();
    }
    let _ = s.shutdown(Shutdown::Both);
    sh.stats.lock().unwrap().push(stats);
    sh.active.fetch_sub(1, Ordering::SeqCst);
}

fn driver_loop(sh: &Shared, commands: Receiver<Cmd>) {
    let mut pending: Option<Feedback> = None;
    while !sh.stop.load(Ordering::SeqCst) {
        match commands.recv_timeout(POLL) {
            Ok(Cmd::View(m, reply)) => {
                let result = sh.view.lock().unwrap().update_view(m);
                if let Ok(ViewUpdate { feedback: Some(fb), .. }) = &result {
                    pending = Some(*fb);
                }
                if let Err(e) = &result {
                    warn!("rejected orientation: {e}");
                }
                if let Some(r) = reply {
                    let _ = r.send(result);
                }
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => break,
        }
        if let Some(fb) = pending {
            if send_feedback(sh, &fb) {
                pending = None;
            }
        }
    }
}

/// Called after every install, so the slowest slot's frame number steps
/// through each multiple of the interval.
fn maybe_snapshot(sh: &Shared) {
    let Some(dir) = &sh.config.headless_out else { return };
    let mut next = sh.next_snapshot.lock().unwrap();
    let Some(lo) = sh.scene.frames().into_iter().collect::<Option<Vec<u32>>>().and_then(|v| v.into_iter().min()) else {
        return;
    };
    if lo < *next {
        return;
    }
    let view = sh.view.lock().unwrap().clone();
    let raster = composite(&sh.scene, &camera_for(sh, &view));
    let path = dir.join(format!("frame_{lo:05}.png"));
    match raster.save_png(&path) {
        Ok(()) => sh.snapshots.lock().unwrap().push(path),
        Err(e) => warn!("{e}"),
    }
    let k = sh.config.snapshot_every as u32;
    *next = (lo / k + 1) * k;
}

fn send_feedback(sh: &Shared, fb: &Feedback) -> bool {
    let mut up = sh.upstream.lock().unwrap();
    let Some(s) = up.as_mut() else { return false };
    let frame = sh.scene.slot(0).map(|c| c.frame()).unwrap_or(0);
    match protocol::write_feedback(s, frame, fb) {
        Ok(()) => {
            sh.feedback_sent.fetch_add(1, Ordering::SeqCst);
            sh.emitter.emit_with(tags::V_AXIS_FEEDBACK, frame, 0, vec![("axis".into(), fb.axis.to_string())]);
            true
        }
        Err(e) => {
            warn!("axis feedback not delivered: {e}");
            up.take();
            true
        }
    }
}

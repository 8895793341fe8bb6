use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use super::EventRecord;

const QUEUE_DEPTH: usize = 1 << 14;

/// Microseconds since the epoch from a process-wide monotonic anchor, so
/// wall-clock steps never reorder events within one process.
pub fn now_us() -> u64 {
    static ANCHOR: OnceLock<(Instant, u64)> = OnceLock::new();
    let (start, epoch_us) = *ANCHOR.get_or_init(|| {
        let epoch = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_micros() as u64;
        (Instant::now(), epoch)
    });
    epoch_us + start.elapsed().as_micros() as u64
}

/// Shared in-memory record list, used by tests and in-process runs.
pub type MemoryLog = Arc<Mutex<Vec<EventRecord>>>;

/// Where an [`Emitter`] delivers records.
#[derive(Debug, Clone)]
pub enum Sink {
    /// A collector daemon; records go to `spool` if it cannot be reached.
    Collector { addr: SocketAddr, spool: PathBuf },
    File(PathBuf),
    Memory(MemoryLog),
    Null,
}

enum Msg {
    Record(EventRecord),
    Flush(SyncSender<()>),
}

enum Writer {
    Tcp(BufWriter<TcpStream>),
    File(BufWriter<File>),
    Memory(MemoryLog),
    Null,
}

impl Writer {
    fn write(&mut self, r: EventRecord) -> std::io::Result<()> {
        match self {
            Writer::Tcp(w) => writeln!(w, "{}", r.to_line()),
            Writer::File(w) => writeln!(w, "{}", r.to_line()),
            Writer::Memory(m) => {
                m.lock().unwrap().push(r);
                Ok(())
            }
            Writer::Null => Ok(()),
        }
    }

    fn flush(&mut self) -> std::io::Result<()> {
        match self {
            Writer::Tcp(w) => w.flush(),
            Writer::File(w) => w.flush(),
            _ => Ok(()),
        }
    }
}

fn open_append(path: &Path) -> std::io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?))
}

/// Delivery statistics returned by [`Emitter::finish`].
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct EmitStats {
    pub emitted: u64,
    /// True if any record went to the local spool instead of the collector.
    pub spooled: bool,
    pub spool_path: Option<PathBuf>,
}

struct State {
    last_ts: u64,
    tx: Option<SyncSender<Msg>>,
}

struct Inner {
    host: String,
    program: String,
    state: Mutex<State>,
    emitted: AtomicU64,
    spooled: Arc<AtomicBool>,
    spool_path: Option<PathBuf>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

/// Cloneable, thread-safe event emitter for one (host, program).
///
/// Timestamps are assigned under the same lock that enqueues the record, so
/// delivery order matches timestamp order and timestamps never decrease.
#[derive(Clone)]
pub struct Emitter {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Emitter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Emitter")
            .field("host", &self.inner.host)
            .field("program", &self.inner.program)
            .finish()
    }
}

impl Emitter {
    pub fn new(host: impl Into<String>, program: impl Into<String>, sink: Sink) -> Self {
        let spooled = Arc::new(AtomicBool::new(false));
        let spool_path = match &sink {
            Sink::Collector { spool, .. } => Some(spool.clone()),
            _ => None,
        };
        let (tx, rx) = mpsc::sync_channel(QUEUE_DEPTH);
        let flag = spooled.clone();
        let handle = std::thread::Builder::new()
            .name("evlog-emit".into())
            .spawn(move || deliver(sink, rx, flag))
            .expect("spawn emitter thread");
        Emitter {
            inner: Arc::new(Inner {
                host: host.into(),
                program: program.into(),
                state: Mutex::new(State { last_ts: 0, tx: Some(tx) }),
                emitted: AtomicU64::new(0),
                spooled,
                spool_path,
                worker: Mutex::new(Some(handle)),
            }),
        }
    }

    /// Emitter that keeps records in memory; returns the shared list.
    pub fn memory(host: &str, program: &str) -> (Self, MemoryLog) {
        let log = MemoryLog::default();
        (Emitter::new(host, program, Sink::Memory(log.clone())), log)
    }

    pub fn null() -> Self {
        Emitter::new("localhost", "null", Sink::Null)
    }

    pub fn host(&self) -> &str {
        &self.inner.host
    }

    pub fn program(&self) -> &str {
        &self.inner.program
    }

    pub fn emit(&self, tag: &str, frame: u32, worker: i32) {
        self.emit_with(tag, frame, worker, Vec::new());
    }

    pub fn emit_with(&self, tag: &str, frame: u32, worker: i32, extra: Vec<(String, String)>) {
        let mut st = self.inner.state.lock().unwrap();
        let Some(tx) = st.tx.as_ref() else { return };
        let ts = now_us().max(st.last_ts);
        let rec = EventRecord {
            ts_us: ts,
            host: self.inner.host.clone(),
            program: self.inner.program.clone(),
            tag: tag.to_string(),
            frame,
            worker,
            extra,
        };
        if tx.send(Msg::Record(rec)).is_ok() {
            st.last_ts = ts;
            self.inner.emitted.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// Blocks until every record emitted so far has been handed to the sink.
    pub fn flush(&self) {
        let tx = self.inner.state.lock().unwrap().tx.clone();
        if let Some(tx) = tx {
            let (ack_tx, ack_rx) = mpsc::sync_channel(1);
            if tx.send(Msg::Flush(ack_tx)).is_ok() {
                let _ = ack_rx.recv();
            }
        }
    }

    /// Closes the emitter (for every clone) and waits for delivery.
    pub fn finish(&self) -> EmitStats {
        self.inner.state.lock().unwrap().tx.take();
        if let Some(h) = self.inner.worker.lock().unwrap().take() {
            let _ = h.join();
        }
        self.stats()
    }

    pub fn stats(&self) -> EmitStats {
        EmitStats {
            emitted: self.inner.emitted.load(Ordering::Relaxed),
            spooled: self.inner.spooled.load(Ordering::Relaxed),
            spool_path: self.inner.spool_path.clone(),
        }
    }
}

impl Drop for Inner {
    fn drop(&mut self) {
        self.state.get_mut().unwrap().tx.take();
        if let Some(h) = self.worker.get_mut().unwrap().take() {
            let _ = h.join();
        }
    }
}

fn deliver(sink: Sink, rx: Receiver<Msg>, spooled: Arc<AtomicBool>) {
    let spool_writer = |path: &PathBuf| match open_append(path) {
        Ok(w) => Writer::File(w),
        Err(e) => {
            log::error!("cannot open event spool {}: {e}", path.display());
            Writer::Null
        }
    };
    let mut spool_path = None;
    let mut writer = match sink {
        Sink::Collector { addr, spool } => {
            match TcpStream::connect_timeout(&addr, Duration::from_secs(2)) {
                Ok(s) => {
                    let _ = s.set_nodelay(true);
                    spool_path = Some(spool);
                    Writer::Tcp(BufWriter::new(s))
                }
                Err(e) => {
                    log::warn!("collector {addr} unreachable ({e}); spooling to {}", spool.display());
                    spooled.store(true, Ordering::Relaxed);
                    spool_writer(&spool)
                }
            }
        }
        Sink::File(path) => spool_writer(&path),
        Sink::Memory(m) => Writer::Memory(m),
        Sink::Null => Writer::Null,
    };
    let mut fall_back = |writer: &mut Writer, rec: Option<EventRecord>| {
        if let Some(path) = spool_path.take() {
            log::warn!("collector connection lost; spooling to {}", path.display());
            spooled.store(true, Ordering::Relaxed);
            *writer = spool_writer(&path);
            if let Some(r) = rec {
                let _ = writer.write(r);
            }
        }
    };
    for msg in rx {
        match msg {
            Msg::Record(r) => {
                let backup = matches!(writer, Writer::Tcp(_)).then(|| r.clone());
                if writer.write(r).is_err() {
                    fall_back(&mut writer, backup);
                }
            }
            Msg::Flush(ack) => {
                if writer.flush().is_err() {
                    fall_back(&mut writer, None);
                }
                let _ = ack.send(());
            }
        }
    }
    if writer.flush().is_err() {
        fall_back(&mut writer, None);
        let _ = writer.flush();
    }
}

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::{EventLogError, EventRecord};

const IDLE_POLL: Duration = Duration::from_millis(50);

/// Summary returned when a collector shuts down.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CollectSummary {
    pub records: u64,
    pub rejected_lines: u64,
    pub connections: u64,
    pub out: PathBuf,
}

struct Shared {
    out: Mutex<BufWriter<File>>,
    stop: AtomicBool,
    failed: Mutex<Option<String>>,
    records: AtomicU64,
    rejected: AtomicU64,
    connections: AtomicU64,
}

impl Shared {
    /// Pushes buffered lines to the file, so a killed daemon loses at most
    /// the chunk being parsed.
    fn flush(&self) -> bool {
        match self.out.lock().unwrap().flush() {
            Ok(()) => true,
            Err(e) => {
                *self.failed.lock().unwrap() = Some(e.to_string());
                self.stop.store(true, Ordering::SeqCst);
                false
            }
        }
    }

    fn append(&self, line: &str) -> bool {
        if self.failed.lock().unwrap().is_some() {
            return false;
        }
        let mut out = self.out.lock().unwrap();
        // One write call per line keeps lines whole.
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        match out.write_all(&buf) {
            Ok(()) => {
                self.records.fetch_add(1, Ordering::Relaxed);
                true
            }
            Err(e) => {
                *self.failed.lock().unwrap() = Some(e.to_string());
                self.stop.store(true, Ordering::SeqCst);
                false
            }
        }
    }
}

/// Event collector daemon: accepts newline-delimited records from any
/// number of emitters and appends them to one log in arrival order.
pub struct Collector {
    addr: SocketAddr,
    out: PathBuf,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<Vec<JoinHandle<()>>>>,
}

impl Collector {
    pub fn bind(addr: impl ToSocketAddrs, out: &Path) -> Result<Collector, EventLogError> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        if let Some(dir) = out.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(out)?;
        let shared = Arc::new(Shared {
            out: Mutex::new(BufWriter::new(file)),
            stop: AtomicBool::new(false),
            failed: Mutex::new(None),
            records: AtomicU64::new(0),
            rejected: AtomicU64::new(0),
            connections: AtomicU64::new(0),
        });
        let sh = shared.clone();
        let accept = std::thread::Builder::new()
            .name("evlogd-accept".into())
            .spawn(move || accept_loop(listener, sh))?;
        Ok(Collector {
            addr,
            out: out.to_path_buf(),
            shared,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn records_so_far(&self) -> u64 {
        self.shared.records.load(Ordering::Relaxed)
    }

    /// Stops accepting, drains open connections until they go idle, and
    /// flushes the log.
    pub fn shutdown(mut self) -> Result<CollectSummary, EventLogError> {
        self.stop_and_join();
        self.shared.out.lock().unwrap().flush()?;
        if let Some(err) = self.shared.failed.lock().unwrap().clone() {
            return Err(EventLogError::CollectorFailed(err));
        }
        Ok(CollectSummary {
            records: self.shared.records.load(Ordering::Relaxed),
            rejected_lines: self.shared.rejected.load(Ordering::Relaxed),
            connections: self.shared.connections.load(Ordering::Relaxed),
            out: self.out.clone(),
        })
    }

    fn stop_and_join(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.accept.take() {
            if let Ok(conns) = h.join() {
                for c in conns {
                    let _ = c.join();
                }
            }
        }
    }
}

impl Drop for Collector {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_and_join();
            let _ = self.shared.out.lock().unwrap().flush();
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) -> Vec<JoinHandle<()>> {
    let mut conns = Vec::new();
    for stream in listener.incoming() {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        shared.connections.fetch_add(1, Ordering::Relaxed);
        let sh = shared.clone();
        if let Ok(h) = std::thread::Builder::new()
            .name("evlogd-conn".into())
            .spawn(move || serve(stream, sh))
        {
            conns.push(h);
        }
    }
    conns
}

fn serve(mut stream: TcpStream, shared: Arc<Shared>) {
    let _ = stream.set_read_timeout(Some(IDLE_POLL));
    let mut pending: Vec<u8> = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        match stream.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => {
                pending.extend_from_slice(&buf[..n]);
                while let Some(pos) = pending.iter().position(|&b| b == b'\n') {
                    let line: Vec<u8> = pending.drain(..=pos).collect();
                    let line = String::from_utf8_lossy(&line[..line.len() - 1]);
                    let line = line.trim_end_matches('\r');
                    if line.trim().is_empty() {
                        continue;
                    }
                    if EventRecord::parse_line(line).is_err() {
                        shared.rejected.fetch_add(1, Ordering::Relaxed);
                        continue;
                    }
                    if !shared.append(line) {
                        return;
                    }
                }
                if !shared.flush() {
                    return;
                }
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                if shared.stop.load(Ordering::SeqCst) {
                    break;
                }
            }
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(_) => break,
        }
    }
    if !pending.is_empty() {
        shared.rejected.fetch_add(1, Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::{read_log, Emitter, Sink};

    #[test]
    fn three_emitters_thirty_records() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run.log");
        let c = Collector::bind("127.0.0.1:0", &out).unwrap();
        let addr = c.local_addr();
        let emitters: Vec<Emitter> = (0..3)
            .map(|i| {
                Emitter::new(
                    format!("h{i}"),
                    "p",
                    Sink::Collector { addr, spool: dir.path().join(format!("spool{i}")) },
                )
            })
            .collect();
        for (i, e) in emitters.iter().enumerate() {
            for f in 0..10 {
                e.emit("T", f, i as i32);
            }
        }
        for e in &emitters {
            assert!(!e.finish().spooled);
        }
        let summary = c.shutdown().unwrap();
        assert_eq!(summary.records, 30);
        assert_eq!(read_log(&out).unwrap().len(), 30);
    }

    #[test]
    fn empty_session_gives_empty_valid_log() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("empty.log");
        let c = Collector::bind("127.0.0.1:0", &out).unwrap();
        let s = c.shutdown().unwrap();
        assert_eq!(s.records, 0);
        assert!(read_log(&out).unwrap().is_empty());
    }

    #[test]
    fn concurrent_emitters_lines_stay_whole() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("c.log");
        let c = Collector::bind("127.0.0.1:0", &out).unwrap();
        let addr = c.local_addr();
        std::thread::scope(|s| {
            for i in 0..8 {
                let spool = dir.path().join(format!("s{i}"));
                s.spawn(move || {
                    let e = Emitter::new("h", format!("prog{i}"), Sink::Collector { addr, spool });
                    let pad = "x".repeat(300);
                    for f in 0..200 {
                        e.emit_with("T", f, i, vec![("pad".into(), pad.clone())]);
                    }
                    e.finish();
                });
            }
        });
        let s = c.shutdown().unwrap();
        assert_eq!(s.records, 1600);
        assert_eq!(s.rejected_lines, 0);
        let recs = read_log(&out).unwrap();
        assert_eq!(recs.len(), 1600);
        for i in 0..8 {
            let frames: Vec<u32> = recs
                .iter()
                .filter(|r| r.program == format!("prog{i}"))
                .map(|r| r.frame)
                .collect();
            assert_eq!(frames, (0..200).collect::<Vec<_>>());
        }
    }

    #[test]
    fn malformed_lines_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("m.log");
        let c = Collector::bind("127.0.0.1:0", &out).unwrap();
        let mut s = TcpStream::connect(c.local_addr()).unwrap();
        s.write_all(b"not a record\nts=1 host=a prog=b tag=T frame=0 worker=0\n").unwrap();
        drop(s);
        std::thread::sleep(Duration::from_millis(100));
        let sum = c.shutdown().unwrap();
        assert_eq!(sum.records, 1);
        assert_eq!(sum.rejected_lines, 1);
    }
}

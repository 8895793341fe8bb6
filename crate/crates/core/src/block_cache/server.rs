use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::wire::{self, error_code, MsgType, RequestHeader};
use super::DatasetEntry;

const IDLE_POLL: Duration = Duration::from_millis(50);
const CATALOG_FILE: &str = "catalog";

/// Block storage backend for one server.
#[derive(Debug, Clone)]
pub enum Storage {
    Memory,
    /// Blocks as `<dir>/<dataset_id>/<block>.blk`, catalog in `<dir>/catalog`.
    Dir(PathBuf),
}

/// Fault and latency injection for tests.
#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    /// Sleep before sending each block response.
    pub response_delay: Duration,
    /// Drop the connection once this many blocks have been served in total.
    pub fail_after_blocks: Option<u64>,
}

/// One received request as seen by the server.
#[derive(Debug, Clone)]
pub struct AccessRecord {
    pub at: Instant,
    pub msg_type: MsgType,
    pub dataset_id: u32,
    pub block_index: u64,
    pub count: u32,
    /// Blocks actually returned for a block-get.
    pub blocks_served: Vec<u64>,
}

type BlockMap = HashMap<(u32, u64), Arc<Vec<u8>>>;

struct Shared {
    storage: Storage,
    blocks: RwLock<BlockMap>,
    catalog: RwLock<HashMap<String, DatasetEntry>>,
    access: Mutex<Vec<AccessRecord>>,
    options: ServerOptions,
    served: AtomicU64,
    stop: AtomicBool,
}

impl Shared {
    fn entry_by_id(&self, id: u32) -> Option<DatasetEntry> {
        self.catalog.read().unwrap().values().find(|e| e.dataset_id == id).cloned()
    }

    fn get_block(&self, id: u32, b: u64) -> io::Result<Option<Arc<Vec<u8>>>> {
        if let Some(v) = self.blocks.read().unwrap().get(&(id, b)) {
            return Ok(Some(v.clone()));
        }
        match &self.storage {
            Storage::Memory => Ok(None),
            Storage::Dir(dir) => match std::fs::read(block_path(dir, id, b)) {
                Ok(v) => Ok(Some(Arc::new(v))),
                Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e),
            },
        }
    }

    fn put_block(&self, id: u32, b: u64, data: Vec<u8>) -> io::Result<()> {
        match &self.storage {
            Storage::Memory => {
                self.blocks.write().unwrap().insert((id, b), Arc::new(data));
            }
            Storage::Dir(dir) => {
                let p = block_path(dir, id, b);
                std::fs::create_dir_all(p.parent().unwrap())?;
                std::fs::write(p, data)?;
            }
        }
        Ok(())
    }

    fn persist_catalog(&self) -> io::Result<()> {
        let Storage::Dir(dir) = &self.storage else { return Ok(()) };
        let cat = self.catalog.read().unwrap();
        let mut out = Vec::new();
        for e in cat.values() {
            let enc = e.encode();
            out.extend_from_slice(&(enc.len() as u32).to_be_bytes());
            out.extend_from_slice(&enc);
        }
        let tmp = dir.join(format!("{CATALOG_FILE}.tmp"));
        std::fs::write(&tmp, out)?;
        std::fs::rename(tmp, dir.join(CATALOG_FILE))
    }
}

fn block_path(dir: &Path, id: u32, b: u64) -> PathBuf {
    dir.join(format!("{id:08x}")).join(format!("{b}.blk"))
}

fn load_catalog(dir: &Path) -> io::Result<HashMap<String, DatasetEntry>> {
    let mut cat = HashMap::new();
    let bytes = match std::fs::read(dir.join(CATALOG_FILE)) {
        Ok(b) => b,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(cat),
        Err(e) => return Err(e),
    };
    let mut rest = &bytes[..];
    while rest.len() >= 4 {
        let n = u32::from_be_bytes(rest[..4].try_into().unwrap()) as usize;
        let body = rest.get(4..4 + n).ok_or_else(|| wire::invalid("truncated catalog".into()))?;
        let e = DatasetEntry::decode(body)?;
        cat.insert(e.name.clone(), e);
        rest = &rest[4 + n..];
    }
    Ok(cat)
}

/// A running block server. Dropping it (or calling [`CacheServer::shutdown`])
/// closes the listener and all connections.
pub struct CacheServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<Vec<JoinHandle<()>>>>,
}

impl CacheServer {
    pub fn spawn(addr: impl ToSocketAddrs, storage: Storage) -> io::Result<CacheServer> {
        CacheServer::spawn_with(addr, storage, ServerOptions::default())
    }

    pub fn spawn_with(addr: impl ToSocketAddrs, storage: Storage, options: ServerOptions) -> io::Result<CacheServer> {
        let catalog = match &storage {
            Storage::Memory => HashMap::new(),
            Storage::Dir(dir) => {
                std::fs::create_dir_all(dir)?;
                load_catalog(dir)?
            }
        };
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            storage,
            blocks: RwLock::new(HashMap::new()),
            catalog: RwLock::new(catalog),
            access: Mutex::new(Vec::new()),
            options,
            served: AtomicU64::new(0),
            stop: AtomicBool::new(false),
        });
        let sh = shared.clone();
        let accept = std::thread::Builder::new()
            .name(format!("cached-{}", addr.port()))
            .spawn(move || accept_loop(listener, sh))?;
        Ok(CacheServer { addr, shared, accept: Some(accept) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn access_log(&self) -> Vec<AccessRecord> {
        self.shared.access.lock().unwrap().clone()
    }

    pub fn clear_access_log(&self) {
        self.shared.access.lock().unwrap().clear();
    }

    pub fn catalog(&self) -> Vec<DatasetEntry> {
        self.shared.catalog.read().unwrap().values().cloned().collect()
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Blocks until the server is stopped by another thread or process
    /// signal; used by the daemon entry point.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            if let Ok(conns) = h.join() {
                conns.into_iter().for_each(|c| drop(c.join()));
            }
        }
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.accept.take() {
            if let Ok(conns) = h.join() {
                conns.into_iter().for_each(|c| drop(c.join()));
            }
        }
    }
}

impl Drop for CacheServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) -> Vec<JoinHandle<()>> {
    let mut conns: Vec<JoinHandle<()>> = Vec::new();
    for stream in listener.incoming() {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        conns.retain(|h| !h.is_finished());
        let sh = shared.clone();
        if let Ok(h) = std::thread::Builder::new().name("cached-conn".into()).spawn(move || {
            if let Err(e) = serve(stream, &sh) {
                log::debug!("cache connection closed: {e}");
            }
        }) {
            conns.push(h);
        }
    }
    conns
}

/// Reads exactly `buf.len()` bytes, tolerating idle timeouts between
/// requests but not inside one.
fn read_header(r: &mut impl Read, buf: &mut [u8], stop: &AtomicBool) -> io::Result<bool> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                if stop.load(Ordering::SeqCst) {
                    return Ok(false);
                }
            }
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

fn read_body(r: &mut impl Read, buf: &mut [u8]) -> io::Result<()> {
    let mut got = 0;
    let deadline = Instant::now() + Duration::from_secs(30);
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => return Err(ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {
                if Instant::now() > deadline {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn serve(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_read_timeout(Some(IDLE_POLL))?;
    let _ = stream.set_nodelay(true);
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut head = [0u8; wire::REQUEST_HEADER_LEN];
    loop {
        writer.flush()?;
        if !read_header(&mut reader, &mut head, &shared.stop)? {
            return Ok(());
        }
        let req = match RequestHeader::decode(&head) {
            Ok(r) => r,
            Err(e) => {
                wire::write_error(&mut writer, error_code::BAD_REQUEST, &e.to_string())?;
                writer.flush()?;
                return Err(e);
            }
        };
        let mut record = AccessRecord {
            at: Instant::now(),
            msg_type: req.msg_type,
            dataset_id: req.dataset_id,
            block_index: req.block_index,
            count: req.count,
            blocks_served: Vec::new(),
        };
        let result = handle(&req, &mut reader, &mut writer, shared, &mut record);
        shared.access.lock().unwrap().push(record);
        result?;
    }
}

fn handle(
    req: &RequestHeader,
    reader: &mut impl Read,
    writer: &mut impl Write,
    shared: &Shared,
    record: &mut AccessRecord,
) -> io::Result<()> {
    match req.msg_type {
        MsgType::CatalogLookup => {
            let mut len = [0u8; 2];
            read_body(reader, &mut len)?;
            let mut name = vec![0u8; u16::from_be_bytes(len) as usize];
            read_body(reader, &mut name)?;
            let name = String::from_utf8_lossy(&name).into_owned();
            match shared.catalog.read().unwrap().get(&name) {
                Some(e) => wire::write_response(writer, MsgType::CatalogLookup, 0, &e.encode()),
                None => wire::write_error(writer, error_code::NOT_FOUND, &name),
            }
        }
        MsgType::BlockGet => {
            let Some(entry) = shared.entry_by_id(req.dataset_id) else {
                return wire::write_error(writer, error_code::NOT_FOUND, &format!("dataset {:#x}", req.dataset_id));
            };
            let stride = entry.stripe_count as u64;
            for i in 0..req.count as u64 {
                let b = req.block_index + i * stride;
                if let Some(limit) = shared.options.fail_after_blocks {
                    if shared.served.load(Ordering::SeqCst) >= limit {
                        writer.flush()?;
                        return Err(io::Error::new(ErrorKind::ConnectionAborted, "injected failure"));
                    }
                }
                if !shared.options.response_delay.is_zero() {
                    writer.flush()?;
                    std::thread::sleep(shared.options.response_delay);
                }
                match shared.get_block(req.dataset_id, b) {
                    Ok(Some(data)) => {
                        wire::write_response(writer, MsgType::BlockGet, b, &data)?;
                        shared.served.fetch_add(1, Ordering::SeqCst);
                        record.blocks_served.push(b);
                    }
                    Ok(None) => {
                        return wire::write_error(writer, error_code::MISSING_BLOCK, &format!("block {b}"));
                    }
                    Err(e) => return wire::write_error(writer, error_code::STORAGE, &e.to_string()),
                }
            }
            Ok(())
        }
        MsgType::IngestPut => {
            if req.count > wire::MAX_PAYLOAD {
                return wire::write_error(writer, error_code::BAD_REQUEST, "block too large");
            }
            let mut data = vec![0u8; req.count as usize];
            read_body(reader, &mut data)?;
            match shared.put_block(req.dataset_id, req.block_index, data) {
                Ok(()) => wire::write_response(writer, MsgType::IngestPut, req.block_index, &[]),
                Err(e) => wire::write_error(writer, error_code::STORAGE, &e.to_string()),
            }
        }
        MsgType::CatalogCommit => {
            if req.count > wire::MAX_PAYLOAD {
                return wire::write_error(writer, error_code::BAD_REQUEST, "entry too large");
            }
            let mut body = vec![0u8; req.count as usize];
            read_body(reader, &mut body)?;
            let entry = match DatasetEntry::decode(&body) {
                Ok(e) => e,
                Err(e) => return wire::write_error(writer, error_code::BAD_REQUEST, &e.to_string()),
            };
            shared.catalog.write().unwrap().insert(entry.name.clone(), entry);
            match shared.persist_catalog() {
                Ok(()) => wire::write_response(writer, MsgType::CatalogCommit, 0, &[]),
                Err(e) => wire::write_error(writer, error_code::STORAGE, &e.to_string()),
            }
        }
        MsgType::CatalogDrop => {
            shared.catalog.write().unwrap().retain(|_, e| e.dataset_id != req.dataset_id);
            let _ = shared.persist_catalog();
            wire::write_response(writer, MsgType::CatalogDrop, 0, &[])
        }
        MsgType::Error => wire::write_error(writer, error_code::BAD_REQUEST, "unexpected message type"),
    }
}

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::wire::{self, MsgType, RequestHeader, ResponseHeader};
use super::{CacheError, DatasetEntry, StoreConfig};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const IO_TIMEOUT: Duration = Duration::from_secs(30);

struct Conn {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Conn {
    fn open(server: usize, addr: &str) -> Result<Conn, CacheError> {
        let unreachable = |source: io::Error| CacheError::Unreachable { server, addr: addr.to_string(), source };
        let sock = addr
            .to_socket_addrs()
            .map_err(unreachable)?
            .next()
            .ok_or_else(|| unreachable(io::Error::new(io::ErrorKind::NotFound, "no address")))?;
        let s = TcpStream::connect_timeout(&sock, CONNECT_TIMEOUT).map_err(unreachable)?;
        s.set_nodelay(true)?;
        s.set_read_timeout(Some(IO_TIMEOUT))?;
        s.set_write_timeout(Some(IO_TIMEOUT))?;
        Ok(Conn {
            reader: BufReader::with_capacity(256 * 1024, s.try_clone()?),
            writer: BufWriter::new(s),
        })
    }

    fn send(&mut self, head: RequestHeader, body: &[u8]) -> io::Result<()> {
        self.writer.write_all(&head.encode())?;
        self.writer.write_all(body)
    }

    /// Reads one response, turning error frames into `Err`.
    fn recv(&mut self) -> io::Result<Reply> {
        let head = ResponseHeader::read_from(&mut self.reader)?;
        let mut payload = vec![0u8; head.payload_len as usize];
        self.reader.read_exact(&mut payload)?;
        if head.msg_type == MsgType::Error {
            let code = payload.first().copied().unwrap_or(0);
            let msg = String::from_utf8_lossy(payload.get(1..).unwrap_or_default()).into_owned();
            return Ok(Err((code, msg)));
        }
        Ok(Ok((head, payload)))
    }

    fn call(&mut self, head: RequestHeader, body: &[u8]) -> io::Result<Reply> {
        self.send(head, body)?;
        self.writer.flush()?;
        self.recv()
    }
}

/// Entry point for talking to a striped store.
/// A response, or the server's error code and message.
type Reply = Result<(ResponseHeader, Vec<u8>), (u8, String)>;

#[derive(Debug, Clone)]
pub struct CacheClient {
    config: StoreConfig,
}

impl CacheClient {
    pub fn new(config: StoreConfig) -> Result<Self, CacheError> {
        config.validate()?;
        Ok(CacheClient { config })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    fn transfer(&self, server: usize, reason: impl ToString) -> CacheError {
        CacheError::Transfer {
            server,
            addr: self.config.servers[server].clone(),
            reason: reason.to_string(),
        }
    }

    fn connect_all(&self) -> Result<Vec<Conn>, CacheError> {
        self.config
            .servers
            .iter()
            .enumerate()
            .map(|(i, a)| Conn::open(i, a))
            .collect()
    }

    /// Stripes `source` over the servers and publishes the catalog entry on
    /// every server. Nothing is published unless all blocks are stored and
    /// every server accepts the entry.
    pub fn ingest(&self, name: &str, mut source: impl Read) -> Result<DatasetEntry, CacheError> {
        let mut conns = self.connect_all()?;
        let bs = self.config.block_size as usize;
        let id = wire::dataset_id(name);
        let s = conns.len();
        let mut total = 0u64;
        let mut block = 0u64;
        let mut buf = vec![0u8; bs];
        loop {
            let n = read_full(&mut source, &mut buf)?;
            if n == 0 {
                break;
            }
            buf[n..].fill(0);
            total += n as u64;
            let server = (block % s as u64) as usize;
            let head = RequestHeader {
                msg_type: MsgType::IngestPut,
                dataset_id: id,
                block_index: block,
                count: bs as u32,
            };
            match conns[server].call(head, &buf) {
                Ok(Ok(_)) => {}
                Ok(Err((_, msg))) => return Err(self.transfer(server, msg)),
                Err(e) => return Err(self.transfer(server, e)),
            }
            block += 1;
            if n < bs {
                break;
            }
        }
        let entry = DatasetEntry::new(name, total, self.config.block_size, s as u32);
        let body = entry.encode();
        let commit = RequestHeader {
            msg_type: MsgType::CatalogCommit,
            dataset_id: id,
            block_index: 0,
            count: body.len() as u32,
        };
        for i in 0..s {
            let failure = match conns[i].call(commit, &body) {
                Ok(Ok(_)) => continue,
                Ok(Err((_, msg))) => self.transfer(i, msg),
                Err(e) => self.transfer(i, e),
            };
            let drop_req = RequestHeader { msg_type: MsgType::CatalogDrop, dataset_id: id, block_index: 0, count: 0 };
            for c in conns.iter_mut().take(i) {
                let _ = c.call(drop_req, &[]);
            }
            return Err(failure);
        }
        Ok(entry)
    }

    pub fn ingest_bytes(&self, name: &str, data: &[u8]) -> Result<DatasetEntry, CacheError> {
        self.ingest(name, data)
    }

    /// Looks `name` up in server 0's catalog.
    pub fn lookup(&self, name: &str) -> Result<DatasetEntry, CacheError> {
        let mut c = Conn::open(0, &self.config.servers[0])?;
        let mut body = Vec::new();
        wire::encode_name(name, &mut body);
        let head = RequestHeader { msg_type: MsgType::CatalogLookup, dataset_id: 0, block_index: 0, count: 0 };
        match c.call(head, &body).map_err(|e| self.transfer(0, e))? {
            Ok((_, payload)) => Ok(DatasetEntry::decode(&payload)?),
            Err((wire::error_code::NOT_FOUND, _)) => Err(CacheError::NotFound(name.to_string())),
            Err((_, msg)) => Err(CacheError::Server(msg)),
        }
    }

    pub fn open(&self, name: &str) -> Result<CacheHandle, CacheError> {
        let entry = self.lookup(name)?;
        if entry.stripe_count as usize != self.config.stripe_count() {
            return Err(CacheError::Config(format!(
                "dataset {name:?} is striped over {} servers, client has {}",
                entry.stripe_count,
                self.config.stripe_count()
            )));
        }
        Ok(CacheHandle {
            client: self.clone(),
            conns: (0..self.config.stripe_count()).map(|_| None).collect(),
            entry,
            cursor: 0,
            closed: false,
        })
    }

    /// Reads a whole dataset.
    pub fn fetch(&self, name: &str) -> Result<Vec<u8>, CacheError> {
        let mut h = self.open(name)?;
        let n = h.entry().total_bytes as usize;
        let out = h.read(0, n);
        h.close();
        out
    }
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// An open dataset with a byte cursor. Not shareable between threads; each
/// worker opens its own handle.
pub struct CacheHandle {
    client: CacheClient,
    conns: Vec<Option<Conn>>,
    entry: DatasetEntry,
    cursor: u64,
    closed: bool,
}

impl std::fmt::Debug for CacheHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CacheHandle")
            .field("entry", &self.entry)
            .field("cursor", &self.cursor)
            .field("closed", &self.closed)
            .finish()
    }
}

impl CacheHandle {
    pub fn entry(&self) -> &DatasetEntry {
        &self.entry
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn seek(&mut self, offset: i64) -> Result<u64, CacheError> {
        if self.closed {
            return Err(CacheError::InvalidHandle);
        }
        if offset < 0 || offset as u64 > self.entry.total_bytes {
            return Err(CacheError::OutOfRange { offset: offset as i128, length: 0, total: self.entry.total_bytes });
        }
        self.cursor = offset as u64;
        Ok(self.cursor)
    }

    /// Reads at the cursor and advances it.
    pub fn read_next(&mut self, length: usize) -> Result<Vec<u8>, CacheError> {
        self.read(self.cursor, length)
    }

    /// Returns bytes `[offset, offset + length)`; the cursor ends at
    /// `offset + length`.
    pub fn read(&mut self, offset: u64, length: usize) -> Result<Vec<u8>, CacheError> {
        let mut v = self.read_many(&[(offset, length)])?;
        Ok(v.pop().unwrap())
    }

    /// Fetches several ranges with one concurrent fan-out: every block
    /// covered by any range is requested once, each server streaming its
    /// share over its own connection. The cursor ends after the last range.
    pub fn read_many(&mut self, ranges: &[(u64, usize)]) -> Result<Vec<Vec<u8>>, CacheError> {
        if self.closed {
            return Err(CacheError::InvalidHandle);
        }
        let total = self.entry.total_bytes;
        for &(offset, length) in ranges {
            if offset.checked_add(length as u64).is_none_or(|end| end > total) {
                return Err(CacheError::OutOfRange { offset: offset as i128, length: length as u64, total });
            }
        }
        let bs = self.entry.block_size as u64;
        let s = self.conns.len() as u64;
        let mut needed: Vec<u64> = ranges
            .iter()
            .filter(|r| r.1 > 0)
            .flat_map(|&(o, l)| o / bs..=(o + l as u64 - 1) / bs)
            .collect();
        needed.sort_unstable();
        needed.dedup();

        // Per server, runs of consecutive stripe-local blocks: (first, count).
        let mut plans: Vec<Vec<(u64, u32)>> = vec![Vec::new(); s as usize];
        for &b in &needed {
            let plan = &mut plans[(b % s) as usize];
            match plan.last_mut() {
                Some((first, count)) if *first + *count as u64 * s == b => *count += 1,
                _ => plan.push((b, 1)),
            }
        }

        let blocks = self.fetch_blocks(&plans)?;
        if let Some(&b) = needed.iter().find(|b| !blocks.contains_key(b)) {
            return Err(self.client.transfer((b % s) as usize, format!("block {b} missing from response")));
        }
        let out = ranges
            .iter()
            .map(|&(offset, length)| {
                let mut buf = Vec::with_capacity(length);
                let mut pos = offset;
                let end = offset + length as u64;
                while pos < end {
                    let b = pos / bs;
                    let within = (pos % bs) as usize;
                    let take = ((bs - within as u64).min(end - pos)) as usize;
                    buf.extend_from_slice(&blocks[&b][within..within + take]);
                    pos += take as u64;
                }
                buf
            })
            .collect();
        if let Some(&(o, l)) = ranges.last() {
            self.cursor = o + l as u64;
        }
        Ok(out)
    }

    fn fetch_blocks(&mut self, plans: &[Vec<(u64, u32)>]) -> Result<HashMap<u64, Vec<u8>>, CacheError> {
        let id = self.entry.dataset_id;
        let bs = self.entry.block_size as usize;
        let client = &self.client;
        let results: Vec<Result<Vec<(u64, Vec<u8>)>, CacheError>> = std::thread::scope(|scope| {
            let tasks: Vec<_> = self
                .conns
                .iter_mut()
                .enumerate()
                .zip(plans)
                .filter(|(_, plan)| !plan.is_empty())
                .map(|((server, slot), plan)| {
                    scope.spawn(move || {
                        let r = fetch_from(client, server, slot, id, bs, plan);
                        if r.is_err() {
                            *slot = None;
                        }
                        r
                    })
                })
                .collect();
            tasks.into_iter().map(|t| t.join().expect("fetch thread panicked")).collect()
        });
        let mut map = HashMap::new();
        for r in results {
            for (b, data) in r? {
                map.insert(b, data);
            }
        }
        Ok(map)
    }

    /// Releases connections; later operations fail with `InvalidHandle`.
    pub fn close(&mut self) {
        self.conns.iter_mut().for_each(|c| *c = None);
        self.closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }
}

fn fetch_from(
    client: &CacheClient,
    server: usize,
    slot: &mut Option<Conn>,
    id: u32,
    block_size: usize,
    plan: &[(u64, u32)],
) -> Result<Vec<(u64, Vec<u8>)>, CacheError> {
    if slot.is_none() {
        *slot = Some(Conn::open(server, &client.config.servers[server])?);
    }
    let conn = slot.as_mut().unwrap();
    let io_err = |e: io::Error| client.transfer(server, e);
    for &(first, count) in plan {
        let head = RequestHeader { msg_type: MsgType::BlockGet, dataset_id: id, block_index: first, count };
        conn.send(head, &[]).map_err(io_err)?;
    }
    conn.writer.flush().map_err(io_err)?;
    let expected: u64 = plan.iter().map(|p| p.1 as u64).sum();
    let mut out = Vec::with_capacity(expected as usize);
    for _ in 0..expected {
        match conn.recv().map_err(io_err)? {
            Ok((head, payload)) => {
                if head.msg_type != MsgType::BlockGet || payload.len() != block_size {
                    return Err(client.transfer(server, format!("unexpected response for block {}", head.block_index)));
                }
                out.push((head.block_index, payload));
            }
            Err((_, msg)) => return Err(client.transfer(server, msg)),
        }
    }
    Ok(out)
}

//! Striped network block cache: a block server daemon and a parallel
//! client with open/read/seek/close semantics over `S` servers.
//!
//! Block `b` of every dataset lives on server `b mod S`. Each server keeps a
//! full copy of the catalog. The client reads through one connection per
//! server, driving all of them concurrently within a single read.

mod client;
mod server;
pub mod wire;

pub use client::{CacheClient, CacheHandle};
pub use server::{AccessRecord, CacheServer, ServerOptions, Storage};

use std::io;

pub const DEFAULT_BLOCK_SIZE: u32 = 64 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("dataset {0:?} not found")]
    NotFound(String),
    #[error("range {offset}+{length} is outside dataset of {total} bytes")]
    OutOfRange { offset: i128, length: u64, total: u64 },
    #[error("handle is closed")]
    InvalidHandle,
    #[error("server {server} ({addr}) unreachable: {source}")]
    Unreachable {
        server: usize,
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error("transfer from server {server} ({addr}) failed: {reason}")]
    Transfer { server: usize, addr: String, reason: String },
    #[error("invalid store configuration: {0}")]
    Config(String),
    #[error("server error: {0}")]
    Server(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The ordered server set and block granularity of one deployment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreConfig {
    /// `host:port` endpoints; order defines block placement.
    pub servers: Vec<String>,
    pub block_size: u32,
}

impl StoreConfig {
    pub fn new(servers: Vec<String>, block_size: u32) -> Result<Self, CacheError> {
        let c = StoreConfig { servers, block_size };
        c.validate()?;
        Ok(c)
    }

    /// Parses a comma-separated endpoint list with the default block size.
    pub fn parse_servers(list: &str) -> Result<Self, CacheError> {
        StoreConfig::new(
            list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
            DEFAULT_BLOCK_SIZE,
        )
    }

    pub fn validate(&self) -> Result<(), CacheError> {
        if self.servers.is_empty() {
            return Err(CacheError::Config("no servers".into()));
        }
        if self.block_size == 0 {
            return Err(CacheError::Config("block_size must be positive".into()));
        }
        Ok(())
    }

    pub fn stripe_count(&self) -> usize {
        self.servers.len()
    }

    /// Index of the server holding block `b`.
    pub fn server_for_block(&self, b: u64) -> usize {
        (b % self.servers.len() as u64) as usize
    }
}

/// Catalog entry for one ingested dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub dataset_id: u32,
    pub name: String,
    pub total_bytes: u64,
    pub block_count: u64,
    pub block_size: u32,
    /// Number of servers the dataset is striped over.
    pub stripe_count: u32,
}

impl DatasetEntry {
    pub fn new(name: &str, total_bytes: u64, block_size: u32, stripe_count: u32) -> Self {
        DatasetEntry {
            dataset_id: wire::dataset_id(name),
            name: name.to_string(),
            total_bytes,
            block_count: total_bytes.div_ceil(block_size as u64),
            block_size,
            stripe_count,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(32 + self.name.len());
        b.extend_from_slice(&self.dataset_id.to_be_bytes());
        b.extend_from_slice(&self.total_bytes.to_be_bytes());
        b.extend_from_slice(&self.block_count.to_be_bytes());
        b.extend_from_slice(&self.block_size.to_be_bytes());
        b.extend_from_slice(&self.stripe_count.to_be_bytes());
        wire::encode_name(&self.name, &mut b);
        b
    }

    pub fn decode(mut b: &[u8]) -> io::Result<Self> {
        use io::Read;
        let mut u4 = [0u8; 4];
        let mut u8_ = [0u8; 8];
        let r = &mut b;
        r.read_exact(&mut u4)?;
        let dataset_id = u32::from_be_bytes(u4);
        r.read_exact(&mut u8_)?;
        let total_bytes = u64::from_be_bytes(u8_);
        r.read_exact(&mut u8_)?;
        let block_count = u64::from_be_bytes(u8_);
        r.read_exact(&mut u4)?;
        let block_size = u32::from_be_bytes(u4);
        r.read_exact(&mut u4)?;
        let stripe_count = u32::from_be_bytes(u4);
        let name = wire::read_name(r)?;
        if block_size == 0 || stripe_count == 0 || block_count != total_bytes.div_ceil(block_size as u64) {
            return Err(wire::invalid("inconsistent catalog entry".into()));
        }
        Ok(DatasetEntry { dataset_id, name, total_bytes, block_count, block_size, stripe_count })
    }
}

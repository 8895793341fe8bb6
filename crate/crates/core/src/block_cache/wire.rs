//! Binary, big-endian block-cache protocol.
//!
//! Request: `magic u16 | msg_type u8 | dataset_id u32 | block_index u64 | count u32`
//! followed by a type-specific body. Response: `magic u16 | msg_type u8 |
//! block_index u64 | payload_len u32 | payload`.

use std::io::{self, Read, Write};

pub const MAGIC: u16 = 0xD5B1;
pub const REQUEST_HEADER_LEN: usize = 19;
pub const RESPONSE_HEADER_LEN: usize = 15;
/// Upper bound on any single payload; guards against garbage lengths.
pub const MAX_PAYLOAD: u32 = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    CatalogLookup = 1,
    BlockGet = 2,
    IngestPut = 3,
    /// Publishes a catalog entry once all of its blocks are stored.
    CatalogCommit = 4,
    /// Withdraws a catalog entry after a failed commit elsewhere.
    CatalogDrop = 5,
    Error = 0xFF,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Option<MsgType> {
        Some(match v {
            1 => MsgType::CatalogLookup,
            2 => MsgType::BlockGet,
            3 => MsgType::IngestPut,
            4 => MsgType::CatalogCommit,
            5 => MsgType::CatalogDrop,
            0xFF => MsgType::Error,
            _ => return None,
        })
    }
}

/// Error codes carried in the first byte of an error response payload.
pub mod error_code {
    pub const NOT_FOUND: u8 = 1;
    pub const BAD_REQUEST: u8 = 2;
    pub const MISSING_BLOCK: u8 = 3;
    pub const STORAGE: u8 = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestHeader {
    pub msg_type: MsgType,
    pub dataset_id: u32,
    pub block_index: u64,
    pub count: u32,
}

impl RequestHeader {
    pub fn encode(&self) -> [u8; REQUEST_HEADER_LEN] {
        let mut b = [0u8; REQUEST_HEADER_LEN];
        b[0..2].copy_from_slice(&MAGIC.to_be_bytes());
        b[2] = self.msg_type as u8;
        b[3..7].copy_from_slice(&self.dataset_id.to_be_bytes());
        b[7..15].copy_from_slice(&self.block_index.to_be_bytes());
        b[15..19].copy_from_slice(&self.count.to_be_bytes());
        b
    }

    pub fn decode(b: &[u8; REQUEST_HEADER_LEN]) -> io::Result<Self> {
        check_magic(u16::from_be_bytes([b[0], b[1]]))?;
        Ok(RequestHeader {
            msg_type: MsgType::from_u8(b[2]).ok_or_else(|| invalid(format!("unknown msg_type {}", b[2])))?,
            dataset_id: u32::from_be_bytes(b[3..7].try_into().unwrap()),
            block_index: u64::from_be_bytes(b[7..15].try_into().unwrap()),
            count: u32::from_be_bytes(b[15..19].try_into().unwrap()),
        })
    }

    pub fn read_from(r: &mut impl Read) -> io::Result<Self> {
        let mut b = [0u8; REQUEST_HEADER_LEN];
        r.read_exact(&mut b)?;
        RequestHeader::decode(&b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResponseHeader {
    pub msg_type: MsgType,
    pub block_index: u64,
    pub payload_len: u32,
}

impl ResponseHeader {
    pub fn encode(&self) -> [u8; RESPONSE_HEADER_LEN] {
        let mut b = [0u8; RESPONSE_HEADER_LEN];
        b[0..2].copy_from_slice(&MAGIC.to_be_bytes());
        b[2] = self.msg_type as u8;
        b[3..11].copy_from_slice(&self.block_index.to_be_bytes());
        b[11..15].copy_from_slice(&self.payload_len.to_be_bytes());
        b
    }

    pub fn read_from(r: &mut impl Read) -> io::Result<Self> {
        let mut b = [0u8; RESPONSE_HEADER_LEN];
        r.read_exact(&mut b)?;
        check_magic(u16::from_be_bytes([b[0], b[1]]))?;
        let payload_len = u32::from_be_bytes(b[11..15].try_into().unwrap());
        if payload_len > MAX_PAYLOAD {
            return Err(invalid(format!("payload length {payload_len} too large")));
        }
        Ok(ResponseHeader {
            msg_type: MsgType::from_u8(b[2]).ok_or_else(|| invalid(format!("unknown msg_type {}", b[2])))?,
            block_index: u64::from_be_bytes(b[3..11].try_into().unwrap()),
            payload_len,
        })
    }
}

/// Writes a full response frame with a single `write_all`.
pub fn write_response(w: &mut impl Write, msg_type: MsgType, block_index: u64, payload: &[u8]) -> io::Result<()> {
    let head = ResponseHeader {
        msg_type,
        block_index,
        payload_len: payload.len() as u32,
    };
    let mut buf = Vec::with_capacity(RESPONSE_HEADER_LEN + payload.len());
    buf.extend_from_slice(&head.encode());
    buf.extend_from_slice(payload);
    w.write_all(&buf)
}

pub fn write_error(w: &mut impl Write, code: u8, message: &str) -> io::Result<()> {
    let mut p = vec![code];
    p.extend_from_slice(message.as_bytes());
    write_response(w, MsgType::Error, 0, &p)
}

/// Length-prefixed (u16) UTF-8 string.
pub fn encode_name(name: &str, out: &mut Vec<u8>) {
    out.extend_from_slice(&(name.len() as u16).to_be_bytes());
    out.extend_from_slice(name.as_bytes());
}

pub fn read_name(r: &mut impl Read) -> io::Result<String> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len)?;
    let mut buf = vec![0u8; u16::from_be_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| invalid("name is not UTF-8".into()))
}

fn check_magic(m: u16) -> io::Result<()> {
    if m != MAGIC {
        return Err(invalid(format!("bad magic {m:#06x}")));
    }
    Ok(())
}

pub(crate) fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

/// Stable 32-bit dataset identifier derived from the name (FNV-1a), so
/// every client and server agrees without coordination.
pub fn dataset_id(name: &str) -> u32 {
    name.bytes()
        .fold(0x811c_9dc5u32, |h, b| (h ^ b as u32).wrapping_mul(0x0100_0193))
}

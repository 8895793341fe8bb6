//! Back-end to viewer framing (binary, big-endian), one connection per
//! worker. Header: `magic u16 | msg_type u8 | worker u16 | frame u32 |
//! payload_len u64`, then the payload. Worker 0's connection also carries
//! axis feedback in the reverse direction.

use std::io::{self, Read, Write};

use crate::volume::Axis;

pub const MAGIC: u16 = 0x5649;
pub const HEADER_LEN: usize = 17;
pub const LIGHT_PAYLOAD_LEN: usize = 4 + 4 + 1 + 1 + 12 * 4;
pub const FEEDBACK_PAYLOAD_LEN: usize = 1 + 3 * 4;
/// Largest accepted payload.
pub const MAX_PAYLOAD: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameType {
    Light = 1,
    Heavy = 2,
    Feedback = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub msg_type: FrameType,
    pub worker: u16,
    pub frame: u32,
    pub payload_len: u64,
}

impl FrameHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..2].copy_from_slice(&MAGIC.to_be_bytes());
        b[2] = self.msg_type as u8;
        b[3..5].copy_from_slice(&self.worker.to_be_bytes());
        b[5..9].copy_from_slice(&self.frame.to_be_bytes());
        b[9..17].copy_from_slice(&self.payload_len.to_be_bytes());
        b
    }

    pub fn decode(b: &[u8; HEADER_LEN]) -> io::Result<Self> {
        let magic = u16::from_be_bytes([b[0], b[1]]);
        if magic != MAGIC {
            return Err(invalid(format!("bad magic {magic:#06x}")));
        }
        let msg_type = match b[2] {
            1 => FrameType::Light,
            2 => FrameType::Heavy,
            3 => FrameType::Feedback,
            t => return Err(invalid(format!("unknown msg_type {t}"))),
        };
        let payload_len = u64::from_be_bytes(b[9..17].try_into().unwrap());
        if payload_len > MAX_PAYLOAD {
            return Err(invalid(format!("payload length {payload_len} too large")));
        }
        Ok(FrameHeader {
            msg_type,
            worker: u16::from_be_bytes([b[3], b[4]]),
            frame: u32::from_be_bytes(b[5..9].try_into().unwrap()),
            payload_len,
        })
    }

    pub fn read_from(r: &mut impl Read) -> io::Result<Self> {
        let mut b = [0u8; HEADER_LEN];
        r.read_exact(&mut b)?;
        FrameHeader::decode(&b)
    }
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

/// Per-frame texture metadata plus the model-space quad it maps onto.
#[derive(Debug, Clone, PartialEq)]
pub struct LightPayload {
    pub frame: u32,
    pub width: u32,
    pub height: u32,
    pub bytes_per_pixel: u8,
    pub axis: Axis,
    /// Corners `c0, c1, c2, c3`: `c1 - c0` spans texture u, `c3 - c0` spans v.
    pub placement: [[f32; 3]; 4],
}

impl LightPayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(LIGHT_PAYLOAD_LEN);
        b.extend_from_slice(&self.width.to_be_bytes());
        b.extend_from_slice(&self.height.to_be_bytes());
        b.push(self.bytes_per_pixel);
        b.push(self.axis.to_u8());
        for c in self.placement.iter().flatten() {
            b.extend_from_slice(&c.to_be_bytes());
        }
        b
    }

    pub fn decode(frame: u32, b: &[u8]) -> io::Result<Self> {
        if b.len() != LIGHT_PAYLOAD_LEN {
            return Err(invalid(format!("light payload of {} bytes", b.len())));
        }
        let f = |i: usize| f32::from_be_bytes(b[10 + 4 * i..14 + 4 * i].try_into().unwrap());
        Ok(LightPayload {
            frame,
            width: u32::from_be_bytes(b[0..4].try_into().unwrap()),
            height: u32::from_be_bytes(b[4..8].try_into().unwrap()),
            bytes_per_pixel: b[8],
            axis: Axis::from_u8(b[9]).ok_or_else(|| invalid(format!("bad axis {}", b[9])))?,
            placement: std::array::from_fn(|c| std::array::from_fn(|k| f(3 * c + k))),
        })
    }

    pub fn pixel_bytes(&self) -> usize {
        self.width as usize * self.height as usize * self.bytes_per_pixel as usize
    }
}

/// Raw premultiplied RGBA8 texture plus the (always empty) geometry blob.
#[derive(Debug, Clone, PartialEq)]
pub struct HeavyPayload {
    pub frame: u32,
    pub pixels: Vec<u8>,
    pub geometry: Vec<u8>,
}

impl HeavyPayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(self.pixels.len() + 4 + self.geometry.len());
        b.extend_from_slice(&self.pixels);
        b.extend_from_slice(&(self.geometry.len() as u32).to_be_bytes());
        b.extend_from_slice(&self.geometry);
        b
    }

    /// Splits a heavy payload given the pixel byte count from its light
    /// payload.
    pub fn decode(frame: u32, pixel_bytes: usize, b: &[u8]) -> io::Result<Self> {
        if b.len() < pixel_bytes + 4 {
            return Err(invalid("heavy payload shorter than its texture".into()));
        }
        let glen = u32::from_be_bytes(b[pixel_bytes..pixel_bytes + 4].try_into().unwrap()) as usize;
        if b.len() != pixel_bytes + 4 + glen {
            return Err(invalid("heavy payload length mismatch".into()));
        }
        Ok(HeavyPayload {
            frame,
            pixels: b[..pixel_bytes].to_vec(),
            geometry: b[pixel_bytes + 4..].to_vec(),
        })
    }

    /// Wire size of the payload body.
    pub fn encoded_len(&self) -> usize {
        self.pixels.len() + 4 + self.geometry.len()
    }
}

/// Viewer-chosen axis and model-space view direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    pub axis: Axis,
    pub direction: [f32; 3],
}

impl Feedback {
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(FEEDBACK_PAYLOAD_LEN);
        b.push(self.axis.to_u8());
        for c in self.direction {
            b.extend_from_slice(&c.to_be_bytes());
        }
        b
    }

    pub fn decode(b: &[u8]) -> io::Result<Self> {
        if b.len() != FEEDBACK_PAYLOAD_LEN {
            return Err(invalid(format!("feedback payload of {} bytes", b.len())));
        }
        let f = |i: usize| f32::from_be_bytes(b[1 + 4 * i..5 + 4 * i].try_into().unwrap());
        Ok(Feedback {
            axis: Axis::from_u8(b[0]).ok_or_else(|| invalid(format!("bad axis {}", b[0])))?,
            direction: [f(0), f(1), f(2)],
        })
    }
}

/// Writes header and payload with a single `write_all`.
pub fn write_frame(w: &mut impl Write, msg_type: FrameType, worker: u16, frame: u32, payload: &[u8]) -> io::Result<()> {
    let head = FrameHeader {
        msg_type,
        worker,
        frame,
        payload_len: payload.len() as u64,
    };
    let mut buf = Vec::with_capacity(HEADER_LEN + payload.len());
    buf.extend_from_slice(&head.encode());
    buf.extend_from_slice(payload);
    w.write_all(&buf)?;
    w.flush()
}

pub fn read_payload(r: &mut impl Read, head: &FrameHeader) -> io::Result<Vec<u8>> {
    let mut b = vec![0u8; head.payload_len as usize];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn write_feedback(w: &mut impl Write, frame: u32, fb: &Feedback) -> io::Result<()> {
    write_frame(w, FrameType::Feedback, 0, frame, &fb.encode())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn light_payload_is_small_and_round_trips() {
        let l = LightPayload {
            frame: 7,
            width: 64,
            height: 32,
            bytes_per_pixel: 4,
            axis: Axis::Y,
            placement: [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0], [10.0, 11.0, 12.0]],
        };
        let b = l.encode();
        assert_eq!(b.len(), LIGHT_PAYLOAD_LEN);
        assert!(b.len() + HEADER_LEN <= 256);
        assert_eq!(LightPayload::decode(7, &b).unwrap(), l);
        assert_eq!(l.pixel_bytes(), 64 * 32 * 4);
    }

    #[test]
    fn heavy_payload_framing() {
        let h = HeavyPayload { frame: 1, pixels: vec![1, 2, 3, 4], geometry: vec![] };
        let b = h.encode();
        assert_eq!(b, vec![1, 2, 3, 4, 0, 0, 0, 0]);
        assert_eq!(HeavyPayload::decode(1, 4, &b).unwrap(), h);
        assert!(HeavyPayload::decode(1, 4, &b[..6]).is_err());
        assert!(HeavyPayload::decode(1, 8, &b).is_err());
    }

    #[test]
    fn header_rejects_garbage() {
        let mut b = FrameHeader { msg_type: FrameType::Heavy, worker: 1, frame: 2, payload_len: 3 }.encode();
        assert_eq!(&b[..3], &[0x56, 0x49, 2]);
        b[2] = 0;
        assert!(FrameHeader::decode(&b).is_err());
        let huge = FrameHeader { msg_type: FrameType::Heavy, worker: 1, frame: 2, payload_len: MAX_PAYLOAD + 1 }.encode();
        assert!(FrameHeader::decode(&huge).is_err());
    }

    #[test]
    fn feedback_round_trip_and_malformed() {
        let fb = Feedback { axis: Axis::Z, direction: [0.0, 0.5, -1.0] };
        assert_eq!(Feedback::decode(&fb.encode()).unwrap(), fb);
        assert!(Feedback::decode(&[9; FEEDBACK_PAYLOAD_LEN]).is_err());
        assert!(Feedback::decode(&[0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn frame_round_trip(t in 1u8..=3, worker: u16, frame: u32, payload in proptest::collection::vec(any::<u8>(), 0..300)) {
            let ty = match t { 1 => FrameType::Light, 2 => FrameType::Heavy, _ => FrameType::Feedback };
            let mut buf = Vec::new();
            write_frame(&mut buf, ty, worker, frame, &payload).unwrap();
            let mut r = &buf[..];
            let h = FrameHeader::read_from(&mut r).unwrap();
            prop_assert_eq!((h.msg_type, h.worker, h.frame), (ty, worker, frame));
            prop_assert_eq!(read_payload(&mut r, &h).unwrap(), payload);
        }
    }
}

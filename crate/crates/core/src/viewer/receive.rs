//! Per-connection payload receiver.

use std::io::Read;

use log::warn;

use crate::event_log::{tags, Emitter};
use crate::protocol::{self, FrameType, HeavyPayload, LightPayload};

use super::scene::{SceneGraph, SlotContent};
use super::ViewerError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReceiveStats {
    pub worker: Option<usize>,
    pub frames: usize,
    pub last_frame: Option<u32>,
    /// Why the connection was dropped, if not a clean close.
    pub error: Option<String>,
}

/// Progress reported to the caller of [`receive_loop`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiveEvent {
    /// The first header named this worker.
    Worker(usize),
    /// A frame was installed into the worker's slot.
    Installed(u32),
}

/// Reads frames until the peer closes or sends something malformed. Each
/// complete light/heavy pair is installed into the worker's slot.
pub fn receive_loop(mut r: impl Read, scene: &SceneGraph, emitter: &Emitter, mut on_event: impl FnMut(ReceiveEvent)) -> ReceiveStats {
    let mut stats = ReceiveStats::default();
    match receive_frames(&mut r, scene, emitter, &mut stats, &mut on_event) {
        Ok(()) => {}
        Err(e) => {
            warn!("dropping connection for worker {:?}: {e}", stats.worker);
            stats.error = Some(e.to_string());
        }
    }
    stats
}

fn receive_frames(
    r: &mut impl Read,
    scene: &SceneGraph,
    emitter: &Emitter,
    stats: &mut ReceiveStats,
    on_event: &mut impl FnMut(ReceiveEvent),
) -> Result<(), ViewerError> {
    let mut pending: Option<LightPayload> = None;
    loop {
        let head = match protocol::FrameHeader::read_from(r) {
            Ok(h) => h,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof && pending.is_none() => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        let w = head.worker as usize;
        match stats.worker {
            None => {
                if w >= scene.slot_count() {
                    return Err(ViewerError::Malformed(format!("worker {w} outside {} slots", scene.slot_count())));
                }
                stats.worker = Some(w);
                on_event(ReceiveEvent::Worker(w));
            }
            Some(prev) if prev != w => {
                return Err(ViewerError::Malformed(format!("worker {w} on worker {prev}'s connection")));
            }
            _ => {}
        }
        let (f, wi) = (head.frame, w as i32);
        match head.msg_type {
            FrameType::Light => {
                emitter.emit(tags::V_FRAME_START, f, wi);
                emitter.emit(tags::V_LIGHTPAYLOAD_START, f, wi);
                let body = protocol::read_payload(r, &head)?;
                pending = Some(LightPayload::decode(f, &body)?);
                emitter.emit(tags::V_LIGHTPAYLOAD_END, f, wi);
            }
            FrameType::Heavy => {
                let light = pending
                    .take()
                    .ok_or_else(|| ViewerError::Malformed(format!("heavy payload for frame {f} without light payload")))?;
                emitter.emit(tags::V_HEAVYPAYLOAD_START, f, wi);
                let body = protocol::read_payload(r, &head)?;
                let heavy = HeavyPayload::decode(f, light.pixel_bytes(), &body)?;
                emitter.emit(tags::V_HEAVYPAYLOAD_END, f, wi);
                scene.install(SlotContent::from_payloads(w, light, heavy)?)?;
                emitter.emit(tags::V_FRAME_END, f, wi);
                stats.frames += 1;
                stats.last_frame = Some(f);
                on_event(ReceiveEvent::Installed(f));
            }
            FrameType::Feedback => return Err(ViewerError::Malformed("feedback frame from back end".into())),
        }
    }
}

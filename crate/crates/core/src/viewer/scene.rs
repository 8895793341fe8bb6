//! Per-worker slots holding the latest complete payload pair.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use crate::backend::SlabImage;
use crate::protocol::{HeavyPayload, LightPayload};

use super::ViewerError;

/// One installed frame: light metadata together with its texture.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotContent {
    pub worker: usize,
    pub light: LightPayload,
    pub image: SlabImage,
    /// The texture as received (premultiplied RGBA8).
    pub rgba8: Vec<u8>,
}

impl SlotContent {
    pub fn frame(&self) -> u32 {
        self.light.frame
    }

    pub fn from_payloads(worker: usize, light: LightPayload, heavy: HeavyPayload) -> Result<Self, ViewerError> {
        if heavy.frame != light.frame {
            return Err(ViewerError::Malformed(format!(
                "heavy payload for frame {} follows light payload for frame {}",
                heavy.frame, light.frame
            )));
        }
        if light.bytes_per_pixel != 4 {
            return Err(ViewerError::Malformed(format!("{} bytes per pixel", light.bytes_per_pixel)));
        }
        let image = SlabImage::from_rgba8(light.axis, light.width as usize, light.height as usize, &heavy.pixels)
            .ok_or_else(|| ViewerError::Malformed("pixel count does not match light payload".into()))?;
        Ok(SlotContent { worker, light, image, rgba8: heavy.pixels })
    }

    /// Installs a float texture directly, skipping quantization.
    pub fn from_image(worker: usize, light: LightPayload, image: SlabImage) -> Self {
        let rgba8 = image.to_rgba8();
        SlotContent { worker, light, image, rgba8 }
    }
}

/// The viewer's shared state. Each slot is swapped whole, so a reader never
/// sees one frame's metadata with another frame's pixels.
#[derive(Debug)]
pub struct SceneGraph {
    slots: Vec<Mutex<Option<Arc<SlotContent>>>>,
    version: AtomicU64,
    changed: (Mutex<u64>, Condvar),
}

impl SceneGraph {
    pub fn new(workers: usize) -> Self {
        SceneGraph {
            slots: (0..workers).map(|_| Mutex::new(None)).collect(),
            version: AtomicU64::new(0),
            changed: (Mutex::new(0), Condvar::new()),
        }
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn install(&self, content: SlotContent) -> Result<(), ViewerError> {
        let w = content.worker;
        let slot = self
            .slots
            .get(w)
            .ok_or_else(|| ViewerError::Malformed(format!("worker {w} outside {} slots", self.slots.len())))?;
        *slot.lock().unwrap() = Some(Arc::new(content));
        let v = self.version.fetch_add(1, Ordering::SeqCst) + 1;
        let (m, cv) = &self.changed;
        *m.lock().unwrap() = v;
        cv.notify_all();
        Ok(())
    }

    pub fn slot(&self, w: usize) -> Option<Arc<SlotContent>> {
        self.slots.get(w).and_then(|s| s.lock().unwrap().clone())
    }

    /// Populated slots, in worker order.
    pub fn snapshot(&self) -> Vec<Arc<SlotContent>> {
        self.slots.iter().filter_map(|s| s.lock().unwrap().clone()).collect()
    }

    pub fn frames(&self) -> Vec<Option<u32>> {
        self.slots.iter().map(|s| s.lock().unwrap().as_ref().map(|c| c.frame())).collect()
    }

    /// Count of installs so far.
    pub fn version(&self) -> u64 {
        self.version.load(Ordering::SeqCst)
    }

    /// Blocks until the version exceeds `seen` or `timeout` passes.
    pub fn wait_change(&self, seen: u64, timeout: Duration) -> u64 {
        let (m, cv) = &self.changed;
        let g = m.lock().unwrap();
        let (g, _) = cv.wait_timeout_while(g, timeout, |v| *v <= seen).unwrap();
        *g
    }
}

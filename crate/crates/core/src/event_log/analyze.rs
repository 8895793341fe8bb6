use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::tags::{self, BACKEND_TAGS};
use super::EventRecord;

/// `8 * bytes / seconds / 10^6`.
pub fn throughput_mbps(bytes: u64, seconds: f64) -> f64 {
    8.0 * bytes as f64 / seconds / 1e6
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    /// Per-host clock corrections in microseconds, added to raw timestamps.
    pub host_offsets_us: HashMap<String, i64>,
}

/// Timing of one back-end frame on one worker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FramePhases {
    pub worker: i32,
    pub frame: u32,
    pub load_s: Option<f64>,
    pub render_s: Option<f64>,
    pub load_bytes: Option<u64>,
    /// All eight back-end tags present exactly once.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ViolationKind {
    /// A tag occurs more than once for the frame.
    Duplicate,
    /// A tag is absent for the frame.
    Missing,
    /// A tag occurs before one that precedes it in the per-frame order.
    OutOfOrder,
    /// Serial mode only: frame begins loading before the previous frame's
    /// heavy payload was sent.
    FrameOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingViolation {
    pub worker: i32,
    pub frame: u32,
    pub tag: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    pub frames: Vec<FramePhases>,
    pub mean_load_s: Option<f64>,
    pub mean_render_s: Option<f64>,
    pub wall_time_s: f64,
    /// Fraction of interior frames whose successor started loading before
    /// the frame finished rendering. `None` with no interior frames.
    pub overlap_fraction: Option<f64>,
    pub interior_frames: usize,
    /// Aggregate slab-load throughput over frames that report `bytes`.
    pub load_throughput_mbps: Option<f64>,
    pub violations: Vec<OrderingViolation>,
    pub incomplete: Vec<(i32, u32)>,
}

#[derive(Default)]
struct FrameEvents {
    /// tag -> (corrected ts, log position)
    seen: HashMap<&'static str, Vec<(i64, usize)>>,
    bytes: Option<u64>,
}

fn corrected(r: &EventRecord, opts: &AnalyzeOptions) -> i64 {
    r.ts_us as i64 + opts.host_offsets_us.get(&r.host).copied().unwrap_or(0)
}

fn backend_frames(
    records: &[EventRecord],
    opts: &AnalyzeOptions,
) -> BTreeMap<(i32, u32), FrameEvents> {
    let mut frames: BTreeMap<(i32, u32), FrameEvents> = BTreeMap::new();
    for (pos, r) in records.iter().enumerate() {
        let Some(&tag) = BACKEND_TAGS.iter().find(|t| **t == r.tag) else { continue };
        let fe = frames.entry((r.worker, r.frame)).or_default();
        fe.seen.entry(tag).or_default().push((corrected(r, opts), pos));
        if tag == tags::BE_LOAD_END {
            if let Some(b) = r.extra("bytes").and_then(|b| b.parse().ok()) {
                fe.bytes = Some(b);
            }
        }
    }
    frames
}

fn first(fe: &FrameEvents, tag: &str) -> Option<(i64, usize)> {
    fe.seen.get(tag).and_then(|v| v.first().copied())
}

/// Per-frame checks: each back-end tag exactly once, in vocabulary order.
fn frame_violations(worker: i32, frame: u32, fe: &FrameEvents, out: &mut Vec<OrderingViolation>) {
    let mut prev: Option<(i64, usize)> = None;
    for tag in BACKEND_TAGS {
        let v = |kind| OrderingViolation { worker, frame, tag: tag.to_string(), kind };
        match fe.seen.get(tag).map(Vec::as_slice) {
            None | Some([]) => out.push(v(ViolationKind::Missing)),
            Some(hits) => {
                if hits.len() > 1 {
                    out.push(v(ViolationKind::Duplicate));
                }
                let here = hits[0];
                if let Some(p) = prev {
                    if here < p {
                        out.push(v(ViolationKind::OutOfOrder));
                    }
                }
                prev = Some(here);
            }
        }
    }
}

/// Derives per-phase timings, the overlap fraction and ordering checks
/// from back-end events.
pub fn analyze(records: &[EventRecord], opts: &AnalyzeOptions) -> PhaseReport {
    let frames = backend_frames(records, opts);
    let mut out = Vec::new();
    let mut violations = Vec::new();
    let mut incomplete = Vec::new();
    let secs = |a: Option<(i64, usize)>, b: Option<(i64, usize)>| match (a, b) {
        (Some(a), Some(b)) => Some((b.0 - a.0) as f64 / 1e6),
        _ => None,
    };
    for (&(worker, frame), fe) in &frames {
        let before = violations.len();
        frame_violations(worker, frame, fe, &mut violations);
        let complete = violations.len() == before;
        if !complete {
            incomplete.push((worker, frame));
        }
        out.push(FramePhases {
            worker,
            frame,
            load_s: secs(first(fe, tags::BE_LOAD_START), first(fe, tags::BE_LOAD_END)),
            render_s: secs(first(fe, tags::BE_RENDER_START), first(fe, tags::BE_RENDER_END)),
            load_bytes: fe.bytes,
            complete,
        });
    }

    let complete: Vec<&FramePhases> = out.iter().filter(|f| f.complete).collect();
    let mean = |sel: fn(&FramePhases) -> Option<f64>| {
        let v: Vec<f64> = complete.iter().filter_map(|f| sel(f)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let mean_load_s = mean(|f| f.load_s);
    let mean_render_s = mean(|f| f.render_s);

    let (bytes, load_secs) = complete
        .iter()
        .filter_map(|f| Some((f.load_bytes?, f.load_s?)))
        .fold((0u64, 0f64), |(b, s), (fb, fs)| (b + fb, s + fs));
    let load_throughput_mbps = (load_secs > 0.0).then(|| throughput_mbps(bytes, load_secs));

    let mut interior = 0usize;
    let mut overlapped = 0usize;
    for (&(worker, frame), fe) in &frames {
        let Some(next) = frames.get(&(worker, frame + 1)) else { continue };
        if let (Some(next_load), Some(render_end)) =
            (first(next, tags::BE_LOAD_START), first(fe, tags::BE_RENDER_END))
        {
            interior += 1;
            if next_load < render_end {
                overlapped += 1;
            }
        }
    }

    let ts: Vec<i64> = records.iter().map(|r| corrected(r, opts)).collect();
    let wall_time_s = match (ts.iter().min(), ts.iter().max()) {
        (Some(a), Some(b)) => (b - a) as f64 / 1e6,
        _ => 0.0,
    };

    PhaseReport {
        frames: out,
        mean_load_s,
        mean_render_s,
        wall_time_s,
        overlap_fraction: (interior > 0).then(|| overlapped as f64 / interior as f64),
        interior_frames: interior,
        load_throughput_mbps,
        violations,
        incomplete,
    }
}

/// Per-frame ordering plus the serial contract: no frame starts loading
/// before the previous frame on the same worker finished its heavy send.
pub fn serial_violations(records: &[EventRecord]) -> Vec<OrderingViolation> {
    let opts = AnalyzeOptions::default();
    let frames = backend_frames(records, &opts);
    let mut v = Vec::new();
    for (&(worker, frame), fe) in &frames {
        frame_violations(worker, frame, fe, &mut v);
        if let Some(prev) = frame.checked_sub(1).and_then(|p| frames.get(&(worker, p))) {
            if let (Some(end), Some(start)) = (first(prev, tags::BE_HEAVY_END), first(fe, tags::BE_LOAD_START)) {
                if start < end {
                    v.push(OrderingViolation {
                        worker,
                        frame,
                        tag: tags::BE_LOAD_START.into(),
                        kind: ViolationKind::FrameOverlap,
                    });
                }
            }
        }
    }
    v
}

/// A buffer half acquired by one role while the other still held it.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct BufferConflict {
    pub worker: i32,
    pub half: u32,
    pub frame: u32,
    pub role: String,
}

/// Replays `BE_BUFFER_ACQUIRE` / `BE_BUFFER_RELEASE` events (extras `role`
/// and `half`) per worker and reports every overlapping hold.
pub fn buffer_conflicts(records: &[EventRecord]) -> Vec<BufferConflict> {
    let mut holders: HashMap<(i32, u32), String> = HashMap::new();
    let mut out = Vec::new();
    for r in records {
        let acquire = r.tag == tags::BE_BUFFER_ACQUIRE;
        if !acquire && r.tag != tags::BE_BUFFER_RELEASE {
            continue;
        }
        let (Some(role), Some(half)) = (r.extra("role"), r.extra("half").and_then(|h| h.parse().ok())) else {
            continue;
        };
        let key = (r.worker, half);
        if acquire {
            if let Some(h) = holders.get(&key) {
                if h != role {
                    out.push(BufferConflict { worker: r.worker, half, frame: r.frame, role: role.to_string() });
                }
            }
            holders.insert(key, role.to_string());
        } else if holders.get(&key).map(String::as_str) == Some(role) {
            holders.remove(&key);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ts_s: f64, tag: &str, frame: u32, worker: i32) -> EventRecord {
        EventRecord {
            ts_us: (ts_s * 1e6) as u64,
            host: "h".into(),
            program: "be".into(),
            tag: tag.into(),
            frame,
            worker,
            extra: vec![],
        }
    }

    fn frame_at(t0: f64, frame: u32, load: f64, render: f64) -> Vec<EventRecord> {
        let mut t = t0;
        let mut v = vec![rec(t, tags::BE_LOAD_START, frame, 0)];
        t += load;
        v.push(rec(t, tags::BE_LOAD_END, frame, 0));
        v.push(rec(t, tags::BE_LIGHT_SEND, frame, 0));
        v.push(rec(t, tags::BE_LIGHT_END, frame, 0));
        v.push(rec(t, tags::BE_RENDER_START, frame, 0));
        t += render;
        v.push(rec(t, tags::BE_RENDER_END, frame, 0));
        v.push(rec(t, tags::BE_HEAVY_SEND, frame, 0));
        v.push(rec(t, tags::BE_HEAVY_END, frame, 0));
        v
    }

    fn buf(tag: &str, role: &str, half: u32) -> EventRecord {
        let mut r = rec(0.0, tag, 0, 0);
        r.extra = vec![("role".into(), role.into()), ("half".into(), half.to_string())];
        r
    }

    #[test]
    fn buffer_exclusion() {
        let ok = vec![
            buf(tags::BE_BUFFER_ACQUIRE, "reader", 0),
            buf(tags::BE_BUFFER_ACQUIRE, "renderer", 1),
            buf(tags::BE_BUFFER_RELEASE, "reader", 0),
            buf(tags::BE_BUFFER_ACQUIRE, "renderer", 0),
        ];
        assert!(buffer_conflicts(&ok).is_empty());
        let bad = vec![buf(tags::BE_BUFFER_ACQUIRE, "reader", 0), buf(tags::BE_BUFFER_ACQUIRE, "renderer", 0)];
        assert_eq!(buffer_conflicts(&bad).len(), 1);
    }

    #[test]
    fn load_duration() {
        let log = frame_at(0.0, 0, 15.0, 12.0);
        let r = analyze(&log, &AnalyzeOptions::default());
        assert_eq!(r.frames[0].load_s, Some(15.0));
        assert_eq!(r.frames[0].render_s, Some(12.0));
        assert_eq!(r.mean_load_s, Some(15.0));
        assert!((r.wall_time_s - 27.0).abs() < 1e-9);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn throughput_arithmetic() {
        assert!((throughput_mbps(160_000_000, 3.0) - 426.666_666).abs() < 1e-3);
    }

    #[test]
    fn serial_log_has_no_overlap() {
        let mut log = frame_at(0.0, 0, 1.0, 1.0);
        log.extend(frame_at(2.0, 1, 1.0, 1.0));
        log.extend(frame_at(4.0, 2, 1.0, 1.0));
        let r = analyze(&log, &AnalyzeOptions::default());
        assert_eq!(r.interior_frames, 2);
        assert_eq!(r.overlap_fraction, Some(0.0));
        assert!(serial_violations(&log).is_empty());
    }

    #[test]
    fn overlapped_log_detected() {
        let mut log = frame_at(0.0, 0, 1.0, 1.0);
        log.extend(frame_at(1.0, 1, 1.0, 1.0));
        log.sort_by_key(|r| r.ts_us);
        let r = analyze(&log, &AnalyzeOptions::default());
        assert_eq!(r.overlap_fraction, Some(1.0));
        assert!(r.violations.is_empty());
        let s = serial_violations(&log);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].kind, ViolationKind::FrameOverlap);
    }

    #[test]
    fn missing_tag_marks_incomplete() {
        let mut log = frame_at(0.0, 0, 1.0, 1.0);
        log.extend(frame_at(2.0, 1, 3.0, 1.0));
        log.retain(|r| !(r.frame == 1 && r.tag == tags::BE_RENDER_END));
        let r = analyze(&log, &AnalyzeOptions::default());
        assert_eq!(r.incomplete, vec![(0, 1)]);
        assert_eq!(r.mean_load_s, Some(1.0));
        assert!(r.violations.iter().any(|v| v.kind == ViolationKind::Missing));
    }

    #[test]
    fn out_of_order_and_duplicate() {
        let mut log = frame_at(0.0, 0, 1.0, 1.0);
        log.push(rec(0.5, tags::BE_LOAD_END, 0, 0));
        let (a, b) = (1, 4);
        log[a].ts_us = 10_000_000;
        log[b].ts_us = 10_000_001;
        let r = analyze(&log, &AnalyzeOptions::default());
        assert!(r.violations.iter().any(|v| v.kind == ViolationKind::Duplicate));
        assert!(r.violations.iter().any(|v| v.kind == ViolationKind::OutOfOrder));
    }

    #[test]
    fn host_offset_correction() {
        let mut log = frame_at(0.0, 0, 1.0, 1.0);
        for r in log.iter_mut().skip(1) {
            r.host = "skewed".into();
            r.ts_us += 5_000_000;
        }
        let mut opts = AnalyzeOptions::default();
        opts.host_offsets_us.insert("skewed".into(), -5_000_000);
        assert_eq!(analyze(&log, &opts).frames[0].load_s, Some(1.0));
    }
}

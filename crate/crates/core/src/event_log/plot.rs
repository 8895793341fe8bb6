//! Lifeline plots: time on x, one horizontal lane per tag, one polyline per
//! (emitter side, worker, frame).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::tags::{is_viewer_tag, BACKEND_TAGS, VIEWER_TAGS};
use super::{EventLogError, EventRecord};

pub const EVEN_FRAME_COLOR: &str = "#d62728";
pub const ODD_FRAME_COLOR: &str = "#1f77b4";

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub viewer: bool,
    pub worker: i32,
    pub frame: u32,
    pub color: &'static str,
    /// (elapsed seconds, lane index) in time order.
    pub points: Vec<(f64, usize)>,
}

impl Polyline {
    pub fn time_span(&self) -> (f64, f64) {
        let first = self.points.first().map_or(0.0, |p| p.0);
        let last = self.points.last().map_or(0.0, |p| p.0);
        (first, last)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifelinePlot {
    /// Lane labels from bottom to top.
    pub lanes: Vec<String>,
    pub polylines: Vec<Polyline>,
    pub duration_s: f64,
}

/// Builds the plot model. Lanes hold the vocabulary tags present in the
/// log, back-end lanes at the bottom and viewer lanes above them, each
/// group in per-frame order; `extra_tags` are appended on top.
pub fn lifelines(records: &[EventRecord], extra_tags: &[&str]) -> Result<LifelinePlot, EventLogError> {
    if records.is_empty() {
        return Err(EventLogError::EmptyLog);
    }
    let present = |t: &str| records.iter().any(|r| r.tag == t);
    let lanes: Vec<String> = BACKEND_TAGS
        .iter()
        .chain(VIEWER_TAGS.iter())
        .chain(extra_tags.iter())
        .filter(|t| present(t))
        .map(|t| t.to_string())
        .collect();
    let t0 = records.iter().map(|r| r.ts_us).min().unwrap();
    let t1 = records.iter().map(|r| r.ts_us).max().unwrap();
    let mut groups: BTreeMap<(bool, i32, u32), Vec<(u64, usize)>> = BTreeMap::new();
    for r in records {
        if let Some(lane) = lanes.iter().position(|l| *l == r.tag) {
            groups
                .entry((is_viewer_tag(&r.tag), r.worker, r.frame))
                .or_default()
                .push((r.ts_us, lane));
        }
    }
    let polylines = groups
        .into_iter()
        .map(|((viewer, worker, frame), mut pts)| {
            pts.sort_by_key(|p| p.0);
            Polyline {
                viewer,
                worker,
                frame,
                color: if frame % 2 == 0 { EVEN_FRAME_COLOR } else { ODD_FRAME_COLOR },
                points: pts
                    .into_iter()
                    .map(|(ts, lane)| ((ts - t0) as f64 / 1e6, lane))
                    .collect(),
            }
        })
        .collect();
    Ok(LifelinePlot {
        lanes,
        polylines,
        duration_s: (t1 - t0) as f64 / 1e6,
    })
}

impl LifelinePlot {
    pub fn to_svg(&self) -> String {
        const W: f64 = 1000.0;
        const LANE_H: f64 = 28.0;
        const LEFT: f64 = 190.0;
        const RIGHT: f64 = 20.0;
        const TOP: f64 = 20.0;
        const BOTTOM: f64 = 40.0;
        let h = TOP + BOTTOM + LANE_H * self.lanes.len().max(1) as f64;
        let span = if self.duration_s > 0.0 { self.duration_s } else { 1.0 };
        let x = |t: f64| LEFT + (W - LEFT - RIGHT) * t / span;
        let lanes = self.lanes.len();
        let y = |lane: usize| TOP + LANE_H * (lanes - 1 - lane) as f64 + LANE_H / 2.0;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{h}" viewBox="0 0 {W} {h}" font-family="monospace" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{h}" fill="white"/>"#);
        for (i, lane) in self.lanes.iter().enumerate() {
            let yy = y(i);
            let _ = writeln!(
                s,
                r##"<line class="lifeline" x1="{LEFT}" y1="{yy}" x2="{}" y2="{yy}" stroke="#cccccc"/><text x="{}" y="{}" text-anchor="end">{lane}</text>"##,
                W - RIGHT,
                LEFT - 6.0,
                yy + 4.0
            );
        }
        let axis_y = h - BOTTOM + 10.0;
        for k in 0..=10 {
            let t = span * k as f64 / 10.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.2}</text>"#,
                x(t),
                axis_y + 12.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">elapsed seconds</text>"#,
            (LEFT + W) / 2.0,
            h - 4.0
        );
        for p in &self.polylines {
            let pts: Vec<String> = p
                .points
                .iter()
                .map(|&(t, lane)| format!("{:.2},{:.2}", x(t), y(lane)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="frame" data-worker="{}" data-frame="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                p.worker,
                p.frame,
                p.color,
                pts.join(" ")
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Writes an SVG lifeline plot of `records` to `out`.
pub fn plot(records: &[EventRecord], out: &Path) -> Result<LifelinePlot, EventLogError> {
    let model = lifelines(records, &[])?;
    std::fs::write(out, model.to_svg())?;
    Ok(model)
}

//! Collect records from two emitters over TCP, check per-frame ordering
//! and draw a lifeline chart.

use std::path::PathBuf;

use anyhow::Result;
use corridor::backend::{run, BackendConfig, Mode, SlabSource, ViewerEndpoint};
use corridor::event_log::{analyze, plot, read_log, AnalyzeOptions, Collector, Emitter, Sink};
use corridor::volume::{synthesize, Dims, SynthKind};

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("event_timeline");
    let log_path = dir.join("run.log");
    let collector = Collector::bind("127.0.0.1:0", &log_path)?;
    let sink = |n: &str| Sink::Collector { addr: collector.local_addr(), spool: dir.join(format!("{n}.spool")) };
    let em = Emitter::new("local", "backend", sink("backend"));
    let config = BackendConfig {
        workers: 2,
        mode: Mode::Overlapped,
        inject_load: std::time::Duration::from_millis(30),
        inject_render: std::time::Duration::from_millis(30),
        ..Default::default()
    };
    run(&config, SlabSource::Local(synthesize(SynthKind::MovingBlob, Dims::cube(16), 6)), &ViewerEndpoint::Null, &em)?;
    em.finish();
    let summary = collector.shutdown()?;
    println!("{} records from {} connection(s)", summary.records, summary.connections);

    let records = read_log(&log_path)?;
    let r = analyze(&records, &AnalyzeOptions::default());
    for f in r.frames.iter().take(4) {
        println!("worker {} frame {}: load {:.1} ms, render {:.1} ms", f.worker, f.frame, f.load_s.unwrap_or(0.0) * 1e3, f.render_s.unwrap_or(0.0) * 1e3);
    }
    println!("overlap fraction {:?}, {} violations", r.overlap_fraction, r.violations.len());
    let svg: PathBuf = dir.join("lifelines.svg");
    let chart = plot(&records, &svg)?;
    println!("{} lifelines over {:.2} s in {}", chart.polylines.len(), chart.duration_s, svg.display());
    Ok(())
}

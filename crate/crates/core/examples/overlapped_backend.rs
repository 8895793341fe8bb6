//! Run the back end serially and with overlapped loading, with injected
//! phase costs, and compare wall times against the model.

use std::time::Duration;

use anyhow::Result;
use corridor::backend::{predict, run, BackendConfig, Mode, SlabSource, TimingModel, ViewerEndpoint};
use corridor::event_log::{analyze, AnalyzeOptions, Emitter};
use corridor::volume::{synthesize, Dims, SynthKind};

fn main() -> Result<()> {
    let (load, render, n) = (0.08, 0.05, 8);
    let model = predict(&TimingModel::new(load, render, n)?)?;
    println!("model: serial {:.2} s, overlapped {:.2} s, speedup {:.3}", model.serial_s, model.overlapped_s, model.speedup);
    for mode in [Mode::Serial, Mode::Overlapped] {
        let config = BackendConfig {
            workers: 2,
            mode,
            inject_load: Duration::from_secs_f64(load),
            inject_render: Duration::from_secs_f64(render),
            ..Default::default()
        };
        let source = SlabSource::Local(synthesize(SynthKind::MovingBlob, Dims::cube(32), n));
        let (em, log) = Emitter::memory("local", "backend");
        let report = run(&config, source, &ViewerEndpoint::Null, &em)?;
        em.flush();
        let phases = analyze(&log.lock().unwrap(), &AnalyzeOptions::default());
        println!(
            "{mode:>10}: {:.2} s wall, overlap fraction {:.2}, {} ordering violations",
            report.wall_time_s,
            phases.overlap_fraction.unwrap_or(0.0),
            phases.violations.len()
        );
    }
    Ok(())
}

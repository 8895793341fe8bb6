//! Rotate the viewer past 45 degrees while the back end is rendering and
//! watch the decomposition axis follow the view.

use std::thread;
use std::time::Duration;

use anyhow::Result;
use corridor::backend::{run_serial, BackendConfig, SlabSource, ViewerEndpoint};
use corridor::event_log::Emitter;
use corridor::viewer::{look_along, Viewer, ViewerConfig};
use corridor::volume::{synthesize, Axis, Dims, SynthKind};

fn main() -> Result<()> {
    let viewer = Viewer::start(
        ViewerConfig { workers: 2, initial_orientation: look_along([1.0, 0.0, 0.0]).expect("unit"), ..Default::default() },
        Emitter::null(),
    )?;
    let endpoint = ViewerEndpoint::Tcp(viewer.local_addr().to_string());
    let config = BackendConfig { workers: 2, initial_axis: Axis::X, inject_render: Duration::from_millis(80), ..Default::default() };
    let source = SlabSource::Local(synthesize(SynthKind::MovingBlob, Dims::cube(24), 8));
    let backend = thread::spawn(move || run_serial(&config, source, &endpoint, &Emitter::null()));

    viewer.wait_for_frame(1, Duration::from_secs(10));
    for degrees in [10.0f64, 30.0, 50.0, 60.0] {
        let r = degrees.to_radians();
        let u = viewer.update_view(look_along([r.cos(), r.sin(), 0.0]).expect("unit"))?;
        println!("view {degrees:>4} deg toward y: best axis {}, feedback {}", u.axis, if u.feedback.is_some() { "sent" } else { "none" });
    }
    let report = backend.join().expect("back end thread")?;
    println!("axis by timestep: {:?}", report.axis_by_timestep);
    let summary = viewer.shutdown();
    println!("viewer sent {} feedback message(s), last frames {:?}", summary.feedback_sent, summary.last_frames);
    Ok(())
}

//! Connect to the viewer's websocket bridge the way a browser would: read
//! slot headers and textures, then send an orientation.

use std::time::Duration;

use anyhow::{Context, Result};
use corridor::backend::{run_serial, BackendConfig, SlabSource, ViewerEndpoint};
use corridor::event_log::Emitter;
use corridor::viewer::{rotation, SlotHeader, Viewer, ViewerConfig};
use corridor::volume::{synthesize, Axis, Dims, SynthKind};
use tungstenite::Message;

fn main() -> Result<()> {
    let viewer = Viewer::start(
        ViewerConfig { workers: 2, ui_listen: Some("127.0.0.1:0".into()), ..Default::default() },
        Emitter::null(),
    )?;
    let config = BackendConfig { workers: 2, ..Default::default() };
    let source = SlabSource::Local(synthesize(SynthKind::GaussianBlob, Dims::cube(16), 2));
    run_serial(&config, source, &ViewerEndpoint::Tcp(viewer.local_addr().to_string()), &Emitter::null())?;
    viewer.wait_idle(Duration::from_secs(5));

    let url = format!("ws://{}", viewer.ui_addr().context("bridge enabled")?);
    let (mut ws, _) = tungstenite::connect(url)?;
    for _ in 0..2 {
        let Message::Text(t) = ws.read()? else { continue };
        let h: SlotHeader = serde_json::from_str(&t)?;
        let Message::Binary(px) = ws.read()? else { continue };
        println!("slot {} frame {}: {}x{} axis {}, {} texture bytes", h.worker, h.frame, h.width, h.height, h.axis, px.len());
    }
    let m: Vec<f64> = rotation(Axis::Y, 0.4).iter().flatten().copied().collect();
    ws.send(Message::Text(serde_json::json!({ "type": "view", "m": m }).to_string()))?;
    std::thread::sleep(Duration::from_millis(200));
    println!("viewer direction now {:?}", viewer.view().direction());
    ws.close(None)?;
    viewer.shutdown();
    Ok(())
}

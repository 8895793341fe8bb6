//! Render a volume as P slabs, composite the partial images back to front
//! and compare against rendering the whole volume at once.

use anyhow::Result;
use corridor::backend::{render_slab, Direction};
use corridor::viewer::{composite_layers, look_along, slab_layers, Camera, ViewState};
use corridor::volume::{synthesize, Axis, Dims, SynthKind, TransferFunction};

fn main() -> Result<()> {
    let dims = Dims::cube(48);
    let vol = synthesize(SynthKind::GaussianBlob, dims, 1).load_local(0)?;
    let tf = TransferFunction::gray_ramp();
    let view = ViewState::new(look_along([0.0, 0.0, 1.0]).expect("unit vector"))?;
    let cam = Camera::centered(&view, dims, 48, 48);
    let whole = composite_layers(&[&slab_layers(&vol, &tf, Axis::Z, 1, Direction::Positive)?[0]], &cam);
    for p in [1, 2, 3, 4, 8] {
        let layers = slab_layers(&vol, &tf, Axis::Z, p, Direction::Positive)?;
        let img = composite_layers(&layers.iter().collect::<Vec<_>>(), &cam);
        println!("P = {p}: max abs diff vs monolithic {:.2e}", img.max_abs_diff(&whole));
    }
    let direct = render_slab(&vol, &tf, Axis::Z, Direction::Positive)?;
    let peak = direct.pixels.iter().map(|p| p.alpha()).fold(0.0f32, f32::max);
    println!("peak opacity of the direct render: {peak:.3}");
    let out = std::env::temp_dir().join("slab_compositing.png");
    whole.save_png(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}

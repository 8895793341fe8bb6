//! Approximation error of the textured-slab stack as the view turns away
//! from the decomposition axis.

use anyhow::Result;
use corridor::viewer::artifact_error;
use corridor::volume::{synthesize, Dims, SynthKind, TransferFunction};

fn main() -> Result<()> {
    let vol = synthesize(SynthKind::GaussianBlob, Dims::cube(32), 1).load_local(0)?;
    let tf = TransferFunction::gray_ramp();
    println!("angle  P=2       P=4       P=8");
    for angle in [0.0, 8.0, 16.0, 24.0, 32.0, 44.0] {
        let e: Vec<String> = [2, 4, 8]
            .iter()
            .map(|&p| artifact_error(&vol, &tf, p, angle).map(|e| format!("{e:.2e}")))
            .collect::<Result<_, _>>()?;
        println!("{angle:>5}  {}", e.join("  "));
    }
    Ok(())
}

//! Serial versus overlapped wall-time arithmetic and link-rate estimates.

use anyhow::Result;
use corridor::backend::{predict, required_rate_mbps, TimingModel};
use corridor::event_log::throughput_mbps;

fn main() -> Result<()> {
    for (l, r, n) in [(1.0, 1.0, 10), (15.0, 12.0, 10), (10.0, 1.0, 10), (1.0, 1.0, 1), (1.0, 1.0, 100)] {
        let p = predict(&TimingModel::new(l, r, n)?)?;
        println!(
            "L={l:>4} R={r:>4} N={n:>3}: serial {:>6.1}  overlapped {:>6.1}  speedup {:.3} (bound {:.3})",
            p.serial_s,
            p.overlapped_s,
            p.speedup,
            TimingModel::speedup_bound(n)
        );
    }
    println!("1 Mpixel RGBA at 30 fps needs {} Mbps", required_rate_mbps(1_000_000, 4, 30.0));
    println!("160 MB in 3 s is {:.2} Mbps", throughput_mbps(160_000_000, 3.0));
    Ok(())
}

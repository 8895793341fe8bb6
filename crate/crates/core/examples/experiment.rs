//! Launch every component for a serial and an overlapped run and report
//! the measured speedup next to the model bound.

use std::time::Duration;

use anyhow::Result;
use corridor::orchestrator::{run_matrix, RunConfig};

fn main() -> Result<()> {
    let mut config = RunConfig::parse("dataset = moving-blob\ndims = 32\nservers = 2\nworkers = 2\ntimesteps = 6\n")?;
    config.inject_load = Duration::from_millis(60);
    config.inject_render = Duration::from_millis(60);
    config.out_dir = std::env::temp_dir().join("corridor-experiment");
    let (serial, overlapped, cmp) = run_matrix(&config)?;
    for r in [&serial, &overlapped] {
        println!(
            "{:>10}: wall {:.3} s, predicted {:.3} s, overlap {:?}",
            r.mode,
            r.wall_time_s,
            r.predicted_wall_s.unwrap_or(f64::NAN),
            r.overlap_fraction
        );
        for c in &r.checks {
            println!("    [{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
        }
    }
    println!("speedup {:.3} (bound {:.3})", cmp.measured_speedup, cmp.bound);
    println!("reports in {}", config.out_dir.display());
    Ok(())
}

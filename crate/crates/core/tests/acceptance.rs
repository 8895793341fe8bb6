//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one pass/fail line; exits non-zero on failure.

use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use corridor::backend::{predict, render_slab, required_rate_mbps, run, BackendConfig, Direction, PayloadCapture, SlabSource, TimingModel, ViewerEndpoint};
use corridor::block_cache::{CacheClient, CacheServer, Storage, StoreConfig};
use corridor::color::Rgba;
use corridor::event_log::{throughput_mbps, Emitter};
use corridor::orchestrator::{run_matrix, RunConfig, RunReport};
use corridor::viewer::{artifact_error, composite_layers, look_along, slab_layers, Camera, ViewState};
use corridor::volume::{synthesize, Axis, Dims, SynthKind, TransferFunction};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(measured: f64, target: f64, tol: f64) -> bool {
    (measured - target).abs() <= tol * target
}

/// Slab-decomposed render, composited, against the whole-volume render.
fn decomposition_equivalence() -> Outcome {
    let started = Instant::now();
    let dims = Dims::cube(64);
    let vol = synthesize(SynthKind::GaussianBlob, dims, 1).load_local(0).map_err(|e| e.to_string())?;
    let tf = TransferFunction::gray_ramp();
    let mut worst = 0.0f32;
    for axis in Axis::ALL {
        let mut d = [0.0; 3];
        d[axis.index()] = 1.0;
        let view = ViewState::new(look_along(d).unwrap()).unwrap();
        let (ua, va) = axis.transverse();
        let cam = Camera::centered(&view, dims, dims.get(ua), dims.get(va));
        let whole = render_slab(&vol, &tf, axis, Direction::Positive).map_err(|e| e.to_string())?;
        let oracle = composite_layers(&[&slab_layers(&vol, &tf, axis, 1, Direction::Positive).unwrap()[0]], &cam);
        if axis == Axis::Z && oracle.pixels != whole.pixels {
            return Err("monolithic texture does not map 1:1 onto the raster".into());
        }
        for p in [1, 2, 4, 8] {
            let layers = slab_layers(&vol, &tf, axis, p, Direction::Positive).map_err(|e| e.to_string())?;
            let img = composite_layers(&layers.iter().collect::<Vec<_>>(), &cam);
            worst = worst.max(img.max_abs_diff(&oracle));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(worst <= 1e-5 && secs < 30.0, format!("max abs diff {worst:.2e} over P in {{1,2,4,8}} and 3 axes, {secs:.1} s"))
}

fn matrix(load_ms: u64, render_ms: u64, tag: &str) -> Result<(RunReport, RunReport, f64), String> {
    let dir = std::env::temp_dir().join(format!("corridor-acceptance-{tag}-{}", std::process::id()));
    let config = RunConfig {
        dataset: corridor::orchestrator::DatasetSpec::Synthetic { kind: SynthKind::MovingBlob, dims: Dims::cube(32) },
        servers: 2,
        workers: 2,
        timesteps: 10,
        inject_load: Duration::from_millis(load_ms),
        inject_render: Duration::from_millis(render_ms),
        raster: (64, 64),
        out_dir: dir.clone(),
        ..Default::default()
    };
    let (s, o, cmp) = run_matrix(&config).map_err(|e| e.to_string())?;
    let _ = std::fs::remove_dir_all(dir);
    Ok((s, o, cmp.measured_speedup))
}

fn timing_conformance(runs: &mut Vec<RunReport>) -> Outcome {
    let (s, o, speedup) = matrix(200, 200, "equal")?;
    let ok = within(s.wall_time_s, 4.0, 0.15) && within(o.wall_time_s, 2.2, 0.15) && speedup >= 1.5;
    let detail = format!("serial {:.3} s (4.0), overlapped {:.3} s (2.2), speedup {speedup:.3} (bound 1.818)", s.wall_time_s, o.wall_time_s);
    runs.extend([s, o]);
    ensure(ok, detail)
}

fn field_ratio(runs: &mut Vec<RunReport>) -> Outcome {
    let predicted = predict(&TimingModel::new(150.0, 120.0, 10).unwrap()).unwrap().speedup;
    let (s, o, ratio) = matrix(150, 120, "field")?;
    let detail = format!("measured {ratio:.3} in [1.40, 1.80], model {predicted:.3}");
    runs.extend([s, o]);
    ensure((1.40..=1.80).contains(&ratio) && (predicted - 270.0 / 162.0).abs() < 1e-12, detail)
}

fn cache_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let data: Vec<u8> = (0..4 << 20).map(|_| rng.gen()).collect();
    let block = 64 * 1024u64;
    let mut spanning = 0;
    for s in [1, 2, 4] {
        let servers: Vec<CacheServer> = (0..s).map(|_| CacheServer::spawn("127.0.0.1:0", Storage::Memory).unwrap()).collect();
        let store = StoreConfig::new(servers.iter().map(|x| x.local_addr().to_string()).collect(), block as u32).unwrap();
        let client = CacheClient::new(store).map_err(|e| e.to_string())?;
        client.ingest_bytes("oracle", &data).map_err(|e| e.to_string())?;
        let mut h = client.open("oracle").map_err(|e| e.to_string())?;
        for i in 0..200 {
            let (off, len) = if i % 2 == 0 {
                let off = rng.gen_range(0..data.len() as u64);
                (off, rng.gen_range(1..=(data.len() as u64 - off).min(300_000)) as usize)
            } else {
                // straddle a block boundary, often several stripes
                let b = rng.gen_range(1..data.len() as u64 / block);
                let off = b * block - rng.gen_range(1..block);
                (off, rng.gen_range(2..=(data.len() as u64 - off).min(3 * block)) as usize)
            };
            if off / block != (off + len as u64 - 1) / block {
                spanning += 1;
            }
            let got = h.read(off, len).map_err(|e| e.to_string())?;
            if got != data[off as usize..off as usize + len] {
                return Err(format!("S={s}: read ({off}, {len}) differs from source"));
            }
        }
        servers.into_iter().for_each(CacheServer::shutdown);
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("600 reads byte-exact for S in {{1,2,4}}, {spanning} cross a block boundary, {secs:.1} s"))
}

fn event_ordering(runs: &mut Vec<RunReport>) -> Outcome {
    for p in [1, 4] {
        let dir = std::env::temp_dir().join(format!("corridor-acceptance-order{p}-{}", std::process::id()));
        let config = RunConfig {
            workers: p,
            timesteps: 6,
            inject_load: Duration::from_millis(40),
            inject_render: Duration::from_millis(40),
            out_dir: dir.clone(),
            raster: (32, 32),
            ..Default::default()
        };
        let (s, o, _) = run_matrix(&config).map_err(|e| e.to_string())?;
        let _ = std::fs::remove_dir_all(dir);
        runs.extend([s, o]);
    }
    let mut serial_bad = 0;
    let mut worst_overlap = f64::INFINITY;
    let (mut ns, mut no) = (0, 0);
    for r in runs.iter() {
        match r.mode {
            corridor::backend::Mode::Serial => {
                ns += 1;
                serial_bad += r.ordering_violations;
            }
            corridor::backend::Mode::Overlapped => {
                no += 1;
                worst_overlap = worst_overlap.min(r.overlap_fraction.unwrap_or(0.0));
            }
        }
    }
    ensure(
        serial_bad == 0 && worst_overlap >= 0.8,
        format!("{ns} serial logs with {serial_bad} violations, {no} overlapped logs with min overlap {worst_overlap:.2}"),
    )
}

fn payload_scaling() -> Outcome {
    let mut heavy = Vec::new();
    let mut raw = Vec::new();
    for n in [16, 32, 64] {
        let capture = PayloadCapture::new();
        let config = BackendConfig { workers: 4, ..Default::default() };
        let source = SlabSource::Local(synthesize(SynthKind::GaussianBlob, Dims::cube(n), 1));
        let r = run(&config, source, &ViewerEndpoint::Capture(capture.clone()), &Emitter::null()).map_err(|e| e.to_string())?;
        let captured: u64 = capture.frames().iter().map(|f| f.heavy.pixels.len() as u64).sum();
        if captured != r.heavy_bytes_by_timestep[0] {
            return Err(format!("n={n}: report {} vs captured {captured}", r.heavy_bytes_by_timestep[0]));
        }
        heavy.push(captured);
        raw.push(r.raw_bytes_by_timestep[0]);
    }
    let ok = heavy[1] == 4 * heavy[0] && heavy[2] == 4 * heavy[1] && raw[1] == 8 * raw[0] && raw[2] == 8 * raw[1];
    ensure(ok, format!("heavy {heavy:?}, raw {raw:?}"))
}

fn bandwidth_arithmetic() -> Outcome {
    let rate = required_rate_mbps(1_000_000, 4, 30.0);
    let tp = throughput_mbps(160_000_000, 3.0);
    ensure(
        rate == 960.0 && (tp - 426.67).abs() <= 0.01 && (tp - 433.0).abs() <= 0.02 * 433.0,
        format!("required {rate} Mbps, throughput {tp:.4} Mbps"),
    )
}

fn artifact_monotonicity() -> Outcome {
    let vol = synthesize(SynthKind::GaussianBlob, Dims::cube(32), 1).load_local(0).map_err(|e| e.to_string())?;
    let tf = TransferFunction::gray_ramp();
    let e: Vec<f64> = [0.0, 16.0, 32.0]
        .iter()
        .map(|&a| artifact_error(&vol, &tf, 4, a).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    ensure(e[0] <= 1e-5 && e[0] <= e[1] && e[1] <= e[2], format!("error at 0/16/32 deg: {:.2e} {:.2e} {:.2e}", e[0], e[1], e[2]))
}

fn over_properties() -> Outcome {
    let mut rng = StdRng::seed_from_u64(9);
    let mut gen = || {
        let a: f32 = rng.gen();
        Rgba::new(rng.gen::<f32>() * a, rng.gen::<f32>() * a, rng.gen::<f32>() * a, a)
    };
    let mut worst = 0.0f32;
    for _ in 0..10_000 {
        let (a, b, c) = (gen(), gen(), gen());
        worst = worst.max(a.over(b).over(c).max_abs_diff(&a.over(b.over(c))));
        worst = worst.max(a.over(Rgba::TRANSPARENT).max_abs_diff(&a));
        worst = worst.max(Rgba::TRANSPARENT.over(a).max_abs_diff(&a));
    }
    ensure(worst <= 1e-6, format!("max channel deviation {worst:.2e} over 10^4 triples"))
}

fn main() {
    let mut runs = Vec::new();
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "decomposition-compositing equivalence", decomposition_equivalence()),
        (2, "timing-model conformance", timing_conformance(&mut runs)),
        (3, "field-test ratio", field_ratio(&mut runs)),
        (4, "block-cache byte oracle", cache_oracle()),
        (5, "event ordering", event_ordering(&mut runs)),
        (6, "payload scaling", payload_scaling()),
        (7, "bandwidth arithmetic", bandwidth_arithmetic()),
        (8, "artifact monotonicity", artifact_monotonicity()),
        (9, "over-operator properties", over_properties()),
    ];
    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(d) => println!("criterion {n} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

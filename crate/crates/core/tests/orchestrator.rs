use std::net::{SocketAddr, TcpListener};
use std::time::Duration;

use corridor::backend::Mode;
use corridor::orchestrator::{compare, probe_listening, run, run_matrix, DatasetSpec, OrchestratorError, RunConfig, RunReport};
use corridor::volume::{synthesize, write_dataset, Dims, SynthKind};

fn free_ports(n: usize) -> Vec<u16> {
    let ls: Vec<TcpListener> = (0..n).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
    ls.iter().map(|l| l.local_addr().unwrap().port()).collect()
}

fn config(out: &std::path::Path) -> RunConfig {
    RunConfig {
        dataset: DatasetSpec::Synthetic { kind: SynthKind::MovingBlob, dims: Dims::cube(32) },
        servers: 2,
        workers: 2,
        timesteps: 5,
        out_dir: out.to_path_buf(),
        raster: (64, 64),
        ..Default::default()
    }
}

fn ms(m: u64) -> Duration {
    Duration::from_millis(m)
}

#[test]
fn serial_run_reports_no_overlap_and_closes_ports() {
    let dir = tempfile::tempdir().unwrap();
    let ports = free_ports(5);
    let mut c = config(dir.path());
    c.cache_ports = ports[..2].to_vec();
    c.viewer_port = ports[2];
    c.collector_port = ports[3];
    c.ui_port = Some(ports[4]);
    c.snapshot_every = Some(2);
    let r = run(&c).unwrap();
    assert!(r.passed(), "{:#?}", r.checks);
    assert_eq!(r.overlap_fraction, Some(0.0));
    assert_eq!(r.timesteps_completed, 5);
    assert_eq!(r.viewer_frames, vec![Some(4), Some(4)]);
    assert_eq!(r.snapshots.len(), 3);
    assert_eq!(r.raw_bytes, 5 * 32 * 32 * 32 * 4);
    assert!(r.mean_load_s.is_some() && r.mean_render_s.is_some());
    let addrs: Vec<(String, SocketAddr)> =
        ports.iter().map(|p| (p.to_string(), SocketAddr::from(([127, 0, 0, 1], *p)))).collect();
    assert!(probe_listening(&addrs).is_empty());
    let back = RunReport::read(&dir.path().join("report-serial.json")).unwrap();
    assert_eq!(back, r);
    assert!(r.log_path.exists());
}

#[test]
fn overlapped_run_matches_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.mode = Mode::Overlapped;
    c.inject_load = ms(100);
    c.inject_render = ms(100);
    let r = run(&c).unwrap();
    assert!(r.passed(), "{:#?}", r.checks);
    let ratio = r.measured_over_predicted.unwrap();
    assert!((0.85..=1.15).contains(&ratio), "{ratio}");
    assert!(r.overlap_fraction.unwrap() >= 0.8);
    assert_eq!(r.buffer_conflicts, 0);
}

#[test]
fn invalid_config_is_rejected_before_launch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut c = config(&out);
    c.workers = 0;
    assert!(matches!(run(&c), Err(OrchestratorError::Config(_))));
    assert!(!out.exists());
}

#[test]
fn equal_phases_approach_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.timesteps = 10;
    c.inject_load = ms(60);
    c.inject_render = ms(60);
    let (s, o, cmp) = run_matrix(&c).unwrap();
    assert!(s.passed() && o.passed(), "{:#?} {:#?}", s.checks, o.checks);
    assert!((cmp.bound - 20.0 / 11.0).abs() < 1e-12);
    assert!((1.5..=1.82).contains(&cmp.measured_speedup), "{cmp:?}");
    assert!(dir.path().join("comparison.json").exists());
}

#[test]
fn dominant_load_limits_speedup() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.inject_load = ms(200);
    c.inject_render = ms(20);
    let (_, _, cmp) = run_matrix(&c).unwrap();
    assert!(cmp.measured_speedup <= 1.15, "{cmp:?}");
    assert!(cmp.predicted_speedup.unwrap() <= 1.15);
}

#[test]
fn single_timestep_has_no_speedup() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.timesteps = 1;
    c.inject_load = ms(100);
    c.inject_render = ms(100);
    let (_, _, cmp) = run_matrix(&c).unwrap();
    assert!((cmp.measured_speedup - 1.0).abs() < 0.1, "{cmp:?}");
    assert_eq!(cmp.bound, 1.0);
}

#[test]
fn compare_rejects_mismatched_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(&config(&dir.path().join("a"))).unwrap();
    let mut c = config(&dir.path().join("b"));
    c.mode = Mode::Overlapped;
    c.workers = 1;
    let b = run(&c).unwrap();
    assert!(matches!(compare(&a, &b), Err(OrchestratorError::Mismatch(_))));
    assert!(matches!(compare(&a, &a), Err(OrchestratorError::Mismatch(_))));
}

#[test]
fn port_conflict_tears_down_started_components() {
    let dir = tempfile::tempdir().unwrap();
    let busy = TcpListener::bind("127.0.0.1:0").unwrap();
    let ports = free_ports(3);
    let mut c = config(dir.path());
    c.collector_port = ports[0];
    c.cache_ports = ports[1..].to_vec();
    c.viewer_port = busy.local_addr().unwrap().port();
    match run(&c) {
        Err(OrchestratorError::Launch { component, .. }) => assert_eq!(component, "viewer"),
        other => panic!("expected launch failure, got {other:?}"),
    }
    let addrs: Vec<(String, SocketAddr)> =
        ports.iter().map(|p| (p.to_string(), SocketAddr::from(([127, 0, 0, 1], *p)))).collect();
    assert!(probe_listening(&addrs).is_empty());
}

#[test]
fn timeout_stops_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.timesteps = 20;
    c.inject_render = ms(100);
    c.timeout = ms(300);
    assert!(matches!(run(&c), Err(OrchestratorError::Timeout(_))));
}

#[test]
fn file_dataset_runs_like_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_dataset(&synthesize(SynthKind::GaussianBlob, Dims::new(16, 12, 8), 3), &data).unwrap();
    let mut c = config(&dir.path().join("out"));
    c.dataset = DatasetSpec::Files(data);
    c.timesteps = 3;
    c.servers = 3;
    let r = run(&c).unwrap();
    assert!(r.passed(), "{:#?}", r.checks);
    assert_eq!(r.raw_bytes, 3 * 16 * 12 * 8 * 4);
    c.timesteps = 4;
    assert!(matches!(run(&c), Err(OrchestratorError::Config(_))));
}

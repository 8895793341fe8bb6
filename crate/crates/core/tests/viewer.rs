use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use corridor::backend::{placement, render_slab, run_serial, BackendConfig, Direction, SlabImage, SlabSource, ViewerEndpoint};
use corridor::color::Rgba;
use corridor::event_log::{tags, Emitter};
use corridor::protocol::{self, FrameType, HeavyPayload, LightPayload};
use corridor::viewer::{
    artifact_error, composite, composite_layers, depth_order, look_along, receive_loop, rotation, ReceiveEvent, slab_layers, Camera,
    SceneGraph, SlotContent, SlotHeader, ViewState, Viewer, ViewerConfig, IDENTITY,
};
use corridor::volume::{decompose, synthesize, Axis, Dims, SynthKind, TransferFunction};

fn layer(worker: usize, frame: u32, dims: Dims, slab_axis: Axis, range: std::ops::Range<usize>, fill: impl Fn(usize, usize) -> Rgba) -> SlotContent {
    let slab = corridor::volume::SlabAssignment { axis: slab_axis, worker_index: worker, range };
    let (ua, va) = slab_axis.transverse();
    let (w, h) = (dims.get(ua), dims.get(va));
    let pixels = (0..h).flat_map(|v| (0..w).map(move |u| (u, v))).map(|(u, v)| fill(u, v)).collect();
    let light = LightPayload {
        frame,
        width: w as u32,
        height: h as u32,
        bytes_per_pixel: 4,
        axis: slab_axis,
        placement: placement(dims, &slab),
    };
    SlotContent::from_image(worker, light, SlabImage { axis: slab_axis, width: w, height: h, pixels })
}

#[test]
fn single_layer_identity_view_is_one_to_one() {
    let dims = Dims::new(7, 5, 4);
    let l = layer(0, 0, dims, Axis::Z, 0..4, |u, v| Rgba::new(u as f32 / 7.0, v as f32 / 5.0, 0.0, 1.0) * 0.5);
    let cam = Camera::centered(&ViewState::default(), dims, 7, 5);
    let out = composite_layers(&[&l], &cam);
    assert_eq!(out.pixels, l.image.pixels);
}

#[test]
fn flipped_view_reverses_order() {
    let dims = Dims::cube(4);
    let red = layer(0, 0, dims, Axis::Z, 0..2, |_, _| Rgba::new(1.0, 0.0, 0.0, 1.0));
    let blue = layer(1, 0, dims, Axis::Z, 2..4, |_, _| Rgba::new(0.0, 0.0, 1.0, 1.0));
    let layers = [&red, &blue];
    let front = ViewState::default();
    let back = ViewState::new(rotation(Axis::Y, std::f64::consts::PI)).unwrap();
    assert_eq!(depth_order(&layers, front.direction()), vec![1, 0]);
    assert_eq!(depth_order(&layers, back.direction()), vec![0, 1]);
    let a = composite_layers(&layers, &Camera::centered(&front, dims, 4, 4));
    let b = composite_layers(&layers, &Camera::centered(&back, dims, 4, 4));
    assert!(a.pixels.iter().all(|p| *p == Rgba::new(1.0, 0.0, 0.0, 1.0)));
    assert!(b.pixels.iter().all(|p| *p == Rgba::new(0.0, 0.0, 1.0, 1.0)));
}

#[test]
fn depth_order_matches_slab_ranges() {
    let dims = Dims::cube(16);
    let vol = synthesize(SynthKind::GaussianBlob, dims, 1).load_local(0).unwrap();
    let tf = TransferFunction::gray_ramp();
    for axis in Axis::ALL {
        let layers = slab_layers(&vol, &tf, axis, 5, Direction::Positive).unwrap();
        let refs: Vec<&SlotContent> = layers.iter().collect();
        let mut d = [0.0; 3];
        d[axis.index()] = 1.0;
        assert_eq!(depth_order(&refs, d), vec![4, 3, 2, 1, 0]);
        d[axis.index()] = -1.0;
        assert_eq!(depth_order(&refs, d), vec![0, 1, 2, 3, 4]);
    }
}

#[test]
fn two_slabs_equal_monolithic_render() {
    let dims = Dims::cube(16);
    let vol = synthesize(SynthKind::GaussianBlob, dims, 1).load_local(0).unwrap();
    let tf = TransferFunction::gray_ramp();
    for axis in Axis::ALL {
        for dir in [Direction::Positive, Direction::Negative] {
            let mut d = [0.0; 3];
            d[axis.index()] = dir.sign();
            let view = ViewState::new(look_along(d).unwrap()).unwrap();
            let (ua, va) = axis.transverse();
            let cam = Camera::centered(&view, dims, 16, 16);
            let layers = slab_layers(&vol, &tf, axis, 2, dir).unwrap();
            let ibr = composite_layers(&layers.iter().collect::<Vec<_>>(), &cam);
            let whole = slab_layers(&vol, &tf, axis, 1, dir).unwrap();
            let oracle = composite_layers(&[&whole[0]], &cam);
            assert!(ibr.max_abs_diff(&oracle) <= 1e-5, "{axis} {dir:?}");
            // and the monolithic layer is the plain ray cast, resampled
            let direct = render_slab(&vol, &tf, axis, dir).unwrap();
            let mine: f32 = direct.pixels.iter().map(|p| p.alpha()).sum();
            let theirs: f32 = oracle.pixels.iter().map(|p| p.alpha()).sum();
            assert!((mine - theirs).abs() < 1e-3, "{axis} {ua} {va}");
        }
    }
}

#[test]
fn empty_scene_composites_transparent() {
    let scene = SceneGraph::new(3);
    let out = composite(&scene, &Camera::centered(&ViewState::default(), Dims::cube(8), 8, 8));
    assert!(out.pixels.iter().all(|p| *p == Rgba::TRANSPARENT));
}

fn encode_frames(worker: u16, frames: &[u32], dims: Dims) -> Vec<u8> {
    let mut buf = Vec::new();
    for &f in frames {
        let l = layer(worker as usize, f, dims, Axis::Z, 0..dims.nz, |_, _| Rgba::new(0.5, 0.5, 0.5, 0.5));
        protocol::write_frame(&mut buf, FrameType::Light, worker, f, &l.light.encode()).unwrap();
        let h = HeavyPayload { frame: f, pixels: l.rgba8.clone(), geometry: vec![] };
        protocol::write_frame(&mut buf, FrameType::Heavy, worker, f, &h.encode()).unwrap();
    }
    buf
}

#[test]
fn receive_loop_emits_six_events_per_frame() {
    let scene = SceneGraph::new(1);
    let (em, log) = Emitter::memory("h", "viewer");
    let bytes = encode_frames(0, &[0, 1, 2], Dims::cube(4));
    let mut workers = vec![];
    let stats = receive_loop(&bytes[..], &scene, &em, |e| {
        if let ReceiveEvent::Worker(w) = e {
            workers.push(w)
        }
    });
    em.flush();
    assert_eq!((stats.frames, stats.last_frame, stats.error.clone()), (3, Some(2), None));
    assert_eq!(workers, vec![0]);
    assert_eq!(scene.frames(), vec![Some(2)]);
    let recs = log.lock().unwrap().clone();
    assert_eq!(recs.len(), 18);
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r.tag, tags::VIEWER_TAGS[i % 6]);
        assert_eq!(r.frame as usize, i / 6);
    }
}

#[test]
fn truncated_heavy_payload_keeps_previous_frame() {
    let scene = SceneGraph::new(1);
    let (em, log) = Emitter::memory("h", "viewer");
    let mut bytes = encode_frames(0, &[0, 1], Dims::cube(4));
    bytes.truncate(bytes.len() - 10);
    let stats = receive_loop(&bytes[..], &scene, &em, |_| {});
    em.flush();
    assert!(stats.error.is_some());
    assert_eq!(scene.frames(), vec![Some(0)]);
    let recs = log.lock().unwrap().clone();
    let f1: Vec<&str> = recs.iter().filter(|r| r.frame == 1).map(|r| r.tag.as_str()).collect();
    assert!(f1.contains(&tags::V_HEAVYPAYLOAD_START));
    assert!(!f1.contains(&tags::V_HEAVYPAYLOAD_END));
}

#[test]
fn malformed_streams_are_dropped() {
    let scene = SceneGraph::new(1);
    let garbage = [0u8; 40];
    assert!(receive_loop(&garbage[..], &scene, &Emitter::null(), |_| {}).error.is_some());
    let wrong_worker = encode_frames(3, &[0], Dims::cube(2));
    assert!(receive_loop(&wrong_worker[..], &scene, &Emitter::null(), |_| {}).error.is_some());
    assert_eq!(scene.frames(), vec![None]);
}

#[test]
fn slot_swap_is_atomic() {
    let dims = Dims::cube(8);
    let scene = Arc::new(SceneGraph::new(1));
    let done = Arc::new(AtomicBool::new(false));
    let writer = {
        let (scene, done) = (scene.clone(), done.clone());
        thread::spawn(move || {
            for f in 0..400u32 {
                let tag = (f % 256) as f32 / 255.0;
                let l = layer(0, f, dims, Axis::Z, 0..8, move |u, v| if (u, v) == (0, 0) { Rgba::new(tag, 0.0, 0.0, 1.0) } else { Rgba::TRANSPARENT });
                scene.install(l).unwrap();
            }
            done.store(true, Ordering::SeqCst);
        })
    };
    let cam = Camera::centered(&ViewState::default(), dims, 8, 8);
    let mut checks = 0;
    while !done.load(Ordering::SeqCst) || checks == 0 {
        let snap = scene.snapshot();
        if let Some(s) = snap.first() {
            let out = composite_layers(&[s.as_ref()], &cam);
            let corner = (out.get(0, 0).0[0] * 255.0).round() as u32;
            assert_eq!(corner, s.frame() % 256);
            checks += 1;
        }
    }
    writer.join().unwrap();
    assert!(checks > 0);
}

#[test]
fn composite_does_not_wait_for_stalled_channels() {
    let v = Viewer::start(ViewerConfig { workers: 2, raster: (32, 32), ..Default::default() }, Emitter::null()).unwrap();
    // Two connections that never send anything.
    let _a = TcpStream::connect(v.local_addr()).unwrap();
    let _b = TcpStream::connect(v.local_addr()).unwrap();
    v.scene().install(layer(0, 5, Dims::cube(8), Axis::Z, 0..8, |_, _| Rgba::new(0.2, 0.2, 0.2, 0.2))).unwrap();
    let t = Instant::now();
    for _ in 0..20 {
        let out = v.composite_now();
        assert!(out.pixels.iter().any(|p| p.alpha() > 0.0));
    }
    assert!(t.elapsed() < Duration::from_secs(5));
    v.shutdown();
}

#[test]
fn workers_update_slots_independently() {
    let v = Viewer::start(ViewerConfig { workers: 2, ..Default::default() }, Emitter::null()).unwrap();
    let addr = v.local_addr();
    let fast = thread::spawn(move || {
        let mut s = TcpStream::connect(addr).unwrap();
        std::io::Write::write_all(&mut s, &encode_frames(0, &[0, 1, 2, 3, 4], Dims::cube(4))).unwrap();
    });
    let slow = thread::spawn(move || {
        let mut s = TcpStream::connect(addr).unwrap();
        std::io::Write::write_all(&mut s, &encode_frames(1, &[0, 1], Dims::cube(4))).unwrap();
    });
    fast.join().unwrap();
    slow.join().unwrap();
    assert!(v.wait_idle(Duration::from_secs(5)));
    assert_eq!(v.scene().frames(), vec![Some(4), Some(1)]);
    let sum = v.shutdown();
    assert_eq!(sum.frames_received, vec![5, 2]);
    assert!(sum.receive_errors.is_empty());
}

#[test]
fn steering_round_trip_through_live_back_end() {
    let dims = Dims::cube(16);
    let (vem, vlog) = Emitter::memory("h", "viewer");
    let x_aligned = look_along([1.0, 0.0, 0.0]).unwrap();
    let v = Viewer::start(ViewerConfig { workers: 2, initial_orientation: x_aligned, ..Default::default() }, vem.clone()).unwrap();
    let ds = synthesize(SynthKind::MovingBlob, dims, 8);
    let cfg = BackendConfig { workers: 2, initial_axis: Axis::X, inject_render: Duration::from_millis(60), ..Default::default() };
    let endpoint = ViewerEndpoint::Tcp(v.local_addr().to_string());
    let be = thread::spawn(move || run_serial(&cfg, SlabSource::Local(ds), &endpoint, &Emitter::null()).unwrap());

    assert!(v.wait_for_frame(1, Duration::from_secs(10)));
    let small = look_along([10f64.to_radians().cos(), 10f64.to_radians().sin(), 0.0]).unwrap();
    assert!(v.update_view(small).unwrap().feedback.is_none());
    let big = look_along([50f64.to_radians().cos(), 50f64.to_radians().sin(), 0.0]).unwrap();
    assert_eq!(v.update_view(big).unwrap().axis, Axis::Y);
    assert!(v.update_view(big).unwrap().feedback.is_none());
    let report = be.join().unwrap();
    assert!(v.wait_idle(Duration::from_secs(5)));
    let sum = v.shutdown();
    vem.flush();

    assert_eq!(sum.feedback_sent, 1);
    assert_eq!(report.feedback_messages, 1);
    let switch = report.axis_by_timestep.iter().position(|&a| a == Axis::Y).expect("axis switched");
    assert!(report.axis_by_timestep[..switch].iter().all(|&a| a == Axis::X));
    assert!(report.axis_by_timestep[switch..].iter().all(|&a| a == Axis::Y));
    assert_eq!(sum.last_frames, vec![Some(7), Some(7)]);
    let fb = vlog.lock().unwrap().iter().filter(|r| r.tag == tags::V_AXIS_FEEDBACK).count();
    assert_eq!(fb, 1);
}

#[test]
fn websocket_bridge_pushes_slots_and_accepts_views() {
    let v = Viewer::start(
        ViewerConfig { workers: 2, ui_listen: Some("127.0.0.1:0".into()), ..Default::default() },
        Emitter::null(),
    )
    .unwrap();
    let dims = Dims::cube(4);
    v.scene().install(layer(1, 3, dims, Axis::Z, 2..4, |_, _| Rgba::new(0.0, 0.5, 0.0, 0.5))).unwrap();
    let url = format!("ws://{}", v.ui_addr().unwrap());
    let (mut ws, _) = tungstenite::connect(url).unwrap();
    let head = match ws.read().unwrap() {
        tungstenite::Message::Text(t) => serde_json::from_str::<SlotHeader>(&t).unwrap(),
        other => panic!("expected header, got {other:?}"),
    };
    assert_eq!((head.frame, head.worker, head.width, head.height, head.axis.as_str()), (3, 1, 4, 4, "Z"));
    assert_eq!(head.placement.len(), 12);
    match ws.read().unwrap() {
        tungstenite::Message::Binary(b) => assert_eq!(b.len(), 4 * 4 * 4),
        other => panic!("expected texture, got {other:?}"),
    }
    let m = rotation(Axis::X, 0.3);
    let flat: Vec<f64> = m.iter().flatten().copied().collect();
    ws.send(tungstenite::Message::Text(serde_json::json!({"type": "view", "m": flat}).to_string())).unwrap();
    let deadline = Instant::now() + Duration::from_secs(5);
    while v.view().orientation() != &m {
        assert!(Instant::now() < deadline, "view update not applied");
        thread::sleep(Duration::from_millis(10));
    }
    // a new frame in slot 0 is pushed as well
    v.scene().install(layer(0, 4, dims, Axis::Z, 0..2, |_, _| Rgba::TRANSPARENT)).unwrap();
    let head = loop {
        if let tungstenite::Message::Text(t) = ws.read().unwrap() {
            break serde_json::from_str::<SlotHeader>(&t).unwrap();
        }
    };
    assert_eq!((head.worker, head.frame), (0, 4));
    ws.close(None).ok();
    v.shutdown();
}

#[test]
fn headless_snapshots_every_k_frames() {
    let dir = tempfile::tempdir().unwrap();
    let v = Viewer::start(
        ViewerConfig {
            workers: 1,
            raster: (32, 32),
            headless_out: Some(dir.path().to_path_buf()),
            snapshot_every: 2,
            volume_dims: Some(Dims::cube(8)),
            ..Default::default()
        },
        Emitter::null(),
    )
    .unwrap();
    let ds = synthesize(SynthKind::GaussianBlob, Dims::cube(8), 5);
    let cfg = BackendConfig { inject_render: Duration::from_millis(40), ..Default::default() };
    run_serial(&cfg, SlabSource::Local(ds), &ViewerEndpoint::Tcp(v.local_addr().to_string()), &Emitter::null()).unwrap();
    assert!(v.wait_idle(Duration::from_secs(5)));
    thread::sleep(Duration::from_millis(50));
    let sum = v.shutdown();
    let names: Vec<String> = sum.snapshots.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["frame_00000.png", "frame_00002.png", "frame_00004.png"]);
    let img = image::open(&sum.snapshots[0]).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (32, 32));
    assert!(img.pixels().any(|p| p.0[0] > 0));
}

#[test]
fn artifact_error_grows_off_axis() {
    let dims = Dims::cube(16);
    let vol = synthesize(SynthKind::GaussianBlob, dims, 1).load_local(0).unwrap();
    let tf = TransferFunction::gray_ramp();
    let e: Vec<f64> = [0.0, 16.0, 32.0].iter().map(|&a| artifact_error(&vol, &tf, 4, a).unwrap()).collect();
    assert!(e[0] <= 1e-5, "{e:?}");
    assert!(e[0] <= e[1] && e[1] <= e[2], "{e:?}");
    assert!(e[2] > 0.0);
    for a in [0.0, 20.0] {
        assert!(artifact_error(&vol, &tf, 1, a).unwrap() >= 0.0);
    }
    // every slice its own slab reproduces the reference
    assert!(artifact_error(&vol, &tf, 16, 30.0).unwrap() <= 1e-6);
}

#[test]
fn view_state_validation() {
    let mut s = ViewState::default();
    assert_eq!(s.direction(), [0.0, 0.0, 1.0]);
    assert!(s.update_view([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0 + 1e-5]]).is_err());
    assert!(s.update_view(IDENTITY).unwrap().feedback.is_none());
    let d = decompose(Dims::cube(4), Axis::Z, 2).unwrap();
    assert_eq!(d.len(), 2);
}

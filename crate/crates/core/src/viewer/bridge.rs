//! Websocket bridge to a browser UI: pushes slot updates as a JSON header
//! plus one binary message, and accepts `{"type":"view","m":[9 floats]}`.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, warn};
use tungstenite::{Message, WebSocket};

use super::scene::{SceneGraph, SlotContent};
use super::view::Mat3;
use super::ViewerError;

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SlotHeader {
    pub frame: u32,
    pub worker: usize,
    pub width: u32,
    pub height: u32,
    pub axis: String,
    pub placement: Vec<f32>,
}

impl SlotHeader {
    pub fn of(c: &SlotContent) -> Self {
        SlotHeader {
            frame: c.light.frame,
            worker: c.worker,
            width: c.light.width,
            height: c.light.height,
            axis: c.light.axis.to_string(),
            placement: c.light.placement.iter().flatten().copied().collect(),
        }
    }
}

#[derive(serde::Deserialize)]
struct Inbound {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    m: Vec<f64>,
}

/// Parses a UI message; `Ok(None)` for well-formed messages of other types.
pub fn parse_view_message(text: &str) -> Result<Option<Mat3>, ViewerError> {
    let msg: Inbound = serde_json::from_str(text).map_err(|e| ViewerError::Malformed(format!("ui message: {e}")))?;
    if msg.kind != "view" {
        return Ok(None);
    }
    if msg.m.len() != 9 {
        return Err(ViewerError::Malformed(format!("view matrix has {} entries", msg.m.len())));
    }
    Ok(Some(std::array::from_fn(|i| std::array::from_fn(|j| msg.m[3 * i + j]))))
}

pub struct Bridge {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl Bridge {
    pub fn start(listen: &str, scene: Arc<SceneGraph>, views: Sender<Mat3>) -> Result<Bridge, ViewerError> {
        let listener = TcpListener::bind(listen).map_err(|source| ViewerError::Bind { addr: listen.to_string(), source })?;
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop2 = stop.clone();
        let acceptor = thread::spawn(move || {
            let mut clients = Vec::new();
            while !stop2.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((s, peer)) => {
                        debug!("ui client {peer}");
                        let (scene, views, stop) = (scene.clone(), views.clone(), stop2.clone());
                        clients.push(thread::spawn(move || {
                            if let Err(e) = serve_client(s, &scene, &views, &stop) {
                                debug!("ui client {peer} closed: {e}");
                            }
                        }));
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                    Err(e) => {
                        warn!("ui accept failed: {e}");
                        thread::sleep(POLL);
                    }
                }
            }
            for c in clients {
                let _ = c.join();
            }
        });
        Ok(Bridge { addr, stop, acceptor: Some(acceptor) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Bridge {
    fn drop(&mut self) {
        self.stop_now();
    }
}

fn serve_client(stream: TcpStream, scene: &SceneGraph, views: &Sender<Mat3>, stop: &AtomicBool) -> Result<(), ViewerError> {
    stream.set_nonblocking(false)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| ViewerError::Bridge(e.to_string()))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let mut sent: Vec<Option<(u32, *const SlotContent)>> = vec![None; scene.slot_count()];
    let ws_err = |e: tungstenite::Error| ViewerError::Bridge(e.to_string());
    while !stop.load(Ordering::SeqCst) {
        for (w, last) in sent.iter_mut().enumerate() {
            let Some(c) = scene.slot(w) else { continue };
            let key = (c.frame(), Arc::as_ptr(&c));
            if *last == Some(key) {
                continue;
            }
            let header = serde_json::to_string(&SlotHeader::of(&c)).expect("header serializes");
            ws.send(Message::Text(header)).map_err(ws_err)?;
            ws.send(Message::Binary(c.rgba8.clone())).map_err(ws_err)?;
            *last = Some(key);
        }
        match ws.read() {
            Ok(Message::Text(t)) => match parse_view_message(&t) {
                Ok(Some(m)) => {
                    let _ = views.send(m);
                }
                Ok(None) => {}
                Err(e) => warn!("ignoring ui message: {e}"),
            },
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(ws_err(e)),
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}

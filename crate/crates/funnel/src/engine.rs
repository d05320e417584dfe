//! Live session owner: the tick/render thread, the segmenting thread, and
//! the single-writer entry point every endpoint funnels through.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{Receiver, SyncSender};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use bytes::Bytes;
use serde_json::json;
use streamfunnel::fanout::{SegmentWindow, Segmenter};
use streamfunnel::media::{encode_record, FLAG_RLE, FLAG_THUMBNAIL};
use streamfunnel::render::Frame;
use streamfunnel::scenario::ScenarioEvent;
use streamfunnel::session::{
    Applied, ChatMessage, CommandError, CommandRequest, CommandResult, InteractionCommand, LogEntry, Role,
    Session, SessionError, SignalMessage,
};
use tokio::sync::{broadcast, mpsc};

use crate::config::Config;
use crate::metrics::Metrics;

/// Client id of the in-process VR application.
pub const VR_HOST_ID: &str = "unity";

struct Live {
    session: Session,
    log: Option<BufWriter<File>>,
    entries: u64,
    first_error: Option<u64>,
}

pub struct Engine {
    pub config: Config,
    live: Mutex<Live>,
    pub window: SegmentWindow,
    /// Encoded frame records for co-host `/media` sockets.
    pub media: broadcast::Sender<Bytes>,
    /// Chat ledger updates as JSON text.
    pub chat_feed: broadcast::Sender<String>,
    peers: Mutex<HashMap<String, mpsc::UnboundedSender<SignalMessage>>>,
    pub metrics: Metrics,
    started: Instant,
    stopping: AtomicBool,
    dropped_segments: AtomicU64,
}

impl Engine {
    pub fn new(config: Config, session: Session, log: Option<File>, metrics: Metrics) -> Engine {
        let window = SegmentWindow::new(&config.fanout());
        Engine {
            config,
            live: Mutex::new(Live { session, log: log.map(BufWriter::new), entries: 0, first_error: None }),
            window,
            media: broadcast::channel(64).0,
            chat_feed: broadcast::channel(1024).0,
            peers: Mutex::new(HashMap::new()),
            metrics,
            started: Instant::now(),
            stopping: AtomicBool::new(false),
            dropped_segments: AtomicU64::new(0),
        }
    }

    /// Milliseconds since start; the session clock and frame pts follow it.
    pub fn wall_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    pub fn stop(&self) {
        self.stopping.store(true, Ordering::SeqCst);
    }

    pub fn stopping(&self) -> bool {
        self.stopping.load(Ordering::SeqCst)
    }

    pub fn dropped_segments(&self) -> u64 {
        self.dropped_segments.load(Ordering::Relaxed)
    }

    /// Read access to the live session.
    pub fn read<T>(&self, f: impl FnOnce(&Session) -> T) -> T {
        f(&self.live.lock().unwrap().session)
    }

    /// Index of the first input that failed, as `replay` would report it.
    pub fn first_error_index(&self) -> Option<u64> {
        self.live.lock().unwrap().first_error
    }

    pub fn apply(&self, entry: LogEntry) -> Result<Applied, SessionError> {
        let mut live = self.live.lock().unwrap();
        if let Some(log) = &mut live.log {
            let _ = serde_json::to_writer(&mut *log, &entry);
            let _ = log.write_all(b"\n");
        }
        let index = live.entries;
        live.entries += 1;
        let out = live.session.apply(&entry);
        if out.is_err() && live.first_error.is_none() {
            live.first_error = Some(index);
            self.metrics.emit("log_error", json!({ "index": index }));
        }
        out
    }

    pub fn flush_log(&self) {
        if let Some(log) = &mut self.live.lock().unwrap().log {
            let _ = log.flush();
        }
    }

    // Signaling.

    /// Binds a socket to `id`. Fails when another live socket holds it.
    pub fn attach_peer(&self, id: &str, tx: mpsc::UnboundedSender<SignalMessage>) -> bool {
        if id == VR_HOST_ID {
            return false;
        }
        let mut peers = self.peers.lock().unwrap();
        if peers.get(id).is_some_and(|p| !p.is_closed()) {
            return false;
        }
        peers.insert(id.to_owned(), tx);
        true
    }

    pub fn detach_peer(&self, id: &str) {
        self.peers.lock().unwrap().remove(id);
        if let Ok(Applied::Signal(out)) = self.apply(LogEntry::Disconnect { client_id: id.to_owned() }) {
            self.deliver(out);
        }
    }

    pub fn signal(&self, from: &str, msg: SignalMessage) {
        if let Ok(Applied::Signal(out)) = self.apply(LogEntry::Signal { client_id: from.to_owned(), msg }) {
            self.deliver(out);
        }
    }

    fn deliver(&self, out: Vec<(String, SignalMessage)>) {
        for (to, msg) in out {
            if to == VR_HOST_ID {
                self.vr_host_receive(msg);
                continue;
            }
            let cohost_ready = matches!(msg, SignalMessage::RoleAssigned { role: Role::CoHost, .. });
            if let Some(tx) = self.peers.lock().unwrap().get(&to) {
                let _ = tx.send(msg);
            }
            if cohost_ready {
                // The VR side initiates the peer connection.
                self.signal(VR_HOST_ID, SignalMessage::Offer { sdp_blob: format!("v=0\r\no={VR_HOST_ID} {} 1 IN IP4 127.0.0.1\r\ns=vr\r\n", self.wall_ms()) });
            }
        }
    }

    /// The simulated VR application answers offers and trickles one
    /// candidate after an answer.
    fn vr_host_receive(&self, msg: SignalMessage) {
        match msg {
            SignalMessage::Offer { .. } => {
                self.signal(VR_HOST_ID, SignalMessage::Answer { sdp_blob: format!("v=0\r\no={VR_HOST_ID} 0 1 IN IP4 127.0.0.1\r\n") });
            }
            SignalMessage::Answer { .. } => {
                self.signal(VR_HOST_ID, SignalMessage::Candidate { blob: "candidate:0 1 udp 2122260223 127.0.0.1 40000 typ host".into() });
            }
            _ => {}
        }
    }

    pub fn join_vr_host(&self) {
        self.signal(VR_HOST_ID, SignalMessage::Join { requested_role: Role::VrHost, client_id: VR_HOST_ID.into() });
    }

    // Commands and chat.

    pub fn command(&self, req: CommandRequest) -> Result<CommandResult, CommandError> {
        let t0 = Instant::now();
        let relay = (req.cmd == "relay_chat").then(|| req.params.get("msg_id").and_then(|v| v.as_u64())).flatten();
        let out = match self.apply(LogEntry::Command(req.clone())) {
            Ok(Applied::Command(r)) => Ok(r),
            Err(SessionError::Command(e)) => Err(e),
            other => unreachable!("command produced {other:?}"),
        };
        let handle_ms = t0.elapsed().as_secs_f64() * 1000.0;
        self.metrics.emit("command", json!({ "cmd": req.cmd, "ok": out.is_ok(), "handle_ms": handle_ms }));
        if let (Ok(_), Some(id)) = (&out, relay) {
            if let Some(m) = self.read(|s| s.chat().get(id).cloned()) {
                self.publish_chat(&m);
            }
        }
        out
    }

    pub fn command_typed(&self, token: &str, cmd: &InteractionCommand) -> Result<CommandResult, CommandError> {
        self.command(CommandRequest::new(token, cmd))
    }

    pub fn chat(&self, token: Option<String>, client_id: &str, text: &str) -> Result<u64, SessionError> {
        let applied = self.apply(LogEntry::Chat { token, client_id: client_id.to_owned(), text: text.to_owned() })?;
        let Applied::Chat(id) = applied else { unreachable!("chat produced {applied:?}") };
        if let Some(m) = self.read(|s| s.chat().get(id).cloned()) {
            self.publish_chat(&m);
        }
        Ok(id)
    }

    fn publish_chat(&self, m: &ChatMessage) {
        let _ = self.chat_feed.send(serde_json::to_string(m).expect("chat message serializes"));
    }

    // Threads.

    /// Advances the session in step with wall time, renders the in-focus
    /// feed and hands frames to the segmenter. Returns when stopped.
    pub fn run_ticker(&self, frames: SyncSender<Frame>) {
        let period = Duration::from_secs_f64(1.0 / self.config.tick_hz as f64);
        let thumb_period_ms = (1000.0 / self.config.thumbnail_hz) as u64;
        let mut next_thumb_ms = 0;
        let mut n: u32 = 0;
        while !self.stopping() {
            n += 1;
            let deadline = self.started + period * n;
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            } else if now - deadline > period {
                // Fell behind; skip ahead rather than burst.
                n = (self.started.elapsed().as_secs_f64() / period.as_secs_f64()) as u32;
            }
            let now_ms = self.wall_ms();
            let dt_ms = now_ms - self.read(|s| s.clock_ms());
            let outcomes = match self.apply(LogEntry::Tick { dt_ms }) {
                Ok(Applied::Tick(o)) => o,
                other => unreachable!("tick produced {other:?}"),
            };
            let (snapshot, on_air) = self.read(|s| (s.snapshot(), s.on_air()));
            for o in &outcomes {
                if let ScenarioEvent::Speak { text, .. } = &o.event.event {
                    let to = streamfunnel::session::route_audio(Role::VrHost, on_air);
                    self.metrics.emit("speak", json!({ "t": o.event.t, "text": text, "routed_to": to }));
                }
                if let Some(reason) = &o.rejected {
                    self.metrics.emit("scenario_rejected", json!({ "t": o.event.t, "reason": reason }));
                }
            }

            let t0 = Instant::now();
            let frame = snapshot.spectator_frame();
            let render_ms = t0.elapsed().as_secs_f64() * 1000.0;
            if self.media.receiver_count() > 0 {
                if let Ok(rec) = encode_record(&frame, snapshot.active_rig.camera_id(), FLAG_RLE) {
                    let _ = self.media.send(Bytes::from(rec));
                }
                if now_ms >= next_thumb_ms {
                    next_thumb_ms = now_ms + thumb_period_ms;
                    for thumb in snapshot.thumbnails() {
                        if let Ok(rec) = encode_record(&thumb, thumb.camera_label.camera_id(), FLAG_RLE | FLAG_THUMBNAIL) {
                            let _ = self.media.send(Bytes::from(rec));
                        }
                    }
                }
            }
            self.metrics.emit("tick", json!({ "clock_ms": now_ms, "dt_ms": dt_ms, "render_ms": render_ms }));
            if frames.send(frame).is_err() {
                break;
            }
        }
    }

    /// Cuts segments from rendered frames and publishes them.
    pub fn run_segmenter(&self, frames: Receiver<Frame>) {
        let mut seg = Segmenter::new(self.config.fanout()).expect("validated fan-out config");
        for frame in frames {
            let t0 = Instant::now();
            match seg.ingest(frame) {
                Ok(Some(s)) => {
                    let sizes: serde_json::Map<_, _> = s.rungs.iter().map(|r| (r.rung.clone(), json!(r.bytes.len()))).collect();
                    self.metrics.emit(
                        "segment",
                        json!({
                            "seq": s.seq,
                            "duration_ms": s.duration_ms,
                            "first_pts": s.first_pts,
                            "cut_ms": self.wall_ms(),
                            "package_ms": t0.elapsed().as_secs_f64() * 1000.0,
                            "bytes": sizes,
                        }),
                    );
                    self.window.publish(s);
                }
                Ok(None) => {}
                Err(e) => {
                    self.dropped_segments.store(seg.dropped_segments(), Ordering::Relaxed);
                    self.metrics.emit("segment_error", json!({ "error": e.to_string() }));
                }
            }
        }
    }
}

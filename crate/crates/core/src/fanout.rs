//! Buffered multi-resolution distribution of the broadcast feed.
//!
//! Frames are cut into fixed-duration segments, downscaled to every ladder
//! rung, hashed, and published into a sliding window. Readers take cheap
//! snapshots of the window, so eviction never disturbs an in-flight fetch.

use std::collections::VecDeque;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::media::{encode_record, pack_records, FLAG_RLE};
use crate::render::{downscale_box, Frame};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FanoutError {
    #[error("pts went backwards from {last} to {got}; pending segment dropped")]
    PtsRegression { last: u64, got: u64 },
    #[error("frame is {got_w}x{got_h}, stream source is {want_w}x{want_h}")]
    FrameSize { got_w: u32, got_h: u32, want_w: u32, want_h: u32 },
    #[error("invalid fan-out config: {0}")]
    Config(String),
    #[error("unknown rung {0:?}")]
    UnknownRung(String),
    #[error("segment {0} has left the window")]
    Gone(u64),
    #[error("segment {0} does not exist yet")]
    NotFound(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LadderRung {
    pub name: String,
    pub width: u32,
    pub height: u32,
}

impl LadderRung {
    pub fn new(name: &str, width: u32, height: u32) -> Self {
        LadderRung { name: name.to_owned(), width, height }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoutConfig {
    pub source_width: u32,
    pub source_height: u32,
    pub fps: u32,
    pub segment_duration_ms: u64,
    pub window: usize,
    pub rungs: Vec<LadderRung>,
    /// Run-length encode frame payloads inside segments.
    pub compress: bool,
}

impl Default for FanoutConfig {
    fn default() -> Self {
        FanoutConfig {
            source_width: 640,
            source_height: 360,
            fps: 30,
            segment_duration_ms: 2000,
            window: 10,
            rungs: vec![LadderRung::new("full", 640, 360), LadderRung::new("half", 320, 180)],
            compress: true,
        }
    }
}

impl FanoutConfig {
    pub fn validate(&self) -> Result<(), FanoutError> {
        let err = |m: String| Err(FanoutError::Config(m));
        if self.fps == 0 || self.segment_duration_ms == 0 || self.window == 0 {
            return err("fps, segment duration and window must be positive".into());
        }
        if self.rungs.is_empty() {
            return err("at least one rung is required".into());
        }
        for (i, r) in self.rungs.iter().enumerate() {
            if r.width == 0 || r.height == 0 || self.source_width % r.width != 0 || self.source_height % r.height != 0 {
                return err(format!(
                    "rung {} ({}x{}) must evenly divide the {}x{} source",
                    r.name, r.width, r.height, self.source_width, self.source_height
                ));
            }
            if self.source_width / r.width != self.source_height / r.height {
                return err(format!("rung {} changes the aspect ratio", r.name));
            }
            if r.name.is_empty() || !r.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return err(format!("rung name {:?} is not URL-safe", r.name));
            }
            if self.rungs[..i].iter().any(|o| o.name == r.name) {
                return err(format!("duplicate rung {}", r.name));
            }
        }
        Ok(())
    }

    pub fn frame_interval_ms(&self) -> f64 {
        1000.0 / self.fps as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RungPayload {
    pub rung: String,
    pub bytes: Arc<[u8]>,
    pub content_hash: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamSegment {
    /// 1-based, strictly increasing.
    pub seq: u64,
    pub duration_ms: u64,
    pub first_pts: u64,
    pub frame_count: usize,
    pub rungs: Vec<RungPayload>,
}

impl StreamSegment {
    pub fn rung(&self, name: &str) -> Option<&RungPayload> {
        self.rungs.iter().find(|r| r.rung == name)
    }
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Accumulates frames and cuts segments on a fixed pts grid.
#[derive(Debug)]
pub struct Segmenter {
    config: FanoutConfig,
    pending: Vec<Frame>,
    boundary: Option<u64>,
    last_pts: Option<u64>,
    next_seq: u64,
    dropped: u64,
}

impl Segmenter {
    pub fn new(config: FanoutConfig) -> Result<Self, FanoutError> {
        config.validate()?;
        Ok(Segmenter { config, pending: Vec::new(), boundary: None, last_pts: None, next_seq: 1, dropped: 0 })
    }

    pub fn config(&self) -> &FanoutConfig {
        &self.config
    }

    /// Segments dropped because of pts regressions.
    pub fn dropped_segments(&self) -> u64 {
        self.dropped
    }

    pub fn pending_frames(&self) -> usize {
        self.pending.len()
    }

    /// Adds a frame; returns the finished segment when this frame completes
    /// one. A segment ends with the last frame whose successor is expected
    /// at or past the segment boundary, with half a frame of jitter allowed.
    pub fn ingest(&mut self, frame: Frame) -> Result<Option<StreamSegment>, FanoutError> {
        let cfg = &self.config;
        if frame.width != cfg.source_width || frame.height != cfg.source_height {
            return Err(FanoutError::FrameSize {
                got_w: frame.width,
                got_h: frame.height,
                want_w: cfg.source_width,
                want_h: cfg.source_height,
            });
        }
        if let Some(last) = self.last_pts {
            if frame.pts < last {
                self.pending.clear();
                self.boundary = None;
                self.last_pts = None;
                self.dropped += 1;
                return Err(FanoutError::PtsRegression { last, got: frame.pts });
            }
        }
        let interval = cfg.frame_interval_ms();
        let seg_ms = cfg.segment_duration_ms;
        let boundary = *self.boundary.get_or_insert(frame.pts + seg_ms);
        self.last_pts = Some(frame.pts);
        let pts = frame.pts;
        self.pending.push(frame);
        if (pts as f64) + 1.5 * interval < boundary as f64 {
            return Ok(None);
        }
        let mut next = boundary;
        while (next as f64) < pts as f64 + 1.5 * interval {
            next += seg_ms;
        }
        self.boundary = Some(next);
        let frames = std::mem::take(&mut self.pending);
        let seq = self.next_seq;
        self.next_seq += 1;
        Ok(Some(package(&self.config, seq, &frames)))
    }
}

/// Downscales, encodes and hashes a run of frames for every rung.
pub fn package(cfg: &FanoutConfig, seq: u64, frames: &[Frame]) -> StreamSegment {
    let first_pts = frames.first().map_or(0, |f| f.pts);
    let last_pts = frames.last().map_or(0, |f| f.pts);
    let duration_ms = (last_pts as f64 - first_pts as f64 + cfg.frame_interval_ms()).round() as u64;
    let flags = if cfg.compress { FLAG_RLE } else { 0 };
    let rungs = cfg
        .rungs
        .iter()
        .map(|r| {
            let records: Vec<Vec<u8>> = frames
                .iter()
                .map(|f| {
                    let scaled = downscale_box(f, r.width, r.height).expect("validated rung divides source");
                    encode_record(&scaled, f.camera_label.camera_id(), flags).expect("rung fits a record")
                })
                .collect();
            let bytes = pack_records(records.iter().map(Vec::as_slice));
            let content_hash = sha256(&bytes);
            RungPayload { rung: r.name.clone(), bytes: bytes.into(), content_hash }
        })
        .collect();
    StreamSegment { seq, duration_ms, first_pts, frame_count: frames.len(), rungs }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaylistEntry {
    pub seq: u64,
    pub duration_ms: u64,
    pub url: String,
}

/// Playlist document served at `/live/{rung}/playlist.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Playlist {
    pub version: u32,
    pub target_duration_s: f64,
    pub media_sequence: u64,
    pub segments: Vec<PlaylistEntry>,
}

impl Playlist {
    pub fn newest(&self) -> Option<u64> {
        self.segments.last().map(|s| s.seq)
    }
}

pub fn segment_url(rung: &str, seq: u64) -> String {
    format!("/live/{rung}/seg/{seq}")
}

#[derive(Debug, Clone, Default)]
pub struct WindowSnapshot {
    pub segments: VecDeque<Arc<StreamSegment>>,
    /// Next sequence number to be published.
    pub next_seq: u64,
}

/// Sliding window of the last `W` segments, swapped atomically on publish.
#[derive(Debug)]
pub struct SegmentWindow {
    capacity: usize,
    target_duration_s: f64,
    rungs: Vec<String>,
    state: RwLock<Arc<WindowSnapshot>>,
}

impl SegmentWindow {
    pub fn new(cfg: &FanoutConfig) -> Self {
        SegmentWindow {
            capacity: cfg.window.max(1),
            target_duration_s: cfg.segment_duration_ms as f64 / 1000.0,
            rungs: cfg.rungs.iter().map(|r| r.name.clone()).collect(),
            state: RwLock::new(Arc::new(WindowSnapshot { segments: VecDeque::new(), next_seq: 1 })),
        }
    }

    pub fn rungs(&self) -> &[String] {
        &self.rungs
    }

    pub fn snapshot(&self) -> Arc<WindowSnapshot> {
        self.state.read().expect("window lock").clone()
    }

    pub fn publish(&self, segment: StreamSegment) {
        let mut guard = self.state.write().expect("window lock");
        let mut next = (**guard).clone();
        next.next_seq = segment.seq + 1;
        next.segments.push_back(Arc::new(segment));
        while next.segments.len() > self.capacity {
            next.segments.pop_front();
        }
        *guard = Arc::new(next);
    }

    fn check_rung(&self, rung: &str) -> Result<(), FanoutError> {
        if self.rungs.iter().any(|r| r == rung) {
            Ok(())
        } else {
            Err(FanoutError::UnknownRung(rung.to_owned()))
        }
    }

    pub fn playlist(&self, rung: &str) -> Result<Playlist, FanoutError> {
        self.check_rung(rung)?;
        let snap = self.snapshot();
        Ok(Playlist {
            version: 1,
            target_duration_s: self.target_duration_s,
            media_sequence: snap.segments.front().map_or(snap.next_seq, |s| s.seq),
            segments: snap
                .segments
                .iter()
                .map(|s| PlaylistEntry { seq: s.seq, duration_ms: s.duration_ms, url: segment_url(rung, s.seq) })
                .collect(),
        })
    }

    pub fn serve_playlist(&self, rung: &str) -> Result<String, FanoutError> {
        Ok(serde_json::to_string(&self.playlist(rung)?).expect("playlist serializes"))
    }

    pub fn serve_segment(&self, rung: &str, seq: u64) -> Result<RungPayload, FanoutError> {
        self.check_rung(rung)?;
        let snap = self.snapshot();
        if seq >= snap.next_seq || seq == 0 {
            return Err(FanoutError::NotFound(seq));
        }
        let seg = snap.segments.iter().find(|s| s.seq == seq).ok_or(FanoutError::Gone(seq))?;
        Ok(seg.rung(rung).expect("every segment carries every rung").clone())
    }
}

//! Spectator load harness: many simulated HLS-style players plus an
//! optional co-host probe timing command round trips in the same run.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use streamfunnel::fanout::{hex, sha256, Playlist};
use streamfunnel::media::{unpack_records, RecordHeader};
use streamfunnel::session::{Role, SignalMessage};
use thiserror::Error;
use tokio::sync::{watch, Notify};
use tokio_tungstenite::tungstenite::Message as WsMessage;

#[derive(Debug, Error)]
pub enum LoadSimError {
    #[error("server unreachable at {url}: {message}")]
    Unreachable { url: String, message: String },
    #[error("{0}")]
    Protocol(String),
}

#[derive(Debug, Clone)]
pub struct LoadSimOptions {
    pub base_url: String,
    pub spectators: usize,
    pub duration_s: f64,
    /// Defaults to the server's configured offset.
    pub live_edge_offset: Option<u64>,
    pub rung: String,
    pub poll_interval_ms: u64,
    pub cohost_probe: bool,
    pub probe_interval_ms: u64,
}

impl LoadSimOptions {
    pub fn new(base_url: &str, spectators: usize, duration_s: f64) -> Self {
        LoadSimOptions {
            base_url: base_url.trim_end_matches('/').to_owned(),
            spectators,
            duration_s,
            live_edge_offset: None,
            rung: "half".into(),
            poll_interval_ms: 500,
            cohost_probe: false,
            probe_interval_ms: 250,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(samples: &[f64]) -> Stats {
        if samples.is_empty() {
            return Stats::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
        let p95 = s[((n as f64 * 0.95).ceil() as usize).clamp(1, n) - 1];
        Stats { count: n, mean: s.iter().sum::<f64>() / n as f64, median, p95, min: s[0], max: s[n - 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectatorReport {
    pub id: usize,
    /// Latency when the first frame was shown.
    pub startup_latency_s: f64,
    /// Latency sampled at the first frame of every played segment.
    pub latency_s: Stats,
    pub stall_count: u32,
    pub fetch_errors: u32,
    pub segments_played: usize,
    /// `(seq, sha256 hex)` of every segment received.
    pub hash_set: Vec<(u64, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub samples: usize,
    pub errors: usize,
    pub rtt_ms: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub stalls_total: u64,
    pub fetch_errors_total: u64,
    pub identical_hash_sets: bool,
    pub latency_s: Stats,
    /// `[offset * duration, (offset + 1) * duration + poll interval]`.
    pub latency_law_s: [f64; 2],
    pub within_latency_law: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub spectators: usize,
    pub duration_s: f64,
    pub rung: String,
    pub segment_duration_ms: u64,
    pub live_edge_offset: u64,
    pub poll_interval_ms: u64,
    pub baseline_seq: u64,
    pub segments_per_spectator: u64,
    pub wall_s: f64,
    pub summary: Summary,
    pub cohost_probe: Option<ProbeReport>,
    pub per_spectator: Vec<SpectatorReport>,
}

/// Estimates `server_wall_ms - local_ms` from the lowest-RTT of a few probes.
struct Clock {
    base: Instant,
    offset_ms: f64,
}

impl Clock {
    async fn sync(http: &reqwest::Client, base_url: &str) -> Result<Clock, LoadSimError> {
        let base = Instant::now();
        let mut best: Option<(f64, f64)> = None;
        for _ in 0..7 {
            let t0 = base.elapsed().as_secs_f64() * 1000.0;
            let v: Value = get_json(http, &format!("{base_url}/api/clock")).await?;
            let t1 = base.elapsed().as_secs_f64() * 1000.0;
            let server = v["wall_ms"].as_f64().ok_or_else(|| LoadSimError::Protocol("clock without wall_ms".into()))?;
            let rtt = t1 - t0;
            if best.is_none_or(|(r, _)| rtt < r) {
                best = Some((rtt, server - (t0 + t1) / 2.0));
            }
        }
        Ok(Clock { base, offset_ms: best.unwrap().1 })
    }

    fn server_ms_at(&self, t: Instant) -> f64 {
        t.duration_since(self.base).as_secs_f64() * 1000.0 + self.offset_ms
    }
}

async fn get_json<T: for<'de> Deserialize<'de>>(http: &reqwest::Client, url: &str) -> Result<T, LoadSimError> {
    let r = http.get(url).send().await.map_err(|e| LoadSimError::Unreachable { url: url.into(), message: e.to_string() })?;
    if !r.status().is_success() {
        return Err(LoadSimError::Protocol(format!("GET {url}: {}", r.status())));
    }
    r.json().await.map_err(|e| LoadSimError::Protocol(format!("GET {url}: {e}")))
}

#[derive(Debug, Clone)]
struct Fetched {
    first_pts: u64,
    duration_ms: u64,
    hash: String,
}

/// Segments a player fetches beyond the one it is playing.
const READ_AHEAD: u64 = 3;

#[derive(Default)]
struct Buffer {
    segments: Mutex<BTreeMap<u64, Fetched>>,
    arrived: Notify,
    /// Sequence number being played; 0 before playback starts.
    playing: AtomicU64,
}

async fn fetch_segment(http: &reqwest::Client, url: &str) -> Result<(u64, String), String> {
    let r = http.get(url).send().await.map_err(|e| e.to_string())?;
    if !r.status().is_success() {
        return Err(format!("{url}: {}", r.status()));
    }
    let declared = r.headers().get("x-content-sha256").and_then(|v| v.to_str().ok()).map(str::to_owned);
    let body = r.bytes().await.map_err(|e| e.to_string())?;
    let hash = hex(&sha256(&body));
    if declared.as_deref() != Some(hash.as_str()) {
        return Err(format!("{url}: body hash {hash} does not match header {declared:?}"));
    }
    let records = unpack_records(&body).map_err(|e| e.to_string())?;
    let first = records.first().ok_or_else(|| format!("{url}: empty segment"))?;
    let header = RecordHeader::parse(first).map_err(|e| e.to_string())?;
    Ok((header.pts_ms, hash))
}

/// Polls the playlist and fetches `first..first+count` in order.
async fn fetcher(http: reqwest::Client, opts: Arc<LoadSimOptions>, first: u64, count: u64, buf: Arc<Buffer>) -> u32 {
    let mut next = first;
    let mut errors = 0;
    let playlist_url = format!("{}/live/{}/playlist.json", opts.base_url, opts.rung);
    let mut failures = 0;
    while next < first + count {
        match get_json::<Playlist>(&http, &playlist_url).await {
            Ok(pl) => {
                failures = 0;
                if next < pl.media_sequence {
                    // Fell out of the window; nothing to do but skip ahead.
                    errors += (pl.media_sequence - next) as u32;
                    next = pl.media_sequence;
                }
                let start = next;
                for entry in pl.segments.iter().filter(|e| e.seq >= start && e.seq < first + count) {
                    let playing = buf.playing.load(Ordering::Relaxed).max(first);
                    if entry.seq != next || entry.seq > playing + READ_AHEAD {
                        break;
                    }
                    match fetch_segment(&http, &format!("{}{}", opts.base_url, entry.url)).await {
                        Ok((first_pts, hash)) => {
                            buf.segments.lock().unwrap().insert(entry.seq, Fetched { first_pts, duration_ms: entry.duration_ms, hash });
                            buf.arrived.notify_waiters();
                            next += 1;
                        }
                        Err(_) => {
                            errors += 1;
                            break;
                        }
                    }
                }
            }
            Err(_) => {
                errors += 1;
                failures += 1;
                if failures >= 20 {
                    break;
                }
            }
        }
        if next < first + count {
            tokio::time::sleep(Duration::from_millis(opts.poll_interval_ms)).await;
        }
    }
    errors
}

async fn spectator(id: usize, http: reqwest::Client, opts: Arc<LoadSimOptions>, clock: Arc<Clock>, first: u64, count: u64) -> SpectatorReport {
    let buf = Arc::new(Buffer::default());
    let fetch = tokio::spawn(fetcher(http, opts.clone(), first, count, buf.clone()));

    let mut due = Instant::now();
    let mut stalls = 0;
    let mut samples = Vec::new();
    let mut hashes = Vec::new();
    for seq in first..first + count {
        tokio::time::sleep_until(due.into()).await;
        let mut waited = false;
        let seg = loop {
            let notified = buf.arrived.notified();
            {
                let segs = buf.segments.lock().unwrap();
                if let Some(s) = segs.get(&seq) {
                    break Some(s.clone());
                }
                // A later segment arrived first: this one was lost.
                if segs.range(seq + 1..).next().is_some() {
                    break None;
                }
            }
            if fetch.is_finished() {
                break None;
            }
            waited = true;
            tokio::select! {
                _ = notified => {}
                _ = tokio::time::sleep(Duration::from_millis(50)) => {}
            }
        };
        let Some(seg) = seg else {
            stalls += 1;
            if fetch.is_finished() {
                break;
            }
            continue;
        };
        buf.playing.store(seq, Ordering::Relaxed);
        let now = Instant::now();
        if hashes.is_empty() {
            // Startup buffering is not a stall.
            due = due.max(now);
        } else if waited {
            // Buffer underrun: playback resumes when the segment lands.
            stalls += 1;
            due = now;
        }
        samples.push((clock.server_ms_at(due) - seg.first_pts as f64) / 1000.0);
        hashes.push((seq, seg.hash.clone()));
        due += Duration::from_millis(seg.duration_ms);
    }
    // Play out the last segment.
    tokio::time::sleep_until(due.into()).await;
    let fetch_errors = fetch.await.unwrap_or(1);
    SpectatorReport {
        id,
        startup_latency_s: samples.first().copied().unwrap_or(f64::NAN),
        latency_s: Stats::of(&samples),
        stall_count: stalls,
        fetch_errors,
        segments_played: hashes.len(),
        hash_set: hashes,
    }
}

fn ws_url(base_url: &str, path: &str) -> String {
    let rest = base_url.strip_prefix("http://").map(|r| format!("ws://{r}")).or_else(|| base_url.strip_prefix("https://").map(|r| format!("wss://{r}")));
    format!("{}{path}", rest.unwrap_or_else(|| base_url.to_owned()))
}

/// Joins as co-host over `/signal`, answers the VR host's offer, then times
/// commands until `stop` fires.
async fn cohost_probe(http: reqwest::Client, opts: Arc<LoadSimOptions>, mut stop: watch::Receiver<bool>) -> Result<ProbeReport, LoadSimError> {
    let id = "loadsim-probe";
    let url = ws_url(&opts.base_url, &format!("/signal?client_id={id}"));
    let (ws, _) = tokio_tungstenite::connect_async(&url).await.map_err(|e| LoadSimError::Unreachable { url: url.clone(), message: e.to_string() })?;
    let (mut tx, mut rx) = ws.split();
    let join = SignalMessage::Join { requested_role: Role::CoHost, client_id: id.into() };
    tx.send(WsMessage::Text(serde_json::to_string(&join).unwrap().into())).await.map_err(|e| LoadSimError::Protocol(e.to_string()))?;
    let token = loop {
        let Some(Ok(WsMessage::Text(t))) = rx.next().await else {
            return Err(LoadSimError::Protocol("signal socket closed before role assignment".into()));
        };
        match serde_json::from_str::<SignalMessage>(&t) {
            Ok(SignalMessage::RoleAssigned { session_token, .. }) => break session_token,
            Ok(SignalMessage::Rejected { reason }) => return Err(LoadSimError::Protocol(format!("co-host join rejected: {reason:?}"))),
            _ => {}
        }
    };
    let answerer = tokio::spawn(async move {
        while let Some(Ok(WsMessage::Text(t))) = rx.next().await {
            if let Ok(SignalMessage::Offer { .. }) = serde_json::from_str::<SignalMessage>(&t) {
                let answer = SignalMessage::Answer { sdp_blob: "v=0\r\no=probe 0 1 IN IP4 127.0.0.1\r\n".into() };
                if tx.send(WsMessage::Text(serde_json::to_string(&answer).unwrap().into())).await.is_err() {
                    break;
                }
            }
        }
    });

    let rotation = [
        json!({ "cmd": "set_arm", "params": { "value": 2.5 } }),
        json!({ "cmd": "select_object", "params": { "x": 320, "y": 200 } }),
        json!({ "cmd": "set_arm", "params": { "value": 2.0 } }),
        json!({ "cmd": "select_object", "params": { "x": 320, "y": 200 } }),
        json!({ "cmd": "place_target", "params": { "x": 320, "y": 260 } }),
        json!({ "cmd": "remove_targets" }),
    ];
    let mut rtts = Vec::new();
    let mut errors = 0;
    let cmd_url = format!("{}/api/command", opts.base_url);
    for i in 0.. {
        if *stop.borrow() {
            break;
        }
        let mut body = rotation[i % rotation.len()].clone();
        body["token"] = token.clone().into();
        let t0 = Instant::now();
        let ok = match http.post(&cmd_url).json(&body).send().await {
            Ok(r) => r.json::<Value>().await.map(|v| v["ok"] == true).unwrap_or(false),
            Err(_) => false,
        };
        rtts.push(t0.elapsed().as_secs_f64() * 1000.0);
        if !ok {
            errors += 1;
        }
        tokio::select! {
            _ = tokio::time::sleep(Duration::from_millis(opts.probe_interval_ms)) => {}
            _ = stop.changed() => {}
        }
    }
    answerer.abort();
    Ok(ProbeReport { samples: rtts.len(), errors, rtt_ms: Stats::of(&rtts) })
}

pub async fn run(opts: LoadSimOptions) -> Result<LoadReport, LoadSimError> {
    if opts.spectators == 0 {
        return Err(LoadSimError::Protocol("at least one spectator is required".into()));
    }
    let started = Instant::now();
    let opts = Arc::new(opts);
    let http = reqwest::Client::builder()
        .pool_max_idle_per_host(opts.spectators + 8)
        .build()
        .map_err(|e| LoadSimError::Protocol(e.to_string()))?;
    let status: Value = get_json(&http, &format!("{}/api/status", opts.base_url)).await?;
    let seg_ms = status["segment_duration_ms"].as_u64().ok_or_else(|| LoadSimError::Protocol("status without segment_duration_ms".into()))?;
    let offset = opts.live_edge_offset.or(status["live_edge_offset"].as_u64()).unwrap_or(10).max(1);
    let clock = Arc::new(Clock::sync(&http, &opts.base_url).await?);

    // Start right after a segment is published so every player sits exactly
    // `offset` segments behind the live edge.
    let playlist_url = format!("{}/live/{}/playlist.json", opts.base_url, opts.rung);
    let mut seen: Option<u64> = None;
    let baseline = loop {
        let pl: Playlist = get_json(&http, &playlist_url).await?;
        let newest = pl.newest();
        if let (Some(prev), Some(n)) = (seen, newest) {
            if n > prev && n >= offset {
                break n + 1 - offset;
            }
        }
        seen = Some(newest.unwrap_or(0));
        tokio::time::sleep(Duration::from_millis(20)).await;
    };
    let count = ((opts.duration_s * 1000.0) / seg_ms as f64).ceil().max(1.0) as u64;

    let (stop_tx, stop_rx) = watch::channel(false);
    let probe = opts.cohost_probe.then(|| tokio::spawn(cohost_probe(http.clone(), opts.clone(), stop_rx)));
    let tasks: Vec<_> = (0..opts.spectators)
        .map(|id| tokio::spawn(spectator(id, http.clone(), opts.clone(), clock.clone(), baseline, count)))
        .collect();
    let mut per_spectator = Vec::with_capacity(tasks.len());
    for t in tasks {
        per_spectator.push(t.await.map_err(|e| LoadSimError::Protocol(e.to_string()))?);
    }
    let _ = stop_tx.send(true);
    let cohost_probe = match probe {
        Some(p) => Some(p.await.map_err(|e| LoadSimError::Protocol(e.to_string()))??),
        None => None,
    };

    let samples: Vec<f64> = per_spectator.iter().flat_map(|s| [s.latency_s.min, s.latency_s.max]).collect();
    let dur_s = seg_ms as f64 / 1000.0;
    let law = [offset as f64 * dur_s, (offset + 1) as f64 * dur_s + opts.poll_interval_ms as f64 / 1000.0];
    let reference = &per_spectator[0].hash_set;
    let summary = Summary {
        stalls_total: per_spectator.iter().map(|s| s.stall_count as u64).sum(),
        fetch_errors_total: per_spectator.iter().map(|s| s.fetch_errors as u64).sum(),
        identical_hash_sets: per_spectator.iter().all(|s| &s.hash_set == reference && s.hash_set.len() as u64 == count),
        latency_s: Stats::of(&per_spectator.iter().map(|s| s.latency_s.median).collect::<Vec<_>>()),
        latency_law_s: law,
        within_latency_law: samples.iter().all(|l| *l >= law[0] && *l <= law[1]),
    };
    Ok(LoadReport {
        spectators: opts.spectators,
        duration_s: opts.duration_s,
        rung: opts.rung.clone(),
        segment_duration_ms: seg_ms,
        live_edge_offset: offset,
        poll_interval_ms: opts.poll_interval_ms,
        baseline_seq: baseline,
        segments_per_spectator: count,
        wall_s: started.elapsed().as_secs_f64(),
        summary,
        cohost_probe,
        per_spectator,
    })
}

//! Scripted stand-in for a live VR user: avatar keyframes plus timestamped
//! interaction events, replayed through a playback cursor.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Pose, Vec3};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("scenario event {index} at t={t}: {message}")]
    Validation { index: usize, t: f64, message: String },
    #[error("playback cannot move backwards from t={from} to t={to}")]
    TimeRegression { from: f64, to: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvatarState {
    pub head: Pose,
    pub left_hand: Pose,
    pub right_hand: Pose,
    /// Seconds since session start.
    pub t: f64,
}

impl AvatarState {
    /// Standing avatar at `pose` with hands held in front at waist height.
    pub fn standing(pose: Pose) -> Self {
        let q = pose.orientation;
        let hand = |side: f64| Pose::new(pose.position + q.rotate(Vec3::new(0.2 * side, -0.45, -0.3)), q);
        AvatarState { head: pose, left_hand: hand(-1.0), right_hand: hand(1.0), t: 0.0 }
    }

    fn lerp(&self, other: &AvatarState, s: f64, t: f64) -> AvatarState {
        AvatarState {
            head: self.head.lerp(&other.head, s),
            left_hand: self.left_hand.lerp(&other.left_hand, s),
            right_hand: self.right_hand.lerp(&other.right_hand, s),
            t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioEvent {
    SetAvatar { head: Pose, left_hand: Pose, right_hand: Pose },
    GrabMainCamera,
    MoveGrabbedCamera { pose: Pose },
    ReleaseMainCamera,
    Speak { text: String, duration: f64 },
    TouchObject { object_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t: f64,
    #[serde(flatten)]
    pub event: ScenarioEvent,
}

/// Validated, time-sorted event list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioScript {
    events: Vec<TimedEvent>,
    keyframes: Vec<usize>,
}

impl ScenarioScript {
    pub fn new(events: Vec<TimedEvent>) -> Result<Self, ScenarioError> {
        let mut grabbed = false;
        let mut prev_t = f64::NEG_INFINITY;
        for (index, e) in events.iter().enumerate() {
            let fail = |message: &str| ScenarioError::Validation { index, t: e.t, message: message.to_owned() };
            if !e.t.is_finite() || e.t < 0.0 {
                return Err(fail("timestamp must be finite and non-negative"));
            }
            if e.t < prev_t {
                return Err(fail("events are not sorted by timestamp"));
            }
            prev_t = e.t;
            match &e.event {
                ScenarioEvent::GrabMainCamera if grabbed => return Err(fail("grab while already grabbing")),
                ScenarioEvent::GrabMainCamera => grabbed = true,
                ScenarioEvent::ReleaseMainCamera if !grabbed => return Err(fail("release without a grab")),
                ScenarioEvent::ReleaseMainCamera => grabbed = false,
                ScenarioEvent::MoveGrabbedCamera { .. } if !grabbed => return Err(fail("move without a grab")),
                ScenarioEvent::Speak { duration, .. } if !(*duration >= 0.0) => {
                    return Err(fail("speech duration must be non-negative"))
                }
                _ => {}
            }
        }
        let keyframes = events
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e.event, ScenarioEvent::SetAvatar { .. }))
            .map(|(i, _)| i)
            .collect();
        Ok(ScenarioScript { events, keyframes })
    }

    /// One JSON object per line; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, ScenarioError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: TimedEvent =
                serde_json::from_str(line).map_err(|e| ScenarioError::Format { line: i + 1, message: e.to_string() })?;
            events.push(e);
        }
        ScenarioScript::new(events)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        ScenarioScript::from_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        self.events.iter().map(|e| serde_json::to_string(e).expect("event serializes") + "\n").collect()
    }

    pub fn events(&self) -> &[TimedEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.t)
    }

    fn keyframe(&self, k: usize) -> (f64, AvatarState) {
        let e = &self.events[self.keyframes[k]];
        match e.event {
            ScenarioEvent::SetAvatar { head, left_hand, right_hand } => {
                (e.t, AvatarState { head, left_hand, right_hand, t: e.t })
            }
            _ => unreachable!("keyframe index points at SetAvatar"),
        }
    }

    /// Avatar at time `t`: linear positions and spherical orientations
    /// between the bracketing keyframes, held constant outside them. A query
    /// at a keyframe's timestamp returns that keyframe unchanged.
    pub fn avatar_at(&self, t: f64, fallback: &AvatarState) -> AvatarState {
        if self.keyframes.is_empty() {
            return AvatarState { t, ..*fallback };
        }
        // First keyframe strictly after t.
        let after = self.keyframes.partition_point(|&i| self.events[i].t <= t);
        if after == 0 {
            let (_, first) = self.keyframe(0);
            return AvatarState { t, ..first };
        }
        let (t0, a) = self.keyframe(after - 1);
        if t0 == t || after == self.keyframes.len() {
            return AvatarState { t, ..a };
        }
        let (t1, b) = self.keyframe(after);
        let s = (t - t0) / (t1 - t0);
        a.lerp(&b, s, t)
    }
}

/// Avatar state and emitted events for the window `(from_t, to_t]`.
///
/// Events stamped exactly at `from_t` belong to the previous window; start
/// the first window below the script's first timestamp to include them.
pub fn advance(
    script: &ScenarioScript,
    from_t: f64,
    to_t: f64,
    fallback: &AvatarState,
) -> Result<(AvatarState, Vec<TimedEvent>), ScenarioError> {
    if !(from_t <= to_t) {
        return Err(ScenarioError::TimeRegression { from: from_t, to: to_t });
    }
    let events = script.events.iter().filter(|e| e.t > from_t && e.t <= to_t).cloned().collect();
    Ok((script.avatar_at(to_t, fallback), events))
}

/// Single-owner playback cursor over a shared script.
#[derive(Debug, Clone)]
pub struct Playback {
    script: Arc<ScenarioScript>,
    fallback: AvatarState,
    cursor_t: f64,
    next_event: usize,
}

impl Playback {
    pub fn new(script: Arc<ScenarioScript>, fallback: AvatarState) -> Self {
        Playback { script, fallback, cursor_t: f64::NEG_INFINITY, next_event: 0 }
    }

    pub fn script(&self) -> &Arc<ScenarioScript> {
        &self.script
    }

    pub fn time(&self) -> f64 {
        self.cursor_t.max(0.0)
    }

    pub fn is_finished(&self) -> bool {
        self.next_event >= self.script.len()
    }

    /// Moves the cursor to `to_t`, emitting every not-yet-emitted event with
    /// a timestamp at or before it.
    pub fn advance_to(&mut self, to_t: f64) -> Result<(AvatarState, Vec<TimedEvent>), ScenarioError> {
        if to_t < self.cursor_t {
            return Err(ScenarioError::TimeRegression { from: self.cursor_t, to: to_t });
        }
        let events = &self.script.events;
        let start = self.next_event;
        while self.next_event < events.len() && events[self.next_event].t <= to_t {
            self.next_event += 1;
        }
        self.cursor_t = to_t;
        let emitted = events[start..self.next_event].to_vec();
        Ok((self.script.avatar_at(to_t, &self.fallback), emitted))
    }

    pub fn current(&self) -> AvatarState {
        self.script.avatar_at(self.time(), &self.fallback)
    }
}

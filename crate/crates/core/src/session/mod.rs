//! Session state owned by a single writer: signaling, co-host commands, chat,
//! tablet, on-air flag and the camera rigs driven by scenario playback.
//!
//! Every input is a [`LogEntry`], so a recorded log replays to the same
//! state and the same [`Session::digest`].

mod chat;
mod command;
mod signal;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use chat::{route_audio, AudioDestination, AudioPacket, ChatLedger, ChatMessage, TabletItem, TabletState, MAX_CHAT_CHARS};
pub use command::{CommandError, CommandRequest, CommandResult, InteractionCommand, Rejection};
pub use signal::{ClientEntry, ConnState, Outbound, RejectReason, Role, SignalMessage, Signaling};

use crate::bvh::SceneIndex;
use crate::camera::{unproject, CameraIntrinsics};
use crate::math::Vec3;
use crate::render::{
    composite_windowed, render, render_thumbnail, Annotation, Audience, Frame, Overlays, Stroke2d, Target, View,
    Viewer, TARGET_RADIUS_M,
};
use crate::rig::{CameraRig, RigConfig, RigMode};
use crate::scenario::{AvatarState, Playback, ScenarioEvent, ScenarioScript, TimedEvent};
use crate::scene::{Rgb8, Scene};

pub const ALL_RIGS: [RigMode; 5] =
    [RigMode::Free, RigMode::FirstPerson, RigMode::OverShoulder, RigMode::ThirdFollow, RigMode::MapView];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub intrinsics: CameraIntrinsics,
    pub rig: RigConfig,
    /// Free-camera speed in m/s at full stick.
    pub free_cam_speed: f64,
    /// Distance along the ray for annotation points that hit nothing.
    pub fallback_depth_m: f64,
    pub annotation_stroke_px: u32,
    pub windowed_stroke_px: u32,
    pub tablet_refresh_ms: u64,
    pub token_seed: String,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            intrinsics: CameraIntrinsics::broadcast_default(),
            rig: RigConfig::default(),
            free_cam_speed: 3.0,
            fallback_depth_m: 5.0,
            annotation_stroke_px: 3,
            windowed_stroke_px: 3,
            tablet_refresh_ms: 500,
            token_seed: "streamfunnel".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error("chat rejected: {0}")]
    Chat(String),
}

/// One input to the session, in application order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Tick { dt_ms: u64 },
    Signal { client_id: String, msg: SignalMessage },
    Disconnect { client_id: String },
    Command(CommandRequest),
    Chat { token: Option<String>, client_id: String, text: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    Tick(Vec<ScenarioOutcome>),
    Signal(Outbound),
    Command(CommandResult),
    Chat(u64),
}

/// A scenario event and whether the session could apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub event: TimedEvent,
    pub rejected: Option<String>,
}

/// Everything the renderer needs, detached from the session.
#[derive(Debug, Clone)]
pub struct RenderSnapshot {
    pub scene: Arc<Scene>,
    pub avatar: AvatarState,
    pub rigs: [CameraRig; 5],
    pub active_rig: RigMode,
    pub overlays: Overlays,
    pub intrinsics: CameraIntrinsics,
    pub clock_ms: u64,
}

impl RenderSnapshot {
    pub fn view(&self, mode: RigMode) -> View {
        View { pose: self.rigs[mode.camera_id() as usize].pose, intr: self.intrinsics, label: mode }
    }

    /// In-focus broadcast frame, stamped with the session clock.
    pub fn spectator_frame(&self) -> Frame {
        render(&self.scene, Some(&self.avatar), &self.view(self.active_rig), &self.overlays, Viewer::Spectator)
            .expect("validated intrinsics")
            .with_pts(self.clock_ms)
    }

    /// What the VR user sees from their head.
    pub fn vr_frame(&self) -> Frame {
        let view = View { pose: self.avatar.head, intr: self.intrinsics, label: RigMode::FirstPerson };
        render(&self.scene, Some(&self.avatar), &view, &self.overlays, Viewer::VrUser)
            .expect("validated intrinsics")
            .with_pts(self.clock_ms)
    }

    /// Thumbnails of every rig except the in-focus one.
    pub fn thumbnails(&self) -> Vec<Frame> {
        ALL_RIGS
            .iter()
            .filter(|m| **m != self.active_rig)
            .map(|m| {
                render_thumbnail(&self.scene, &self.avatar, &self.rigs[m.camera_id() as usize], &self.intrinsics, &self.overlays)
                    .with_pts(self.clock_ms)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    scene: Arc<Scene>,
    index: Arc<SceneIndex>,
    playback: Playback,
    clock_ms: u64,
    avatar: AvatarState,
    rigs: [CameraRig; 5],
    active_rig: RigMode,
    overlays: Overlays,
    next_annotation_id: u64,
    next_target_id: u64,
    next_windowed_id: u64,
    signaling: Signaling,
    chat: ChatLedger,
    tablet: TabletState,
    on_air: bool,
    last_tablet_refresh: Option<u64>,
}

impl Session {
    pub fn new(scene: Arc<Scene>, script: Arc<ScenarioScript>, config: SessionConfig) -> Session {
        let index = Arc::new(SceneIndex::build(&scene));
        let fallback = AvatarState::standing(scene.spawn_pose);
        let mut playback = Playback::new(script, fallback);
        let (avatar, _) = playback.advance_to(0.0).expect("fresh cursor");
        let rigs = ALL_RIGS.map(|m| {
            let mut r = CameraRig::new(m, Session::initial_pose(m, &avatar, &config.rig), config.rig);
            r.update(&avatar, 1.0);
            r
        });
        let signaling = Signaling::new(&config.token_seed);
        Session {
            config,
            scene,
            index,
            playback,
            clock_ms: 0,
            avatar,
            rigs,
            active_rig: RigMode::ThirdFollow,
            overlays: Overlays::default(),
            next_annotation_id: 1,
            next_target_id: 1,
            next_windowed_id: 1,
            signaling,
            chat: ChatLedger::default(),
            tablet: TabletState::default(),
            on_air: false,
            last_tablet_refresh: None,
        }
    }

    /// Follow rigs start on their target; the free camera starts behind
    /// and above the spawn point.
    fn initial_pose(mode: RigMode, avatar: &AvatarState, cfg: &RigConfig) -> crate::math::Pose {
        let head = avatar.head;
        crate::rig::target_pose(mode, &head, cfg.arm_default, cfg).unwrap_or_else(|| {
            let back = head.orientation.rotate(Vec3::new(0.0, 0.6, 3.0));
            let pos = head.position + back;
            crate::math::Pose::new(pos, crate::math::UnitQuat::look_rotation(head.position - pos, Vec3::Y))
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn index(&self) -> &Arc<SceneIndex> {
        &self.index
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn avatar(&self) -> &AvatarState {
        &self.avatar
    }

    pub fn rig(&self, mode: RigMode) -> &CameraRig {
        &self.rigs[mode.camera_id() as usize]
    }

    pub fn active_rig(&self) -> RigMode {
        self.active_rig
    }

    pub fn overlays(&self) -> &Overlays {
        &self.overlays
    }

    pub fn signaling(&self) -> &Signaling {
        &self.signaling
    }

    pub fn chat(&self) -> &ChatLedger {
        &self.chat
    }

    pub fn tablet(&self) -> &TabletState {
        &self.tablet
    }

    pub fn on_air(&self) -> bool {
        self.on_air
    }

    pub fn script_finished(&self) -> bool {
        self.playback.is_finished()
    }

    pub fn snapshot(&self) -> RenderSnapshot {
        RenderSnapshot {
            scene: self.scene.clone(),
            avatar: self.avatar,
            rigs: self.rigs,
            active_rig: self.active_rig,
            overlays: self.overlays.clone(),
            intrinsics: self.config.intrinsics,
            clock_ms: self.clock_ms,
        }
    }

    pub fn active_view(&self) -> View {
        View { pose: self.rig(self.active_rig).pose, intr: self.config.intrinsics, label: self.active_rig }
    }

    pub fn apply(&mut self, entry: &LogEntry) -> Result<Applied, SessionError> {
        match entry {
            LogEntry::Tick { dt_ms } => Ok(Applied::Tick(self.tick(*dt_ms))),
            LogEntry::Signal { client_id, msg } => Ok(Applied::Signal(self.handle_signal(client_id, msg.clone()))),
            LogEntry::Disconnect { client_id } => Ok(Applied::Signal(self.signaling.disconnect(client_id))),
            LogEntry::Command(req) => Ok(Applied::Command(self.handle_request(req)?)),
            LogEntry::Chat { token, client_id, text } => Ok(Applied::Chat(self.ingest_chat(token.as_deref(), client_id, text)?)),
        }
    }

    /// Advances the session clock, plays scenario events up to it and
    /// moves every rig.
    pub fn tick(&mut self, dt_ms: u64) -> Vec<ScenarioOutcome> {
        self.clock_ms += dt_ms;
        let (avatar, events) = self.playback.advance_to(self.clock_ms as f64 / 1000.0).expect("clock is monotone");
        self.avatar = avatar;
        let outcomes = events
            .into_iter()
            .map(|event| {
                let rejected = self.apply_scenario_event(&event.event).err();
                ScenarioOutcome { event, rejected }
            })
            .collect();
        if dt_ms > 0 {
            let dt = dt_ms as f64 / 1000.0;
            for r in self.rigs.iter_mut() {
                r.update(&self.avatar, dt);
            }
        }
        let due = self.last_tablet_refresh.map_or(true, |t| self.clock_ms >= t + self.config.tablet_refresh_ms);
        if due {
            self.refresh_tablet();
        }
        outcomes
    }

    fn apply_scenario_event(&mut self, event: &ScenarioEvent) -> Result<(), String> {
        let free = &mut self.rigs[RigMode::Free.camera_id() as usize];
        let r = match event {
            ScenarioEvent::GrabMainCamera => free.grab(&self.avatar.right_hand),
            ScenarioEvent::MoveGrabbedCamera { pose } => free.move_grabbed(pose),
            ScenarioEvent::ReleaseMainCamera => free.release(),
            ScenarioEvent::SetAvatar { .. } | ScenarioEvent::Speak { .. } | ScenarioEvent::TouchObject { .. } => Ok(()),
        };
        r.map_err(|e| e.to_string())
    }

    pub fn refresh_tablet(&mut self) {
        let frame = self.snapshot().spectator_frame();
        self.tablet.set_snapshot(frame);
        self.last_tablet_refresh = Some(self.clock_ms);
    }

    pub fn handle_signal(&mut self, client_id: &str, msg: SignalMessage) -> Outbound {
        self.signaling.handle(client_id, msg)
    }

    fn authorize(&self, token: &str) -> Result<(), CommandError> {
        match self.signaling.authenticate(token) {
            Some((_, Role::CoHost)) => Ok(()),
            Some((_, role)) => Err(CommandError::Auth(format!("role {role:?} may not issue commands"))),
            None => Err(CommandError::Auth("unknown or expired session token".into())),
        }
    }

    pub fn handle_request(&mut self, req: &CommandRequest) -> Result<CommandResult, CommandError> {
        self.authorize(&req.token)?;
        let cmd = InteractionCommand::parse(&req.cmd, &req.params)?;
        self.execute(&cmd)
    }

    pub fn handle_command(&mut self, token: &str, cmd: &InteractionCommand) -> Result<CommandResult, CommandError> {
        self.authorize(token)?;
        self.execute(cmd)
    }

    fn pixel_ray(&self, x: f64, y: f64, field: &str) -> Result<crate::camera::Ray, CommandError> {
        if !x.is_finite() || !y.is_finite() {
            return Err(CommandError::validation(field, "pixel coordinates must be finite"));
        }
        let view = self.active_view();
        unproject(x, y, &view.pose, &view.intr).map_err(|e| CommandError::validation(field, e.to_string()))
    }

    /// Anchors each pixel at the first surface under it, or at the fallback
    /// depth along the ray when nothing is hit.
    pub fn anchor_polyline(&self, polyline: &[[f64; 2]]) -> Result<(Vec<Vec3>, usize), CommandError> {
        if polyline.len() < 2 {
            return Err(CommandError::validation("polyline_px", "at least two points are required"));
        }
        let mut misses = 0;
        let mut points = Vec::with_capacity(polyline.len());
        for (i, [x, y]) in polyline.iter().enumerate() {
            let ray = self.pixel_ray(*x, *y, &format!("polyline_px[{i}]"))?;
            points.push(match self.index.raycast(&ray) {
                Some(hit) => hit.point,
                None => {
                    misses += 1;
                    ray.at(self.config.fallback_depth_m)
                }
            });
        }
        Ok((points, misses))
    }

    fn execute(&mut self, cmd: &InteractionCommand) -> Result<CommandResult, CommandError> {
        use InteractionCommand as C;
        Ok(match cmd {
            C::SelectObject { x, y } => {
                let ray = self.pixel_ray(*x, *y, "x")?;
                match self.index.raycast(&ray) {
                    None => CommandResult::Rejected { reason: Rejection::Miss },
                    Some(hit) if !self.scene.objects[hit.object_index].selectable => {
                        CommandResult::Rejected { reason: Rejection::NotSelectable }
                    }
                    Some(hit) => {
                        let selected = self.overlays.selection.toggle(&hit.object_id);
                        CommandResult::Selected { object_id: hit.object_id.to_string(), selected }
                    }
                }
            }
            C::AnnotateVr { polyline_px } | C::AnnotateSpec { polyline_px } => {
                let (points, fallback_points) = self.anchor_polyline(polyline_px)?;
                let audience = if matches!(cmd, C::AnnotateVr { .. }) { Audience::VrOnly } else { Audience::SpectatorOnly };
                let annotation_id = self.next_annotation_id;
                self.next_annotation_id += 1;
                let n = points.len();
                self.overlays.annotations.push(Annotation {
                    annotation_id,
                    audience,
                    points,
                    color: Rgb8::RED,
                    stroke_px: self.config.annotation_stroke_px,
                });
                CommandResult::AnnotationCreated { annotation_id, points: n, fallback_points }
            }
            C::AnnotateWindowed { strokes_px } => {
                if strokes_px.is_empty() {
                    return Err(CommandError::validation("strokes_px", "at least one stroke is required"));
                }
                if let Some(i) = strokes_px.iter().position(|s| s.is_empty()) {
                    return Err(CommandError::validation(&format!("strokes_px[{i}]"), "stroke has no points"));
                }
                let strokes: Vec<Stroke2d> = strokes_px
                    .iter()
                    .map(|s| Stroke2d { points: s.iter().map(|p| (p[0], p[1])).collect(), stroke_px: self.config.windowed_stroke_px })
                    .collect();
                let snapshot = self.snapshot().spectator_frame();
                let composited = composite_windowed(&snapshot, &strokes);
                let windowed_id = self.next_windowed_id;
                self.next_windowed_id += 1;
                self.tablet.history.push(TabletItem::Windowed {
                    windowed_id,
                    t: self.clock_ms,
                    frame_sha256: crate::fanout::hex(&crate::fanout::sha256(&composited.pixels)),
                    composited: Arc::new(composited),
                });
                self.tablet.windowed_visible.push(windowed_id);
                CommandResult::WindowedPosted { windowed_id, history_len: self.tablet.history.len() }
            }
            C::PlaceTarget { x, y } => {
                let ray = self.pixel_ray(*x, *y, "x")?;
                match self.index.raycast(&ray) {
                    None => CommandResult::Rejected { reason: Rejection::Miss },
                    Some(hit) => {
                        let target_id = self.next_target_id;
                        self.next_target_id += 1;
                        self.overlays.targets.push(Target {
                            target_id,
                            position: hit.point,
                            normal: hit.normal,
                            radius_m: TARGET_RADIUS_M,
                        });
                        CommandResult::TargetPlaced { target_id, position: hit.point }
                    }
                }
            }
            C::RemoveWindowed {} => {
                let count = self.tablet.windowed_visible.len();
                self.tablet.windowed_visible.clear();
                CommandResult::Removed { count }
            }
            C::RemoveAllAnnotations {} => {
                let count = self.overlays.annotations.len();
                self.overlays.annotations.clear();
                CommandResult::Removed { count }
            }
            C::RemoveTargets {} => {
                let count = self.overlays.targets.len();
                self.overlays.targets.clear();
                CommandResult::Removed { count }
            }
            C::SwitchCamera { mode } => {
                self.active_rig = *mode;
                self.refresh_tablet();
                CommandResult::CameraSwitched { mode: *mode }
            }
            C::SetArm { value } => {
                let rig = &mut self.rigs[self.active_rig.camera_id() as usize];
                let arm_length = rig.set_arm_length(*value)?;
                CommandResult::ArmSet { arm_length }
            }
            C::FreeCamInput(input) => {
                let speed = self.config.free_cam_speed;
                let rig = &mut self.rigs[self.active_rig.camera_id() as usize];
                rig.apply_free_input(input, speed)?;
                CommandResult::CameraMoved { pose: rig.pose }
            }
            C::RelayChat { msg_id } => {
                let msg = self
                    .chat
                    .get(*msg_id)
                    .ok_or_else(|| CommandError::validation("msg_id", format!("no chat message {msg_id}")))?;
                if msg.relayed {
                    return Err(CommandError::State(format!("message {msg_id} was already relayed")));
                }
                let msg = self.chat.mark_relayed(*msg_id).unwrap().clone();
                self.tablet.history.push(TabletItem::Chat { msg_id: msg.msg_id, sender: msg.sender, text: msg.text, t: self.clock_ms });
                CommandResult::Relayed { msg_id: *msg_id, history_len: self.tablet.history.len() }
            }
            C::SendPrivateText { text } => {
                validate_text(text).map_err(|m| CommandError::validation("text", m))?;
                self.tablet.history.push(TabletItem::PrivateText { text: text.clone(), t: self.clock_ms });
                CommandResult::PrivateTextSent { history_len: self.tablet.history.len() }
            }
            C::SetOnAir { on_air } => {
                self.on_air = *on_air;
                self.tablet.on_air = *on_air;
                CommandResult::OnAirSet { on_air: *on_air }
            }
        })
    }

    /// Appends a public chat message. Without a token the sender is a
    /// spectator; the VR host cannot chat.
    pub fn ingest_chat(&mut self, token: Option<&str>, client_id: &str, text: &str) -> Result<u64, SessionError> {
        let role = match token {
            None => Role::Spectator,
            Some(tok) => {
                self.signaling.authenticate(tok).map(|(_, r)| r).ok_or_else(|| SessionError::Chat("unknown session token".into()))?
            }
        };
        if role == Role::VrHost {
            return Err(SessionError::Chat("the VR host speaks instead of chatting".into()));
        }
        if client_id.is_empty() {
            return Err(SessionError::Chat("client_id must not be empty".into()));
        }
        validate_text(text).map_err(SessionError::Chat)?;
        Ok(self.chat.push(client_id, role, text, self.clock_ms).msg_id)
    }

    pub fn route_audio(&self, packet: &AudioPacket) -> Vec<AudioDestination> {
        route_audio(packet.source_role, self.on_air)
    }

    /// SHA-256 over a canonical dump of overlays, selection, tablet, chat,
    /// rigs, on-air flag, in-focus rig and role registry.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Canon<'a> {
            clock_ms: u64,
            active_rig: RigMode,
            on_air: bool,
            overlays: &'a Overlays,
            tablet: &'a TabletState,
            chat: &'a ChatLedger,
            rigs: &'a [CameraRig; 5],
            signaling: &'a Signaling,
        }
        let canon = Canon {
            clock_ms: self.clock_ms,
            active_rig: self.active_rig,
            on_air: self.on_air,
            overlays: &self.overlays,
            tablet: &self.tablet,
            chat: &self.chat,
            rigs: &self.rigs,
            signaling: &self.signaling,
        };
        let bytes = serde_json::to_vec(&canon).expect("canonical state serializes");
        crate::fanout::hex(&Sha256::digest(bytes))
    }
}

fn validate_text(text: &str) -> Result<(), String> {
    let n = text.chars().count();
    if n == 0 {
        Err("text must not be empty".into())
    } else if n > MAX_CHAT_CHARS {
        Err(format!("text is {n} characters, limit is {MAX_CHAT_CHARS}"))
    } else {
        Ok(())
    }
}

/// Outcome of replaying a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub applied: usize,
    /// Index of the first entry that failed; replay stops there.
    pub halted_at: Option<usize>,
    pub error: Option<String>,
    pub digest: String,
}

pub fn replay(mut session: Session, log: &[LogEntry]) -> (Session, ReplayReport) {
    for (i, entry) in log.iter().enumerate() {
        if let Err(e) = session.apply(entry) {
            let digest = session.digest();
            return (session, ReplayReport { applied: i, halted_at: Some(i), error: Some(e.to_string()), digest });
        }
    }
    let digest = session.digest();
    (session, ReplayReport { applied: log.len(), halted_at: None, error: None, digest })
}

pub fn log_to_jsonl(log: &[LogEntry]) -> String {
    log.iter().map(|e| serde_json::to_string(e).expect("log entry serializes") + "\n").collect()
}

pub fn log_from_jsonl(text: &str) -> Result<Vec<LogEntry>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}

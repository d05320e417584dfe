//! Browser demo: a co-host console over an in-page session. The VR user is
//! played by the bundled scenario; the page is the co-host.

use std::sync::Arc;

use serde_json::json;
use streamfunnel::camera::CameraIntrinsics;
use streamfunnel::rig::RigMode;
use streamfunnel::scenario::ScenarioScript;
use streamfunnel::scene::Scene;
use streamfunnel::session::{CommandResult, InteractionCommand, Role, Session, SessionConfig, SignalMessage};
use wasm_bindgen::prelude::*;

const SCENE: &str = include_str!("../../../fixtures/escape_room.scene.json");
const SCRIPT: &str = include_str!("../../../fixtures/task_a.scenario.jsonl");

#[wasm_bindgen]
pub struct Demo {
    session: Session,
    token: String,
}

fn mode_from_name(name: &str) -> Result<RigMode, JsError> {
    serde_json::from_value(json!(name)).map_err(|_| JsError::new(&format!("unknown camera mode {name:?}")))
}

#[wasm_bindgen]
impl Demo {
    /// Session rendered at `width`x`height`, already joined as co-host.
    #[wasm_bindgen(constructor)]
    pub fn new(width: u32, height: u32) -> Result<Demo, JsError> {
        let scene = Scene::from_json(SCENE).map_err(|e| JsError::new(&e.to_string()))?;
        let script = ScenarioScript::from_jsonl(SCRIPT).map_err(|e| JsError::new(&e.to_string()))?;
        let config = SessionConfig { intrinsics: CameraIntrinsics::broadcast_default().with_size(width, height), ..SessionConfig::default() };
        let mut session = Session::new(Arc::new(scene), Arc::new(script), config);
        session.handle_signal("vr", SignalMessage::Join { requested_role: Role::VrHost, client_id: "vr".into() });
        let out = session.handle_signal("page", SignalMessage::Join { requested_role: Role::CoHost, client_id: "page".into() });
        let token = out
            .into_iter()
            .find_map(|(_, m)| match m {
                SignalMessage::RoleAssigned { session_token, .. } => Some(session_token),
                _ => None,
            })
            .ok_or_else(|| JsError::new("co-host join failed"))?;
        Ok(Demo { session, token })
    }

    pub fn width(&self) -> u32 {
        self.session.config().intrinsics.width_px
    }

    pub fn height(&self) -> u32 {
        self.session.config().intrinsics.height_px
    }

    /// Advances the scenario; the avatar holds its last pose once it ends.
    pub fn tick(&mut self, dt_ms: u32) {
        self.session.tick(dt_ms as u64);
    }

    /// RGBA pixels of the broadcast feed.
    pub fn spectator_rgba(&self) -> Vec<u8> {
        self.session.snapshot().spectator_frame().to_rgba()
    }

    /// RGBA pixels of what the VR user sees.
    pub fn vr_rgba(&self) -> Vec<u8> {
        self.session.snapshot().vr_frame().to_rgba()
    }

    /// Switches the in-focus camera (`free`, `first_person`, `over_shoulder`,
    /// `third_follow`, `map_view`).
    pub fn switch_camera(&mut self, mode: &str) -> Result<String, JsError> {
        let mode = mode_from_name(mode)?;
        self.run(InteractionCommand::SwitchCamera { mode })
    }

    pub fn set_arm(&mut self, value: f64) -> Result<String, JsError> {
        self.run(InteractionCommand::SetArm { value })
    }

    /// Click on the broadcast view: `select` toggles the object under the
    /// pixel, `target` drops a target on the surface.
    pub fn click(&mut self, action: &str, x: f64, y: f64) -> Result<String, JsError> {
        let cmd = match action {
            "select" => InteractionCommand::SelectObject { x, y },
            "target" => InteractionCommand::PlaceTarget { x, y },
            other => return Err(JsError::new(&format!("unknown click action {other:?}"))),
        };
        self.run(cmd)
    }

    /// Draws a stroke given as flat `[x0, y0, x1, y1, ...]` pixels; `vr`
    /// strokes are seen by both audiences, `spec` only by spectators.
    pub fn annotate(&mut self, audience: &str, flat: Vec<f64>) -> Result<String, JsError> {
        let polyline_px: Vec<[f64; 2]> = flat.chunks_exact(2).map(|p| [p[0], p[1]]).collect();
        let cmd = match audience {
            "vr" => InteractionCommand::AnnotateVr { polyline_px },
            "spec" => InteractionCommand::AnnotateSpec { polyline_px },
            other => return Err(JsError::new(&format!("unknown audience {other:?}"))),
        };
        self.run(cmd)
    }

    pub fn clear(&mut self) -> Result<String, JsError> {
        self.run(InteractionCommand::RemoveAllAnnotations {})?;
        self.run(InteractionCommand::RemoveTargets {})
    }

    /// Clock, active camera and overlay counts as JSON.
    pub fn status(&self) -> String {
        let o = self.session.overlays();
        json!({
            "clock_ms": self.session.clock_ms(),
            "active_rig": self.session.active_rig(),
            "arm_length": self.session.rig(RigMode::ThirdFollow).arm_length,
            "script_finished": self.session.script_finished(),
            "overlays": serde_json::to_value(o).unwrap_or_default(),
        })
        .to_string()
    }

    fn run(&mut self, cmd: InteractionCommand) -> Result<String, JsError> {
        let r: CommandResult = self.session.handle_command(&self.token, &cmd).map_err(|e| JsError::new(&e.to_string()))?;
        Ok(serde_json::to_string(&r).expect("results serialize"))
    }
}

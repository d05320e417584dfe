use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Pose, Vec3};
use crate::rig::{FreeCamInput, RigError, RigMode};

/// One co-host toolbar action. Wire form is `{"cmd": name, "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionCommand {
    SelectObject { x: f64, y: f64 },
    AnnotateVr { polyline_px: Vec<[f64; 2]> },
    AnnotateSpec { polyline_px: Vec<[f64; 2]> },
    AnnotateWindowed { strokes_px: Vec<Vec<[i32; 2]>> },
    PlaceTarget { x: f64, y: f64 },
    RemoveWindowed {},
    RemoveAllAnnotations {},
    RemoveTargets {},
    SwitchCamera { mode: RigMode },
    SetArm { value: f64 },
    FreeCamInput(FreeCamInput),
    RelayChat { msg_id: u64 },
    SendPrivateText { text: String },
    SetOnAir { on_air: bool },
}

impl InteractionCommand {
    pub fn name(&self) -> &'static str {
        match self {
            InteractionCommand::SelectObject { .. } => "select_object",
            InteractionCommand::AnnotateVr { .. } => "annotate_vr",
            InteractionCommand::AnnotateSpec { .. } => "annotate_spec",
            InteractionCommand::AnnotateWindowed { .. } => "annotate_windowed",
            InteractionCommand::PlaceTarget { .. } => "place_target",
            InteractionCommand::RemoveWindowed {} => "remove_windowed",
            InteractionCommand::RemoveAllAnnotations {} => "remove_all_annotations",
            InteractionCommand::RemoveTargets {} => "remove_targets",
            InteractionCommand::SwitchCamera { .. } => "switch_camera",
            InteractionCommand::SetArm { .. } => "set_arm",
            InteractionCommand::FreeCamInput(_) => "free_cam_input",
            InteractionCommand::RelayChat { .. } => "relay_chat",
            InteractionCommand::SendPrivateText { .. } => "send_private_text",
            InteractionCommand::SetOnAir { .. } => "set_on_air",
        }
    }

    /// Builds a command from its name and JSON params. Missing params are
    /// treated as `{}`. Errors name the offending field.
    pub fn parse(cmd: &str, params: &serde_json::Value) -> Result<InteractionCommand, CommandError> {
        let params = if params.is_null() { serde_json::json!({}) } else { params.clone() };
        let doc = serde_json::json!({ "cmd": cmd, "params": params });
        serde_path_to_error::deserialize(doc).map_err(|e| {
            let path = e.path().to_string();
            let field = path.strip_prefix("params.").unwrap_or(&path);
            let field = if field == "." || field.is_empty() || field == "params" { "params" } else { field };
            let message = e.into_inner().to_string();
            let field = missing_field(&message).unwrap_or(field);
            let field = if message.starts_with("unknown variant") { "cmd" } else { field };
            CommandError::Validation { field: field.to_owned(), message }
        })
    }
}

fn missing_field(message: &str) -> Option<&str> {
    message.strip_prefix("missing field `")?.split('`').next()
}

/// Body of `POST /api/command` and of `/relay` socket messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRequest {
    pub token: String,
    pub cmd: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl CommandRequest {
    pub fn new(token: &str, command: &InteractionCommand) -> Self {
        let v = serde_json::to_value(command).expect("command serializes");
        CommandRequest { token: token.to_owned(), cmd: v["cmd"].as_str().unwrap().to_owned(), params: v["params"].clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    /// The ray hit nothing.
    Miss,
    NotSelectable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommandResult {
    Selected { object_id: String, selected: bool },
    AnnotationCreated { annotation_id: u64, points: usize, fallback_points: usize },
    WindowedPosted { windowed_id: u64, history_len: usize },
    TargetPlaced { target_id: u64, position: Vec3 },
    Removed { count: usize },
    CameraSwitched { mode: RigMode },
    ArmSet { arm_length: f64 },
    CameraMoved { pose: Pose },
    Relayed { msg_id: u64, history_len: usize },
    PrivateTextSent { history_len: usize },
    OnAirSet { on_air: bool },
    /// Accepted but had no effect.
    Rejected { reason: Rejection },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("unauthorized: {0}")]
    Auth(String),
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error("{0}")]
    State(String),
}

impl CommandError {
    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        CommandError::Validation { field: field.to_owned(), message: message.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CommandError::Auth(_) => "auth",
            CommandError::Validation { .. } => "validation",
            CommandError::Rig(_) | CommandError::State(_) => "state",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({ "kind": self.kind(), "message": self.to_string() });
        if let CommandError::Validation { field, .. } = self {
            v["field"] = field.as_str().into();
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parse_names_fields() {
        let e = InteractionCommand::parse("place_target", &json!({"x": 3})).unwrap_err();
        assert_eq!(e, CommandError::validation("y", "missing field `y`"));
        let CommandError::Validation { field, .. } =
            InteractionCommand::parse("place_target", &json!({"x": "a", "y": 1})).unwrap_err()
        else {
            panic!()
        };
        assert_eq!(field, "x");
        let CommandError::Validation { field, .. } = InteractionCommand::parse("fly", &json!({})).unwrap_err() else {
            panic!()
        };
        assert_eq!(field, "cmd");
        let CommandError::Validation { field, .. } =
            InteractionCommand::parse("annotate_spec", &json!({"polyline_px": [[1, 2], [3]]})).unwrap_err()
        else {
            panic!()
        };
        assert!(field.starts_with("polyline_px"), "{field}");
    }

    #[test]
    fn unit_commands_accept_missing_params() {
        assert_eq!(
            InteractionCommand::parse("remove_targets", &serde_json::Value::Null).unwrap(),
            InteractionCommand::RemoveTargets {}
        );
    }

    #[test]
    fn request_round_trip() {
        let cmds = [
            InteractionCommand::SwitchCamera { mode: RigMode::MapView },
            InteractionCommand::RemoveAllAnnotations {},
            InteractionCommand::FreeCamInput(FreeCamInput {
                forward: 1.0,
                right: 0.0,
                up: 0.0,
                yaw_delta: 0.1,
                pitch_delta: 0.0,
                dt: 0.033,
            }),
            InteractionCommand::AnnotateWindowed { strokes_px: vec![vec![[1, 2], [3, 4]]] },
        ];
        for c in cmds {
            let req = CommandRequest::new("tok", &c);
            assert_eq!(req.cmd, c.name());
            assert_eq!(InteractionCommand::parse(&req.cmd, &req.params).unwrap(), c);
        }
        assert_eq!(
            serde_json::to_string(&CommandRequest::new("t", &InteractionCommand::RemoveAllAnnotations {})).unwrap(),
            r#"{"token":"t","cmd":"remove_all_annotations","params":{}}"#
        );
    }
}

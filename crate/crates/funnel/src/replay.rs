use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};
use streamfunnel::scenario::ScenarioScript;
use streamfunnel::scene::Scene;
use streamfunnel::session::{log_from_jsonl, replay, ReplayReport, Session};

use crate::config::Config;

/// Fresh session for the configured scene and script.
pub fn initial_session(config: &Config) -> Result<Session, String> {
    let scene = Scene::load(&config.scene_path).map_err(|e| e.to_string())?;
    let script = ScenarioScript::load(&config.scenario_path).map_err(|e| e.to_string())?;
    Ok(Session::new(Arc::new(scene), Arc::new(script), config.session()))
}

/// Replays a session log. Errors are input problems (unreadable or
/// malformed log, bad fixtures); a halted replay is a normal report.
pub fn replay_file(config: &Config, log_path: &Path) -> Result<ReplayReport, String> {
    let text = std::fs::read_to_string(log_path).map_err(|e| format!("cannot read log {}: {e}", log_path.display()))?;
    let log = log_from_jsonl(&text).map_err(|(line, e)| format!("{}:{line}: {e}", log_path.display()))?;
    let session = initial_session(config)?;
    Ok(replay(session, &log).1)
}

pub fn report_json(r: &ReplayReport) -> Value {
    json!({ "applied": r.applied, "halted_at": r.halted_at, "error": r.error, "digest": r.digest })
}

//! Server configuration: a TOML file with `SFNL_*` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use streamfunnel::camera::CameraIntrinsics;
use streamfunnel::fanout::{FanoutConfig, LadderRung};
use streamfunnel::rig::RigConfig;
use streamfunnel::session::SessionConfig;
use thiserror::Error;

pub const ENV_PREFIX: &str = "SFNL_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scene_path: PathBuf,
    pub scenario_path: PathBuf,
    pub listen_address: String,
    pub tick_hz: u32,
    pub render_width: u32,
    pub render_height: u32,
    pub vertical_fov_deg: f64,
    /// Preset-camera thumbnails sent to the co-host per second.
    pub thumbnail_hz: f64,
    pub tablet_refresh_ms: u64,
    pub segment_duration_ms: u64,
    pub window: usize,
    pub live_edge_offset: u64,
    pub rungs: Vec<LadderRung>,
    pub compress_segments: bool,
    pub arm_min: f64,
    pub arm_max: f64,
    pub arm_default: f64,
    pub smoothing_tau: f64,
    pub token_seed: String,
    /// Chat ledger is written here as JSON lines on shutdown.
    pub chat_log_path: Option<PathBuf>,
    /// Every state-changing input is appended here for `funnel replay`.
    pub session_log_path: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        let rig = RigConfig::default();
        let fan = FanoutConfig::default();
        Config {
            scene_path: "fixtures/escape_room.scene.json".into(),
            scenario_path: "fixtures/task_a.scenario.jsonl".into(),
            listen_address: "127.0.0.1:8080".into(),
            tick_hz: 30,
            render_width: 640,
            render_height: 360,
            vertical_fov_deg: 60.0,
            thumbnail_hz: 1.0,
            tablet_refresh_ms: 500,
            segment_duration_ms: fan.segment_duration_ms,
            window: fan.window,
            live_edge_offset: 10,
            rungs: fan.rungs,
            compress_segments: true,
            arm_min: rig.arm_min,
            arm_max: rig.arm_max,
            arm_default: rig.arm_default,
            smoothing_tau: rig.smoothing_tau,
            token_seed: "streamfunnel".into(),
            chat_log_path: None,
            session_log_path: None,
        }
    }
}

/// Reads an override value as a TOML literal, falling back to a bare string.
fn env_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

impl Config {
    /// Parses `text`, applies overrides, and validates.
    pub fn from_toml_with_env<I>(text: &str, env: I) -> Result<Config, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (key, raw) in env {
            if let Some(name) = key.strip_prefix(ENV_PREFIX) {
                table.insert(name.to_ascii_lowercase(), env_value(&raw));
            }
        }
        let cfg: Config = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        Config::from_toml_with_env(text, std::iter::empty())
    }

    /// File (or defaults when `path` is None) plus the process environment.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?,
            None => String::new(),
        };
        Config::from_toml_with_env(&text, std::env::vars())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tick_hz == 0 {
            return Err(invalid("tick_hz", "must be positive"));
        }
        if self.render_width == 0 || self.render_height == 0 {
            return Err(invalid("render_width", "render size must be positive"));
        }
        if !(self.vertical_fov_deg > 0.0 && self.vertical_fov_deg < 180.0) {
            return Err(invalid("vertical_fov_deg", "must be in (0, 180)"));
        }
        if !(self.thumbnail_hz > 0.0 && self.thumbnail_hz.is_finite()) {
            return Err(invalid("thumbnail_hz", "must be positive"));
        }
        if self.tablet_refresh_ms == 0 {
            return Err(invalid("tablet_refresh_ms", "must be positive"));
        }
        if self.segment_duration_ms == 0 {
            return Err(invalid("segment_duration_ms", "must be positive"));
        }
        if self.window == 0 {
            return Err(invalid("window", "must be positive"));
        }
        if self.live_edge_offset == 0 || self.live_edge_offset > self.window as u64 {
            return Err(invalid("live_edge_offset", format!("must be in 1..={}", self.window)));
        }
        if !(self.arm_min > 0.0 && self.arm_min <= self.arm_default && self.arm_default <= self.arm_max && self.arm_max.is_finite()) {
            return Err(invalid("arm_min", "need 0 < arm_min <= arm_default <= arm_max"));
        }
        if !(self.smoothing_tau > 0.0 && self.smoothing_tau.is_finite()) {
            return Err(invalid("smoothing_tau", "must be positive"));
        }
        if self.token_seed.is_empty() {
            return Err(invalid("token_seed", "must not be empty"));
        }
        self.fanout().validate().map_err(|e| invalid("rungs", e.to_string()))?;
        self.intrinsics().validate().map_err(|e| invalid("render_width", e.to_string()))?;
        Ok(())
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            vertical_fov: self.vertical_fov_deg.to_radians(),
            width_px: self.render_width,
            height_px: self.render_height,
            ..CameraIntrinsics::broadcast_default()
        }
    }

    pub fn session(&self) -> SessionConfig {
        SessionConfig {
            intrinsics: self.intrinsics(),
            rig: RigConfig {
                arm_min: self.arm_min,
                arm_max: self.arm_max,
                arm_default: self.arm_default,
                smoothing_tau: self.smoothing_tau,
                ..RigConfig::default()
            },
            tablet_refresh_ms: self.tablet_refresh_ms,
            token_seed: self.token_seed.clone(),
            ..SessionConfig::default()
        }
    }

    pub fn fanout(&self) -> FanoutConfig {
        FanoutConfig {
            source_width: self.render_width,
            source_height: self.render_height,
            fps: self.tick_hz,
            segment_duration_ms: self.segment_duration_ms,
            window: self.window,
            rungs: self.rungs.clone(),
            compress: self.compress_segments,
        }
    }
}

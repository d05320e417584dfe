//! Triangle-mesh scenes with stable object identity.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Pose, Vec3};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed scene: {0}")]
    Format(String),
    #[error("malformed scene object {object}: {message}")]
    ObjectFormat { object: String, message: String },
    #[error("invalid scene: {0}")]
    Validation(String),
    #[error("duplicate object id {0:?}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "[u8; 3]", into = "[u8; 3]")]
pub struct Rgb8(pub u8, pub u8, pub u8);

impl From<[u8; 3]> for Rgb8 {
    fn from(c: [u8; 3]) -> Self {
        Rgb8(c[0], c[1], c[2])
    }
}

impl From<Rgb8> for [u8; 3] {
    fn from(c: Rgb8) -> Self {
        [c.0, c.1, c.2]
    }
}

impl Rgb8 {
    pub const RED: Rgb8 = Rgb8(255, 0, 0);
    pub const TARGET_BLUE: Rgb8 = Rgb8(0, 120, 255);
    pub const OUTLINE_YELLOW: Rgb8 = Rgb8(255, 210, 0);

    pub fn scaled(self, k: f64) -> Rgb8 {
        let s = |c: u8| (c as f64 * k).round().clamp(0.0, 255.0) as u8;
        Rgb8(s(self.0), s(self.1), s(self.2))
    }
}

pub type Triangle = [Vec3; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    #[serde(rename = "id")]
    pub object_id: String,
    #[serde(rename = "name")]
    pub display_name: String,
    #[serde(rename = "color")]
    pub base_color: Rgb8,
    pub selectable: bool,
    pub triangles: Vec<Triangle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    #[serde(rename = "spawn")]
    pub spawn_pose: Pose,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn empty() -> Self {
        Scene { spawn_pose: Pose::IDENTITY, objects: Vec::new() }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| SceneError::Io { path: path.display().to_string(), source })?;
        Scene::from_json(&text)
    }

    /// Parses and validates a scene document. Objects are decoded one at a
    /// time so a format error can name the object it came from.
    pub fn from_json(text: &str) -> Result<Scene, SceneError> {
        let root: serde_json::Value = serde_json::from_str(text).map_err(|e| SceneError::Format(e.to_string()))?;
        let spawn = root.get("spawn").ok_or_else(|| SceneError::Format("missing field `spawn`".into()))?;
        let spawn_pose: Pose =
            serde_json::from_value(spawn.clone()).map_err(|e| SceneError::Format(format!("spawn: {e}")))?;
        let raw_objects = root
            .get("objects")
            .and_then(|o| o.as_array())
            .ok_or_else(|| SceneError::Format("missing array `objects`".into()))?;
        let mut objects = Vec::with_capacity(raw_objects.len());
        for (i, raw) in raw_objects.iter().enumerate() {
            let label = raw.get("id").and_then(|v| v.as_str()).map(str::to_owned).unwrap_or_else(|| format!("#{i}"));
            let obj: SceneObject = serde_json::from_value(raw.clone())
                .map_err(|e| SceneError::ObjectFormat { object: label, message: e.to_string() })?;
            objects.push(obj);
        }
        let scene = Scene { spawn_pose, objects };
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.objects.is_empty() {
            return Err(SceneError::Validation("scene has no objects".into()));
        }
        if !self.spawn_pose.is_valid() {
            return Err(SceneError::Validation("spawn pose is not finite".into()));
        }
        let mut seen = HashSet::new();
        for obj in &self.objects {
            if !seen.insert(obj.object_id.as_str()) {
                return Err(SceneError::DuplicateId(obj.object_id.clone()));
            }
            if obj.triangles.is_empty() {
                return Err(SceneError::ObjectFormat { object: obj.object_id.clone(), message: "no triangles".into() });
            }
            if obj.triangles.iter().flatten().any(|v| !v.is_finite()) {
                return Err(SceneError::ObjectFormat {
                    object: obj.object_id.clone(),
                    message: "non-finite vertex".into(),
                });
            }
        }
        Ok(())
    }

    pub fn triangle_count(&self) -> usize {
        self.objects.iter().map(|o| o.triangles.len()).sum()
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.object_id == id)
    }

    pub fn object_index(&self, id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.object_id == id)
    }
}

/// The twelve triangles of an axis-aligned box, wound counter-clockwise when
/// seen from outside.
pub fn box_triangles(center: Vec3, half: Vec3) -> Vec<Triangle> {
    let c = |sx: f64, sy: f64, sz: f64| center + Vec3::new(sx * half.x, sy * half.y, sz * half.z);
    let quads = [
        // +X
        [c(1., -1., 1.), c(1., -1., -1.), c(1., 1., -1.), c(1., 1., 1.)],
        // -X
        [c(-1., -1., -1.), c(-1., -1., 1.), c(-1., 1., 1.), c(-1., 1., -1.)],
        // +Y
        [c(-1., 1., 1.), c(1., 1., 1.), c(1., 1., -1.), c(-1., 1., -1.)],
        // -Y
        [c(-1., -1., -1.), c(1., -1., -1.), c(1., -1., 1.), c(-1., -1., 1.)],
        // +Z
        [c(-1., -1., 1.), c(1., -1., 1.), c(1., 1., 1.), c(-1., 1., 1.)],
        // -Z
        [c(1., -1., -1.), c(-1., -1., -1.), c(-1., 1., -1.), c(1., 1., -1.)],
    ];
    quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect()
}

/// Shared, immutable scene handle.
pub type SharedScene = Arc<Scene>;

//! Pinhole projection between world space and pixel coordinates.
//!
//! Pixel coordinates have their origin at the top-left corner with x to the
//! right and y down. Integer pixel `(i, j)` is sampled at exactly `(i, j)`,
//! so the image center of a 640x360 frame is pixel (320, 180).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Pose, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("pixel ({x}, {y}) outside {width}x{height} viewport")]
    PixelOutOfBounds { x: f64, y: f64, width: u32, height: u32 },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Vertical field of view in radians, within (0, π).
    pub vertical_fov: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub near: f64,
    pub far: f64,
}

impl CameraIntrinsics {
    pub fn new(vertical_fov: f64, width_px: u32, height_px: u32, near: f64, far: f64) -> Result<Self, GeomError> {
        let intr = CameraIntrinsics { vertical_fov, width_px, height_px, near, far };
        intr.validate()?;
        Ok(intr)
    }

    /// 640x360 with a 60 degree vertical field of view.
    pub fn broadcast_default() -> Self {
        CameraIntrinsics {
            vertical_fov: 60f64.to_radians(),
            width_px: 640,
            height_px: 360,
            near: 0.05,
            far: 200.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.vertical_fov > 0.0 && self.vertical_fov < std::f64::consts::PI) {
            return Err(GeomError::InvalidIntrinsics("vertical_fov must be in (0, pi)"));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(GeomError::InvalidIntrinsics("viewport must be non-empty"));
        }
        if !(self.near > 0.0) || !(self.far > self.near) {
            return Err(GeomError::InvalidIntrinsics("require 0 < near < far"));
        }
        Ok(())
    }

    pub fn with_size(&self, width_px: u32, height_px: u32) -> Self {
        CameraIntrinsics { width_px, height_px, ..*self }
    }

    pub fn aspect(&self) -> f64 {
        self.width_px as f64 / self.height_px as f64
    }

    /// Focal length in pixels; pixels are square.
    pub fn focal_px(&self) -> f64 {
        (self.height_px as f64 * 0.5) / (self.vertical_fov * 0.5).tan()
    }

    pub fn center(&self) -> (f64, f64) {
        (self.width_px as f64 * 0.5, self.height_px as f64 * 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; returns `None` for a zero vector.
    pub fn new(origin: Vec3, direction: Vec3) -> Option<Ray> {
        direction.try_normalize().map(|direction| Ray { origin, direction })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Projected pixel position plus camera-space depth (distance along the view
/// axis, positive in front of the camera).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub x_px: f64,
    pub y_px: f64,
    pub depth: f64,
}

/// World point to camera space (camera looks along local -Z).
pub fn to_camera_space(point: Vec3, camera: &Pose) -> Vec3 {
    camera.inverse_transform_point(point)
}

/// Projects a camera-space point with positive depth, without frustum tests.
pub fn project_camera_space(p: Vec3, intr: &CameraIntrinsics) -> Projection {
    let depth = -p.z;
    let f = intr.focal_px();
    let (cx, cy) = intr.center();
    Projection { x_px: cx + f * p.x / depth, y_px: cy - f * p.y / depth, depth }
}

/// Pixel coordinates and depth of `point`, or `None` when it lies outside the
/// view frustum (behind the near plane, past the far plane, or off-screen).
pub fn project(point: Vec3, camera: &Pose, intr: &CameraIntrinsics) -> Option<Projection> {
    let p = to_camera_space(point, camera);
    let depth = -p.z;
    if !(depth >= intr.near && depth <= intr.far) {
        return None;
    }
    let proj = project_camera_space(p, intr);
    let (w, h) = (intr.width_px as f64, intr.height_px as f64);
    if proj.x_px < 0.0 || proj.x_px >= w || proj.y_px < 0.0 || proj.y_px >= h {
        return None;
    }
    Some(proj)
}

/// Ray from the camera position through pixel `(x_px, y_px)`.
pub fn unproject(x_px: f64, y_px: f64, camera: &Pose, intr: &CameraIntrinsics) -> Result<Ray, GeomError> {
    let (w, h) = (intr.width_px as f64, intr.height_px as f64);
    if !(x_px >= 0.0 && x_px < w && y_px >= 0.0 && y_px < h) {
        return Err(GeomError::PixelOutOfBounds { x: x_px, y: y_px, width: intr.width_px, height: intr.height_px });
    }
    let f = intr.focal_px();
    let (cx, cy) = intr.center();
    let local = Vec3::new((x_px - cx) / f, (cy - y_px) / f, -1.0);
    let direction = camera.orientation.rotate(local).normalize();
    Ok(Ray { origin: camera.position, direction })
}

/// Camera-space depth of a world point along the camera's view axis.
pub fn view_depth(point: Vec3, camera: &Pose) -> f64 {
    -to_camera_space(point, camera).z
}

//! Software rendering of camera feeds with audience-scoped overlays.
//!
//! Scene geometry is flat shaded by a single directional light and depth
//! tested; overlays are drawn afterwards in a fixed order (targets,
//! annotations, selection outlines) so output is deterministic.

mod frame;
mod outline;
mod raster;
mod windowed;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::math::{Pose, UnitQuat, Vec3};
use crate::rig::{CameraRig, RigMode};
use crate::scenario::AvatarState;
use crate::scene::{box_triangles, Rgb8, Scene};

pub use frame::{downscale_box, Frame};
pub use outline::{outline_pass, outline_pixels};
pub use raster::{Culling, Raster, NO_OBJECT};
pub use windowed::{composite_windowed, Stroke2d};

pub const BACKGROUND: Rgb8 = Rgb8(24, 26, 32);
pub const AMBIENT: f64 = 0.35;
pub const AVATAR_COLOR: Rgb8 = Rgb8(232, 188, 150);
pub const THUMBNAIL_WIDTH: u32 = 160;
pub const THUMBNAIL_HEIGHT: u32 = 90;
pub const TARGET_RADIUS_M: f64 = 0.08;
/// Targets float this far off their surface.
const TARGET_LIFT_M: f64 = 0.003;
const TARGET_SEGMENTS: usize = 24;
/// Annotation strokes survive the depth test this far behind a surface.
const ANNOTATION_DEPTH_BIAS_M: f64 = 0.02;

/// Direction the light travels.
pub fn light_direction() -> Vec3 {
    Vec3::new(-1.0, -1.0, -1.0).normalize()
}

/// Flat-shaded color for a surface with normal `n` facing the viewer.
pub fn shade(base: Rgb8, n: Vec3) -> Rgb8 {
    let lambert = n.dot(-light_direction()).max(0.0);
    base.scaled(AMBIENT + (1.0 - AMBIENT) * lambert)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("viewport must be non-empty, got {0}x{1}")]
    ZeroViewport(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Audience {
    VrOnly,
    SpectatorOnly,
    Everyone,
}

/// Who a frame is rendered for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Viewer {
    /// The VR user's own view.
    VrUser,
    /// The broadcast seen by spectators and the co-host.
    Spectator,
}

impl Audience {
    pub fn visible_to(self, viewer: Viewer) -> bool {
        matches!(
            (self, viewer),
            (Audience::Everyone, _) | (Audience::VrOnly, Viewer::VrUser) | (Audience::SpectatorOnly, Viewer::Spectator)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotation_id: u64,
    /// `VrOnly` or `SpectatorOnly`.
    pub audience: Audience,
    pub points: Vec<Vec3>,
    pub color: Rgb8,
    pub stroke_px: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub target_id: u64,
    pub position: Vec3,
    pub normal: Vec3,
    pub radius_m: f64,
}

impl Target {
    pub const AUDIENCE: Audience = Audience::Everyone;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSet(pub BTreeSet<String>);

impl SelectionSet {
    pub fn contains(&self, id: &str) -> bool {
        self.0.contains(id)
    }

    /// Adds or removes `id`; returns whether it is now selected.
    pub fn toggle(&mut self, id: &str) -> bool {
        if !self.0.remove(id) {
            self.0.insert(id.to_owned());
            true
        } else {
            false
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overlays {
    pub annotations: Vec<Annotation>,
    pub targets: Vec<Target>,
    pub selection: SelectionSet,
}

impl Overlays {
    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty() && self.targets.is_empty() && self.selection.is_empty()
    }
}

/// Camera placement and output labelling for one render.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub pose: Pose,
    pub intr: CameraIntrinsics,
    pub label: RigMode,
}

/// Avatar stand-in boxes: head plus both hands, wound outward.
pub fn avatar_proxy(avatar: &AvatarState) -> Vec<[Vec3; 3]> {
    let mut tris = Vec::with_capacity(36);
    let parts = [
        (avatar.head, Vec3::new(0.12, 0.14, 0.13)),
        (avatar.left_hand, Vec3::new(0.045, 0.045, 0.07)),
        (avatar.right_hand, Vec3::new(0.045, 0.045, 0.07)),
    ];
    for (pose, half) in parts {
        for t in box_triangles(Vec3::ZERO, half) {
            tris.push([pose.transform_point(t[0]), pose.transform_point(t[1]), pose.transform_point(t[2])]);
        }
    }
    tris
}

/// Scene geometry and the avatar proxy, before any overlay pass.
pub fn render_geometry(scene: &Scene, avatar: Option<&AvatarState>, view: &View) -> Result<Raster, RenderError> {
    if view.intr.width_px == 0 || view.intr.height_px == 0 {
        return Err(RenderError::ZeroViewport(view.intr.width_px, view.intr.height_px));
    }
    let mut raster = Raster::new(view.pose, view.intr, BACKGROUND);
    let eye = view.pose.position;
    for (oi, obj) in scene.objects.iter().enumerate() {
        for tri in &obj.triangles {
            let Some(mut n) = (tri[1] - tri[0]).cross(tri[2] - tri[0]).try_normalize() else { continue };
            if n.dot(eye - tri[0]) < 0.0 {
                n = -n;
            }
            raster.triangle(tri, shade(obj.base_color, n), Some(oi as u32), Culling::None);
        }
    }
    if let Some(avatar) = avatar {
        for tri in avatar_proxy(avatar) {
            let n = (tri[1] - tri[0]).cross(tri[2] - tri[0]).normalize();
            raster.triangle(&tri, shade(AVATAR_COLOR, n), None, Culling::Back);
        }
    }
    Ok(raster)
}

fn draw_target(raster: &mut Raster, target: &Target) {
    let n = target.normal.try_normalize().unwrap_or(Vec3::Y);
    let frame = UnitQuat::look_rotation(-n, if n.y.abs() < 0.99 { Vec3::Y } else { Vec3::Z });
    let (u, v) = (frame.right(), frame.up());
    let center = target.position + n * TARGET_LIFT_M;
    let rim: Vec<Vec3> = (0..TARGET_SEGMENTS)
        .map(|k| {
            let a = k as f64 / TARGET_SEGMENTS as f64 * std::f64::consts::TAU;
            center + (u * a.cos() + v * a.sin()) * target.radius_m
        })
        .collect();
    for k in 0..TARGET_SEGMENTS {
        let tri = [center, rim[k], rim[(k + 1) % TARGET_SEGMENTS]];
        raster.triangle(&tri, Rgb8::TARGET_BLUE, None, Culling::None);
    }
}

fn draw_annotation(raster: &mut Raster, a: &Annotation) {
    let width = a.stroke_px.max(1) as f64;
    for seg in a.points.windows(2) {
        raster.line(seg[0], seg[1], width, a.color, ANNOTATION_DEPTH_BIAS_M);
    }
    if a.points.len() == 1 {
        raster.line(a.points[0], a.points[0], width, a.color, ANNOTATION_DEPTH_BIAS_M);
    }
}

/// Overlay passes for `viewer`: targets, scoped annotations, then selection
/// outlines (shown to everyone).
pub fn apply_overlays(raster: &mut Raster, scene: &Scene, overlays: &Overlays, viewer: Viewer) {
    if Target::AUDIENCE.visible_to(viewer) {
        for t in &overlays.targets {
            draw_target(raster, t);
        }
    }
    for a in overlays.annotations.iter().filter(|a| a.audience.visible_to(viewer)) {
        draw_annotation(raster, a);
    }
    outline_pass(raster, scene, &overlays.selection);
}

/// Full frame for `viewer`.
pub fn render(
    scene: &Scene,
    avatar: Option<&AvatarState>,
    view: &View,
    overlays: &Overlays,
    viewer: Viewer,
) -> Result<Frame, RenderError> {
    let mut raster = render_geometry(scene, avatar, view)?;
    apply_overlays(&mut raster, scene, overlays, viewer);
    Ok(raster.into_frame(view.label))
}

/// 160x90 preview of a rig's feed for the spectator audience, rendered at an
/// integer multiple of the thumbnail size and box filtered down.
pub fn render_thumbnail(
    scene: &Scene,
    avatar: &AvatarState,
    rig: &CameraRig,
    intr: &CameraIntrinsics,
    overlays: &Overlays,
) -> Frame {
    let k = (intr.height_px / THUMBNAIL_HEIGHT).max(1);
    let view = View {
        pose: rig.pose,
        intr: intr.with_size(THUMBNAIL_WIDTH * k, THUMBNAIL_HEIGHT * k),
        label: rig.mode,
    };
    let full = render(scene, Some(avatar), &view, overlays, Viewer::Spectator).expect("thumbnail viewport is non-empty");
    downscale_box(&full, THUMBNAIL_WIDTH, THUMBNAIL_HEIGHT).expect("supersampled size divides evenly")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SceneObject;

    fn cube_scene() -> Scene {
        Scene {
            spawn_pose: Pose::IDENTITY,
            objects: vec![SceneObject {
                object_id: "cube".into(),
                display_name: "Cube".into(),
                base_color: Rgb8(200, 80, 40),
                selectable: true,
                triangles: box_triangles(Vec3::new(0.0, 0.0, -5.0), Vec3::new(0.5, 0.5, 0.5)),
            }],
        }
    }

    fn view() -> View {
        View { pose: Pose::IDENTITY, intr: CameraIntrinsics::broadcast_default(), label: RigMode::Free }
    }

    #[test]
    fn empty_scene_is_background() {
        let f = render(&Scene::empty(), None, &view(), &Overlays::default(), Viewer::Spectator).unwrap();
        assert!(f.is_consistent());
        assert_eq!(f, Frame::filled(640, 360, BACKGROUND, RigMode::Free));
    }

    #[test]
    fn zero_viewport_rejected() {
        let mut v = view();
        v.intr.width_px = 0;
        assert_eq!(
            render(&Scene::empty(), None, &v, &Overlays::default(), Viewer::Spectator),
            Err(RenderError::ZeroViewport(0, 360))
        );
    }

    #[test]
    fn vr_annotation_hidden_from_spectators() {
        let scene = cube_scene();
        let mut overlays = Overlays::default();
        overlays.annotations.push(Annotation {
            annotation_id: 1,
            audience: Audience::VrOnly,
            points: vec![Vec3::new(-0.3, 0.0, -4.5), Vec3::new(0.3, 0.2, -4.5)],
            color: Rgb8::RED,
            stroke_px: 3,
        });
        let plain = render(&scene, None, &view(), &Overlays::default(), Viewer::Spectator).unwrap();
        let spec = render(&scene, None, &view(), &overlays, Viewer::Spectator).unwrap();
        let vr = render(&scene, None, &view(), &overlays, Viewer::VrUser).unwrap();
        assert_eq!(plain, spec);
        assert!(vr.diff_count(&plain) > 0);
    }

    #[test]
    fn target_visible_to_both() {
        let scene = cube_scene();
        let mut overlays = Overlays::default();
        overlays.targets.push(Target {
            target_id: 1,
            position: Vec3::new(0.0, 0.0, -4.5),
            normal: Vec3::Z,
            radius_m: TARGET_RADIUS_M,
        });
        for viewer in [Viewer::VrUser, Viewer::Spectator] {
            let f = render(&scene, None, &view(), &overlays, viewer).unwrap();
            assert_eq!(f.pixel(320, 180), Rgb8::TARGET_BLUE);
        }
    }

    #[test]
    fn head_proxy_culled_from_inside() {
        let scene = cube_scene();
        let avatar = AvatarState::standing(Pose::IDENTITY);
        let f = render(&scene, Some(&avatar), &view(), &Overlays::default(), Viewer::VrUser).unwrap();
        assert_eq!(f.pixel(320, 180), shade(Rgb8(200, 80, 40), Vec3::Z));
    }
}

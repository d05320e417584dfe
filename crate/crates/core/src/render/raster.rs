//! Z-buffered triangle and line rasterization in camera space.

use crate::camera::{project_camera_space, to_camera_space, CameraIntrinsics};
use crate::math::{Pose, Vec3};
use crate::scene::Rgb8;

use super::frame::Frame;
use crate::rig::RigMode;

/// Id-buffer value for pixels not covered by a scene object.
pub const NO_OBJECT: u32 = u32::MAX;

/// Color, depth and object-id buffers for one view.
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub color: Vec<u8>,
    pub depth: Vec<f64>,
    pub ids: Vec<u32>,
    camera: Pose,
    intr: CameraIntrinsics,
}

/// Screen-space vertex: pixel position plus reciprocal view depth.
#[derive(Debug, Clone, Copy)]
struct ScreenVert {
    x: f64,
    y: f64,
    inv_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Culling {
    /// Draw both faces.
    None,
    /// Skip triangles whose counter-clockwise side faces away from the camera.
    Back,
}

impl Raster {
    pub fn new(camera: Pose, intr: CameraIntrinsics, background: Rgb8) -> Raster {
        let n = intr.width_px as usize * intr.height_px as usize;
        let mut color = Vec::with_capacity(n * 3);
        for _ in 0..n {
            color.extend_from_slice(&[background.0, background.1, background.2]);
        }
        Raster {
            width: intr.width_px,
            height: intr.height_px,
            color,
            depth: vec![f64::INFINITY; n],
            ids: vec![NO_OBJECT; n],
            camera,
            intr,
        }
    }

    pub fn camera(&self) -> &Pose {
        &self.camera
    }

    pub fn into_frame(self, label: RigMode) -> Frame {
        Frame { width: self.width, height: self.height, pixels: self.color, camera_label: label, pts: 0 }
    }

    fn put(&mut self, idx: usize, c: Rgb8) {
        self.color[idx * 3..idx * 3 + 3].copy_from_slice(&[c.0, c.1, c.2]);
    }

    pub fn set_color(&mut self, idx: usize, c: Rgb8) {
        self.put(idx, c);
    }

    /// Clips a world-space triangle against the near plane and returns the
    /// resulting screen-space triangles.
    fn to_screen(&self, tri: &[Vec3; 3]) -> Vec<[ScreenVert; 3]> {
        let near = self.intr.near;
        let cam: Vec<Vec3> = tri.iter().map(|&v| to_camera_space(v, &self.camera)).collect();
        let inside = |p: &Vec3| -p.z >= near;
        if cam.iter().all(|p| !inside(p)) {
            return Vec::new();
        }
        let mut poly: Vec<Vec3> = Vec::with_capacity(4);
        for i in 0..3 {
            let (a, b) = (cam[i], cam[(i + 1) % 3]);
            match (inside(&a), inside(&b)) {
                (true, true) => poly.push(a),
                (true, false) => {
                    poly.push(a);
                    poly.push(clip_near(a, b, near));
                }
                (false, true) => poly.push(clip_near(a, b, near)),
                (false, false) => {}
            }
        }
        let sv: Vec<ScreenVert> = poly
            .iter()
            .map(|&p| {
                let pr = project_camera_space(p, &self.intr);
                ScreenVert { x: pr.x_px, y: pr.y_px, inv_depth: 1.0 / pr.depth }
            })
            .collect();
        (1..sv.len().saturating_sub(1)).map(|i| [sv[0], sv[i], sv[i + 1]]).collect()
    }

    /// Rasterizes a flat-colored triangle with depth testing. `id` is written
    /// into the id buffer when given.
    pub fn triangle(&mut self, tri: &[Vec3; 3], color: Rgb8, id: Option<u32>, culling: Culling) {
        if culling == Culling::Back {
            let n = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
            if n.dot(self.camera.position - tri[0]) <= 0.0 {
                return;
            }
        }
        for st in self.to_screen(tri) {
            self.fill(&st, color, id);
        }
    }

    fn fill(&mut self, v: &[ScreenVert; 3], color: Rgb8, id: Option<u32>) {
        let area = edge(&v[0], &v[1], v[2].x, v[2].y);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        let (w, h) = (self.width as f64, self.height as f64);
        let min_x = v.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_x = v.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).floor().min(w - 1.0);
        let min_y = v.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_y = v.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).floor().min(h - 1.0);
        if min_x > max_x || min_y > max_y {
            return;
        }
        let inv_area = 1.0 / area;
        let far = self.intr.far;
        for py in min_y as u32..=max_y as u32 {
            let y = py as f64;
            for px in min_x as u32..=max_x as u32 {
                let x = px as f64;
                let b0 = edge(&v[1], &v[2], x, y) * inv_area;
                let b1 = edge(&v[2], &v[0], x, y) * inv_area;
                let b2 = edge(&v[0], &v[1], x, y) * inv_area;
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                let inv_depth = b0 * v[0].inv_depth + b1 * v[1].inv_depth + b2 * v[2].inv_depth;
                let depth = 1.0 / inv_depth;
                if depth > far {
                    continue;
                }
                let idx = py as usize * self.width as usize + px as usize;
                if depth < self.depth[idx] {
                    self.depth[idx] = depth;
                    self.put(idx, color);
                    if let Some(id) = id {
                        self.ids[idx] = id;
                    }
                }
            }
        }
    }

    /// Constant-width screen-space line between two world points, depth
    /// tested with `bias` meters of slack and never writing depth.
    pub fn line(&mut self, a: Vec3, b: Vec3, width_px: f64, color: Rgb8, bias: f64) {
        let near = self.intr.near;
        let mut ca = to_camera_space(a, &self.camera);
        let mut cb = to_camera_space(b, &self.camera);
        let (ia, ib) = (-ca.z >= near, -cb.z >= near);
        match (ia, ib) {
            (false, false) => return,
            (true, false) => cb = clip_near(ca, cb, near),
            (false, true) => ca = clip_near(cb, ca, near),
            (true, true) => {}
        }
        let pa = project_camera_space(ca, &self.intr);
        let pb = project_camera_space(cb, &self.intr);
        let (ia, ib) = (1.0 / pa.depth, 1.0 / pb.depth);
        let r = (width_px * 0.5).max(0.5);
        let (w, h) = (self.width as f64, self.height as f64);
        let min_x = (pa.x_px.min(pb.x_px) - r).ceil().max(0.0);
        let max_x = (pa.x_px.max(pb.x_px) + r).floor().min(w - 1.0);
        let min_y = (pa.y_px.min(pb.y_px) - r).ceil().max(0.0);
        let max_y = (pa.y_px.max(pb.y_px) + r).floor().min(h - 1.0);
        if min_x > max_x || min_y > max_y {
            return;
        }
        let (dx, dy) = (pb.x_px - pa.x_px, pb.y_px - pa.y_px);
        let len2 = dx * dx + dy * dy;
        for py in min_y as u32..=max_y as u32 {
            for px in min_x as u32..=max_x as u32 {
                let (x, y) = (px as f64, py as f64);
                let s = if len2 > 0.0 { (((x - pa.x_px) * dx + (y - pa.y_px) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let (qx, qy) = (pa.x_px + dx * s, pa.y_px + dy * s);
                if (x - qx).powi(2) + (y - qy).powi(2) > r * r {
                    continue;
                }
                let depth = 1.0 / (ia + (ib - ia) * s);
                let idx = py as usize * self.width as usize + px as usize;
                if depth - bias < self.depth[idx] {
                    self.put(idx, color);
                }
            }
        }
    }
}

fn edge(a: &ScreenVert, b: &ScreenVert, x: f64, y: f64) -> f64 {
    (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x)
}

/// Point on segment `inside → outside` where it crosses the near plane.
fn clip_near(inside: Vec3, outside: Vec3, near: f64) -> Vec3 {
    let t = (-near - inside.z) / (outside.z - inside.z);
    inside.lerp(outside, t)
}

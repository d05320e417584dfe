//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's geometry, raycasting or rasterization code.
#![allow(dead_code)]

use std::path::PathBuf;

use streamfunnel::scene::Scene;
use streamfunnel::{Pose, Vec3};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn escape_room() -> Scene {
    Scene::load(fixture("escape_room.scene.json")).expect("escape room fixture loads")
}

type V = [f64; 3];

pub fn v(p: Vec3) -> V {
    [p.x, p.y, p.z]
}

fn sub(a: V, b: V) -> V {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: V, b: V) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V, b: V) -> V {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Row-major rotation matrix of the pose orientation.
pub fn rotation_matrix(p: &Pose) -> [[f64; 3]; 3] {
    let q = p.orientation;
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// World point into camera coordinates (camera looks down -Z, +Y up).
pub fn to_camera(point: V, cam: &Pose) -> V {
    let r = rotation_matrix(cam);
    let d = sub(point, v(cam.position));
    // Transpose multiply.
    [
        r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2],
        r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2],
        r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2],
    ]
}

/// Textbook pinhole projection with square pixels: (x_px, y_px, depth).
pub fn pinhole(point: V, cam: &Pose, fov_v: f64, w: u32, h: u32) -> Option<(f64, f64, f64)> {
    let c = to_camera(point, cam);
    let depth = -c[2];
    if depth <= 0.0 {
        return None;
    }
    let f = (h as f64 / 2.0) / (fov_v / 2.0).tan();
    Some((w as f64 / 2.0 + f * c[0] / depth, h as f64 / 2.0 - f * c[1] / depth, depth))
}

/// World-space direction through pixel (x, y), not normalized.
pub fn pixel_direction(x: f64, y: f64, cam: &Pose, fov_v: f64, w: u32, h: u32) -> V {
    let f = (h as f64 / 2.0) / (fov_v / 2.0).tan();
    let local = [x - w as f64 / 2.0, h as f64 / 2.0 - y, -f];
    let r = rotation_matrix(cam);
    [dot(r[0], local), dot(r[1], local), dot(r[2], local)]
}

/// Ray/triangle hit via the supporting plane and same-side edge tests.
pub fn plane_hit(origin: V, dir: V, tri: &[V; 3]) -> Option<f64> {
    let [a, b, c] = *tri;
    let n = cross(sub(b, a), sub(c, a));
    let denom = dot(n, dir);
    if denom == 0.0 || dot(n, n) == 0.0 {
        return None;
    }
    let t = dot(n, sub(a, origin)) / denom;
    if !(t >= 1e-6) {
        return None;
    }
    let p = [origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]];
    let inside = [(a, b), (b, c), (c, a)].iter().all(|(u, w)| dot(cross(sub(*w, *u), sub(p, *u)), n) >= 0.0);
    inside.then_some(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleHit {
    pub object_id: String,
    pub object_index: usize,
    pub triangle_index: usize,
    pub t: f64,
}

/// Loops over every triangle of every object. `dir` must be unit length
/// for `t` to be a distance. Hits within 1e-9 of the nearest are ties,
/// settled by `(object_id, triangle_index)`.
pub fn brute_force_raycast(scene: &Scene, origin: V, dir: V) -> Option<OracleHit> {
    let mut all = Vec::new();
    for (oi, obj) in scene.objects.iter().enumerate() {
        for (ti, tri) in obj.triangles.iter().enumerate() {
            if let Some(t) = plane_hit(origin, dir, &[v(tri[0]), v(tri[1]), v(tri[2])]) {
                all.push(OracleHit { object_id: obj.object_id.clone(), object_index: oi, triangle_index: ti, t });
            }
        }
    }
    let nearest = all.iter().map(|h| h.t).fold(f64::INFINITY, f64::min);
    all.into_iter()
        .filter(|h| h.t <= nearest + 1e-9)
        .min_by(|a, b| (a.object_id.as_str(), a.triangle_index).cmp(&(b.object_id.as_str(), b.triangle_index)))
}

/// Flat Lambert shade with the fixed light and ambient term.
pub fn reference_shade(base: [u8; 3], normal_towards_eye: V) -> [u8; 3] {
    let l = 1.0 / 3f64.sqrt();
    let to_light = [l, l, l];
    let len = dot(normal_towards_eye, normal_towards_eye).sqrt();
    let k = 0.35 + 0.65 * (dot(normal_towards_eye, to_light) / len).max(0.0);
    base.map(|c| (c as f64 * k).round().clamp(0.0, 255.0) as u8)
}

/// Screen-space single-pixel rasterizer: which of `tris` covers pixel
/// (x, y) nearest to the camera, and its view depth. Coverage uses 2D edge
/// functions on projected vertices, depth the plane through the pixel ray.
pub fn reference_pixel(tris: &[[V; 3]], cam: &Pose, fov_v: f64, w: u32, h: u32, x: f64, y: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, tri) in tris.iter().enumerate() {
        let Some(p) = tri.iter().map(|q| pinhole(*q, cam, fov_v, w, h)).collect::<Option<Vec<_>>>() else { continue };
        let edge = |a: (f64, f64, f64), b: (f64, f64, f64)| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
        let e = [edge(p[0], p[1]), edge(p[1], p[2]), edge(p[2], p[0])];
        let covered = e.iter().all(|&s| s >= 0.0) || e.iter().all(|&s| s <= 0.0);
        if !covered {
            continue;
        }
        let dir = pixel_direction(x, y, cam, fov_v, w, h);
        let n = cross(sub(tri[1], tri[0]), sub(tri[2], tri[0]));
        let o = v(cam.position);
        let t = dot(n, sub(tri[0], o)) / dot(n, dir);
        // Local direction has z = -f, so t * f is the view depth.
        let f = (h as f64 / 2.0) / (fov_v / 2.0).tan();
        let depth = t * f;
        if best.map_or(true, |(_, d)| depth < d) {
            best = Some((i, depth));
        }
    }
    best
}

/// Pixels at Chebyshev distance 1..=r from `region`, found by scanning each
/// candidate's neighborhood.
pub fn dilation_ring(region: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    let mut ring = vec![false; region.len()];
    for y in 0..h {
        for x in 0..w {
            if region[y * w + x] {
                continue;
            }
            let near = (y.saturating_sub(r)..=(y + r).min(h - 1))
                .any(|yy| (x.saturating_sub(r)..=(x + r).min(w - 1)).any(|xx| region[yy * w + xx]));
            ring[y * w + x] = near;
        }
    }
    ring
}

/// Number of 8-connected components among set pixels.
pub fn components8(mask: &[bool], w: usize, h: usize) -> usize {
    let mut seen = vec![false; mask.len()];
    let mut count = 0;
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    count
}

/// Whether a 4-connected path avoiding `wall` links the image border to
/// any pixel of `region`.
pub fn region_reachable_from_border(region: &[bool], wall: &[bool], w: usize, h: usize) -> bool {
    let mut seen = vec![false; region.len()];
    let mut stack: Vec<usize> = (0..region.len())
        .filter(|&i| {
            let (x, y) = (i % w, i / w);
            (x == 0 || y == 0 || x == w - 1 || y == h - 1) && !wall[i]
        })
        .collect();
    for &i in &stack {
        seen[i] = true;
    }
    while let Some(i) = stack.pop() {
        if region[i] {
            return true;
        }
        let (x, y) = (i % w, i / w);
        let mut push = |j: usize| {
            if !wall[j] && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        };
        if x > 0 {
            push(i - 1);
        }
        if x + 1 < w {
            push(i + 1);
        }
        if y > 0 {
            push(i - w);
        }
        if y + 1 < h {
            push(i + w);
        }
    }
    false
}

/// Composition of rigid transforms as 4x4 row-major matrices.
pub fn pose_matrix(p: &Pose) -> [[f64; 4]; 4] {
    let r = rotation_matrix(p);
    let t = v(p.position);
    [
        [r[0][0], r[0][1], r[0][2], t[0]],
        [r[1][0], r[1][1], r[1][2], t[1]],
        [r[2][0], r[2][1], r[2][2], t[2]],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

pub fn mat_mul(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

/// Inverse of a rigid transform matrix.
pub fn rigid_inverse(m: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut inv = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = m[j][i];
        }
        inv[i][3] = -(0..3).map(|k| m[k][i] * m[k][3]).sum::<f64>();
    }
    inv[3][3] = 1.0;
    inv
}

pub fn max_abs_diff(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> f64 {
    (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| (a[i][j] - b[i][j]).abs()).fold(0.0, f64::max)
}

/// Closed-form follow-rig positions and forward vectors from the rig
/// conventions: shoulder (0.35 right, 0.25 up, arm behind), follow (arm
/// behind and 0.3 arm above the horizontal forward), map (arm overhead).
pub fn follow_target(mode: &str, head: &Pose, arm: f64) -> (V, V) {
    let r = rotation_matrix(head);
    let col = |j: usize| [r[0][j], r[1][j], r[2][j]];
    let (right, up, back) = (col(0), col(1), col(2));
    let hp = v(head.position);
    let fwd = [-back[0], -back[1], -back[2]];
    let norm = |a: V| {
        let l = dot(a, a).sqrt();
        [a[0] / l, a[1] / l, a[2] / l]
    };
    let flat = {
        let f = [fwd[0], 0.0, fwd[2]];
        if dot(f, f) > 1e-12 { norm(f) } else { norm([up[0], 0.0, up[2]]) }
    };
    match mode {
        "over_shoulder" => {
            let p = [0, 1, 2].map(|i| hp[i] + 0.35 * right[i] + 0.25 * up[i] + arm * back[i]);
            (p, fwd)
        }
        "third_follow" => {
            let p = [hp[0] - arm * flat[0], hp[1] + 0.3 * arm, hp[2] - arm * flat[2]];
            (p, norm(sub(hp, p)))
        }
        "map_view" => ([hp[0], hp[1] + arm, hp[2]], [0.0, -1.0, 0.0]),
        _ => unreachable!(),
    }
}

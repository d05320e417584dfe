//! Bounding-volume hierarchy over scene triangles and nearest-hit raycasting.

use std::cmp::Ordering;
use std::sync::Arc;

use crate::camera::Ray;
use crate::math::Vec3;
use crate::scene::{Scene, Triangle};

/// Hits closer than this are ignored so rays leaving a surface do not
/// re-intersect it.
pub const MIN_HIT_T: f64 = 1e-6;
/// Distance within which two hits are treated as the same surface.
pub const TIE_EPS: f64 = 1e-9;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub object_id: Arc<str>,
    pub object_index: usize,
    pub triangle_index: usize,
    pub t: f64,
    pub point: Vec3,
    /// Unit geometric normal facing the ray origin.
    pub normal: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        let inf = f64::INFINITY;
        Aabb { min: Vec3::new(inf, inf, inf), max: Vec3::new(-inf, -inf, -inf) }
    }

    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn merge(&mut self, o: &Aabb) {
        self.min = self.min.min(o.min);
        self.max = self.max.max(o.max);
    }

    pub fn longest_axis(&self) -> usize {
        let d = self.max - self.min;
        if d.x >= d.y && d.x >= d.z {
            0
        } else if d.y >= d.z {
            1
        } else {
            2
        }
    }

    /// Entry distance of the ray into the box, if it enters before `t_max`.
    fn hit(&self, origin: Vec3, inv_dir: Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for axis in 0..3 {
            let inv = inv_dir.axis(axis);
            let o = origin.axis(axis);
            let mut near = (self.min.axis(axis) - o) * inv;
            let mut far = (self.max.axis(axis) - o) * inv;
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf keeps the slab open.
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleRef {
    pub object_index: u32,
    pub triangle_index: u32,
}

#[derive(Debug, Clone)]
enum Node {
    Interior { bounds: Aabb, left: u32, right: u32 },
    Leaf { bounds: Aabb, first: u32, count: u32 },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Interior { bounds, .. } | Node::Leaf { bounds, .. } => bounds,
        }
    }
}

/// Immutable acceleration structure. Every scene triangle is referenced by
/// exactly one leaf.
#[derive(Debug, Clone)]
pub struct SceneIndex {
    nodes: Vec<Node>,
    refs: Vec<TriangleRef>,
    triangles: Vec<Triangle>,
    object_ids: Vec<Arc<str>>,
}

struct BuildItem {
    r: TriangleRef,
    tri: Triangle,
    centroid: Vec3,
    bounds: Aabb,
}

impl SceneIndex {
    pub fn build(scene: &Scene) -> SceneIndex {
        let object_ids: Vec<Arc<str>> = scene.objects.iter().map(|o| Arc::from(o.object_id.as_str())).collect();
        let mut items: Vec<BuildItem> = Vec::with_capacity(scene.triangle_count());
        for (oi, obj) in scene.objects.iter().enumerate() {
            for (ti, tri) in obj.triangles.iter().enumerate() {
                let mut bounds = Aabb::empty();
                tri.iter().for_each(|&v| bounds.grow(v));
                items.push(BuildItem {
                    r: TriangleRef { object_index: oi as u32, triangle_index: ti as u32 },
                    tri: *tri,
                    centroid: (tri[0] + tri[1] + tri[2]) / 3.0,
                    bounds,
                });
            }
        }
        let mut index = SceneIndex { nodes: Vec::new(), refs: Vec::new(), triangles: Vec::new(), object_ids };
        if !items.is_empty() {
            index.build_node(&mut items[..]);
        }
        index
    }

    fn build_node(&mut self, items: &mut [BuildItem]) -> u32 {
        let mut bounds = Aabb::empty();
        let mut centroid_bounds = Aabb::empty();
        for it in items.iter() {
            bounds.merge(&it.bounds);
            centroid_bounds.grow(it.centroid);
        }
        let slot = self.nodes.len() as u32;
        if items.len() <= LEAF_SIZE {
            let first = self.refs.len() as u32;
            for it in items.iter() {
                self.refs.push(it.r);
                self.triangles.push(it.tri);
            }
            self.nodes.push(Node::Leaf { bounds, first, count: items.len() as u32 });
            return slot;
        }
        let axis = centroid_bounds.longest_axis();
        items.sort_by(|a, b| {
            a.centroid
                .axis(axis)
                .total_cmp(&b.centroid.axis(axis))
                .then(a.r.object_index.cmp(&b.r.object_index))
                .then(a.r.triangle_index.cmp(&b.r.triangle_index))
        });
        let mid = items.len() / 2;
        self.nodes.push(Node::Interior { bounds, left: 0, right: 0 });
        let (lo, hi) = items.split_at_mut(mid);
        let left = self.build_node(lo);
        let right = self.build_node(hi);
        self.nodes[slot as usize] = Node::Interior { bounds, left, right };
        slot
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    /// Total triangle references across all leaves.
    pub fn leaf_reference_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { count, .. } => *count as usize,
                _ => 0,
            })
            .sum()
    }

    pub fn leaf_references(&self) -> &[TriangleRef] {
        &self.refs
    }

    pub fn object_id(&self, object_index: usize) -> &Arc<str> {
        &self.object_ids[object_index]
    }

    pub fn object_count(&self) -> usize {
        self.object_ids.len()
    }

    /// Nearest intersection with `t >= MIN_HIT_T`. Hits within `TIE_EPS` of
    /// the nearest count as ties (coplanar faces compute `t` with different
    /// rounding) and resolve to the smallest `(object_id, triangle_index)`.
    pub fn raycast(&self, ray: &Ray) -> Option<Hit> {
        self.traverse(ray, |_| {})
    }

    /// Node indices in the order a raycast visits them.
    pub fn visit_order(&self, ray: &Ray) -> Vec<u32> {
        let mut order = Vec::new();
        self.traverse(ray, |n| order.push(n));
        order
    }

    fn traverse(&self, ray: &Ray, mut on_visit: impl FnMut(u32)) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut nearest = f64::INFINITY;
        let mut candidates: Vec<(f64, usize)> = Vec::new();
        let mut stack: Vec<u32> = vec![0];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            // Slack keeps boxes whose faces coincide with the best hit in play for ties.
            let limit = nearest + TIE_EPS;
            match node.bounds().hit(ray.origin, inv_dir, limit) {
                Some(_) => {}
                None => continue,
            }
            on_visit(ni);
            match node {
                Node::Leaf { first, count, .. } => {
                    for slot in *first as usize..(*first + *count) as usize {
                        let Some(t) = intersect_triangle(ray, &self.triangles[slot]) else { continue };
                        if t <= nearest + TIE_EPS {
                            nearest = nearest.min(t);
                            candidates.push((t, slot));
                        }
                    }
                }
                Node::Interior { left, right, .. } => {
                    // Visit the nearer child first.
                    let l = self.nodes[*left as usize].bounds().hit(ray.origin, inv_dir, limit);
                    let r = self.nodes[*right as usize].bounds().hit(ray.origin, inv_dir, limit);
                    match (l, r) {
                        (Some(lt), Some(rt)) if rt < lt => {
                            stack.push(*left);
                            stack.push(*right);
                        }
                        (Some(_), Some(_)) => {
                            stack.push(*right);
                            stack.push(*left);
                        }
                        (Some(_), None) => stack.push(*left),
                        (None, Some(_)) => stack.push(*right),
                        (None, None) => {}
                    }
                }
            }
        }
        candidates
            .into_iter()
            .filter(|(t, _)| *t <= nearest + TIE_EPS)
            .min_by(|a, b| self.ref_key_cmp(a.1, b.1))
            .map(|(t, slot)| self.make_hit(ray, t, slot))
    }

    fn ref_key_cmp(&self, a: usize, b: usize) -> Ordering {
        let (ra, rb) = (self.refs[a], self.refs[b]);
        self.object_ids[ra.object_index as usize]
            .cmp(&self.object_ids[rb.object_index as usize])
            .then(ra.triangle_index.cmp(&rb.triangle_index))
    }

    fn make_hit(&self, ray: &Ray, t: f64, slot: usize) -> Hit {
        let r = self.refs[slot];
        let tri = &self.triangles[slot];
        let mut normal = (tri[1] - tri[0]).cross(tri[2] - tri[0]).normalize();
        if normal.dot(ray.direction) > 0.0 {
            normal = -normal;
        }
        Hit {
            object_id: self.object_ids[r.object_index as usize].clone(),
            object_index: r.object_index as usize,
            triangle_index: r.triangle_index as usize,
            t,
            point: ray.at(t),
            normal,
        }
    }
}

/// Möller–Trumbore intersection; returns the ray parameter of a hit at
/// `t >= MIN_HIT_T`. Degenerate triangles never hit.
pub fn intersect_triangle(ray: &Ray, tri: &Triangle) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.direction.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = ray.origin - tri[0];
    let u = s.dot(p) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.direction.dot(q) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv_det;
    (t >= MIN_HIT_T).then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{box_triangles, Rgb8, SceneObject};
    use crate::math::Pose;

    fn scene_with(objects: Vec<SceneObject>) -> Scene {
        Scene { spawn_pose: Pose::IDENTITY, objects }
    }

    fn obj(id: &str, tris: Vec<Triangle>) -> SceneObject {
        SceneObject { object_id: id.into(), display_name: id.into(), base_color: Rgb8(9, 9, 9), selectable: true, triangles: tris }
    }

    #[test]
    fn unit_cube_front_face() {
        let scene = scene_with(vec![obj("cube", box_triangles(Vec3::new(0.0, 0.0, -5.0), Vec3::new(0.5, 0.5, 0.5)))]);
        let index = SceneIndex::build(&scene);
        let ray = Ray::new(Vec3::ZERO, Vec3::new(0.0, 0.0, -1.0)).unwrap();
        let hit = index.raycast(&ray).unwrap();
        assert!((hit.t - 4.5).abs() < 1e-12);
        assert!((hit.point - Vec3::new(0.0, 0.0, -4.5)).length() < 1e-12);
        assert!((hit.normal - Vec3::new(0.0, 0.0, 1.0)).length() < 1e-12);
        assert_eq!(&*hit.object_id, "cube");
    }

    #[test]
    fn empty_index_misses() {
        let index = SceneIndex::build(&Scene::empty());
        assert!(index.is_empty());
        let ray = Ray::new(Vec3::ZERO, Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert!(index.raycast(&ray).is_none());
    }

    #[test]
    fn two_triangle_scene_has_two_leaf_refs() {
        let t = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let scene = scene_with(vec![obj("a", vec![t]), obj("b", vec![t])]);
        assert_eq!(SceneIndex::build(&scene).leaf_reference_count(), 2);
    }

    #[test]
    fn coincident_triangles_break_ties_by_id() {
        let t = [Vec3::new(-1.0, -1.0, -2.0), Vec3::new(1.0, -1.0, -2.0), Vec3::new(0.0, 1.0, -2.0)];
        let scene = scene_with(vec![obj("zeta", vec![t]), obj("alpha", vec![t, t])]);
        let hit = SceneIndex::build(&scene).raycast(&Ray::new(Vec3::ZERO, -Vec3::Z).unwrap()).unwrap();
        assert_eq!((&*hit.object_id, hit.triangle_index), ("alpha", 0));
    }

    #[test]
    fn normal_faces_ray_from_behind() {
        let scene = scene_with(vec![obj("cube", box_triangles(Vec3::ZERO, Vec3::new(0.5, 0.5, 0.5)))]);
        let index = SceneIndex::build(&scene);
        // From inside the box the hit face's normal must point back inward.
        let hit = index.raycast(&Ray::new(Vec3::ZERO, Vec3::X).unwrap()).unwrap();
        assert!(hit.normal.dot(Vec3::X) <= 0.0);
        assert!((hit.t - 0.5).abs() < 1e-12);
    }
}

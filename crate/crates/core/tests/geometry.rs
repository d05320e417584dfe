mod support;

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamfunnel::bvh::SceneIndex;
use streamfunnel::camera::{project, unproject, view_depth, CameraIntrinsics, Ray};
use streamfunnel::scene::{box_triangles, Rgb8, Scene, SceneObject};
use streamfunnel::{Pose, UnitQuat, Vec3};
use support::*;

fn wide() -> CameraIntrinsics {
    CameraIntrinsics::new(FRAC_PI_2, 640, 360, 0.05, 200.0).unwrap()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let p = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if p.length_squared() > 1e-4 && p.length_squared() <= 1.0 {
            return p.normalize();
        }
    }
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let q = UnitQuat::from_wxyz(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    Pose::new(Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.2..2.5), rng.gen_range(-3.0..3.0)), q)
}

#[test]
fn projection_matches_pinhole_oracle() {
    let intr = wide();
    let p = project(Vec3::new(0.0, 0.0, -1.0), &Pose::IDENTITY, &intr).unwrap();
    assert_eq!((p.x_px, p.y_px, p.depth), (320.0, 180.0, 1.0));
    assert!(project(Vec3::new(0.0, 0.0, 1.0), &Pose::IDENTITY, &intr).is_none());
    let p = project(Vec3::new(0.5, 0.0, -1.0), &Pose::IDENTITY, &intr).unwrap();
    let (ox, oy, _) = pinhole([0.5, 0.0, -1.0], &Pose::IDENTITY, FRAC_PI_2, 640, 360).unwrap();
    // f = 180 px at a 90 degree vertical field of view.
    assert!((ox - 410.0).abs() < 1e-12);
    assert!((p.x_px - ox).abs() < 1e-9 && (p.y_px - oy).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let intr = CameraIntrinsics::broadcast_default();
    let mut checked = 0;
    while checked < 1000 {
        let cam = random_pose(&mut rng);
        let pt = Vec3::new(rng.gen_range(-6.0..6.0), rng.gen_range(-1.0..4.0), rng.gen_range(-6.0..6.0));
        let Some(p) = project(pt, &cam, &intr) else { continue };
        let (ox, oy, od) = pinhole(v(pt), &cam, intr.vertical_fov, 640, 360).unwrap();
        assert!((p.x_px - ox).abs() < 1e-7 && (p.y_px - oy).abs() < 1e-7 && (p.depth - od).abs() < 1e-9);
        checked += 1;
    }
}

#[test]
fn unproject_examples_and_round_trip() {
    let intr = wide();
    let r = unproject(320.0, 180.0, &Pose::IDENTITY, &intr).unwrap();
    assert!((r.direction - Vec3::new(0.0, 0.0, -1.0)).length() < 1e-12);
    let r = unproject(0.0, 0.0, &Pose::IDENTITY, &intr).unwrap();
    assert!(r.direction.x < 0.0 && r.direction.y > 0.0 && r.direction.z < 0.0);
    assert!(unproject(640.0, 0.0, &Pose::IDENTITY, &intr).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let intr = CameraIntrinsics::broadcast_default();
    for _ in 0..1000 {
        let cam = random_pose(&mut rng);
        let (x, y) = (rng.gen_range(0.0..640.0), rng.gen_range(0.0..360.0));
        let ray = unproject(x, y, &cam, &intr).unwrap();
        assert!((ray.direction.length() - 1.0).abs() < 1e-9);
        // Sample along the ray, keeping the point's view depth inside (near, far).
        let depth = rng.gen_range(0.06..150.0);
        let t = depth / -(cam.orientation.conjugate().rotate(ray.direction).z);
        let p = project(ray.at(t), &cam, &intr).expect("point on pixel ray is in frustum");
        assert!((p.x_px - x).abs() <= 0.5 && (p.y_px - y).abs() <= 0.5, "({x},{y}) -> ({},{})", p.x_px, p.y_px);
    }
}

#[test]
fn project_unproject_passes_through_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let intr = CameraIntrinsics::broadcast_default();
    let mut n = 0;
    while n < 1000 {
        let cam = random_pose(&mut rng);
        let pt = Vec3::new(rng.gen_range(-6.0..6.0), rng.gen_range(-1.0..4.0), rng.gen_range(-6.0..6.0));
        let Some(p) = project(pt, &cam, &intr) else { continue };
        let ray = unproject(p.x_px, p.y_px, &cam, &intr).unwrap();
        let t = (pt - ray.origin).dot(ray.direction);
        assert!((ray.at(t) - pt).length() < 1e-4);
        assert!((view_depth(ray.at(t), &cam) - p.depth).abs() < 1e-4);
        n += 1;
    }
}

fn unit_cube_scene() -> Scene {
    Scene {
        spawn_pose: Pose::IDENTITY,
        objects: vec![SceneObject {
            object_id: "cube".into(),
            display_name: "Cube".into(),
            base_color: Rgb8(128, 128, 128),
            selectable: true,
            triangles: box_triangles(Vec3::new(0.0, 0.0, -5.0), Vec3::new(0.5, 0.5, 0.5)),
        }],
    }
}

#[test]
fn raycast_axis_aligned_cube() {
    let idx = SceneIndex::build(&unit_cube_scene());
    let ray = Ray::new(Vec3::ZERO, Vec3::new(0.0, 0.0, -1.0)).unwrap();
    let hit = idx.raycast(&ray).unwrap();
    assert!((hit.t - 4.5).abs() < 1e-12);
    assert!((hit.point - Vec3::new(0.0, 0.0, -4.5)).length() < 1e-12);
    assert!((hit.normal - Vec3::new(0.0, 0.0, 1.0)).length() < 1e-12);
    assert!(SceneIndex::build(&Scene::empty()).raycast(&ray).is_none());
}

#[test]
fn raycast_equals_brute_force_on_escape_room() {
    let scene = escape_room();
    let idx = SceneIndex::build(&scene);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut hits = 0;
    for _ in 0..1000 {
        let origin = Vec3::new(rng.gen_range(-3.8..3.8), rng.gen_range(0.1..2.9), rng.gen_range(-3.8..3.8));
        let dir = random_unit(&mut rng);
        let ray = Ray::new(origin, dir).unwrap();
        let got = idx.raycast(&ray);
        let want = brute_force_raycast(&scene, v(ray.origin), v(ray.direction));
        match (&got, &want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                assert_eq!((g.object_id.as_ref(), g.triangle_index), (w.object_id.as_str(), w.triangle_index));
                assert!((g.t - w.t).abs() < 1e-6);
                assert!((g.point - ray.at(g.t)).length() < 1e-6);
                assert!((g.normal.length() - 1.0).abs() < 1e-9 && g.normal.dot(ray.direction) <= 0.0);
                hits += 1;
            }
            _ => panic!("mismatch for {ray:?}: {got:?} vs {want:?}"),
        }
    }
    // The room has no ceiling, so steep upward rays escape.
    assert!(hits > 500, "{hits}");
}

#[test]
fn coplanar_faces_resolve_by_id_despite_rounding() {
    // A crate resting on a floor: its bottom face lies in the floor plane
    // but is triangulated differently, so computed distances can differ in
    // the last bit.
    let slab = |id: &str, center: Vec3, half: Vec3| SceneObject {
        object_id: id.into(),
        display_name: id.into(),
        base_color: Rgb8(100, 100, 100),
        selectable: true,
        triangles: box_triangles(center, half),
    };
    let scene = Scene {
        spawn_pose: Pose::IDENTITY,
        objects: vec![
            slab("floor", Vec3::new(0.0, -0.05, 0.0), Vec3::new(4.1, 0.05, 4.1)),
            slab("crate", Vec3::new(0.3, 0.4, -0.7), Vec3::new(0.8, 0.4, 0.45)),
        ],
    };
    let idx = SceneIndex::build(&scene);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..5000 {
        let target = Vec3::new(rng.gen_range(-0.5..1.1), 0.0, rng.gen_range(-1.15..-0.25));
        let origin = Vec3::new(rng.gen_range(-0.45..1.05), rng.gen_range(0.05..0.75), rng.gen_range(-1.1..-0.3));
        let ray = Ray::new(origin, target - origin).unwrap();
        let got = idx.raycast(&ray).unwrap();
        let want = brute_force_raycast(&scene, v(ray.origin), v(ray.direction)).unwrap();
        // Seen from inside the crate, its bottom face and the floor top coincide.
        assert_eq!((got.object_id.as_ref(), got.triangle_index), (want.object_id.as_str(), want.triangle_index));
        assert_eq!(got.object_id.as_ref(), "crate");
        assert!((got.t - want.t).abs() < 1e-6);
    }
}

#[test]
fn raycast_matches_brute_force_over_many_seeds() {
    let scene = escape_room();
    let idx = SceneIndex::build(&scene);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let origin = Vec3::new(rng.gen_range(-3.8..3.8), rng.gen_range(0.1..2.9), rng.gen_range(-3.8..3.8));
            let ray = Ray::new(origin, random_unit(&mut rng)).unwrap();
            let got = idx.raycast(&ray).map(|h| (h.object_id.to_string(), h.triangle_index));
            let want = brute_force_raycast(&scene, v(ray.origin), v(ray.direction)).map(|h| (h.object_id, h.triangle_index));
            assert_eq!(got, want, "seed {seed} {ray:?}");
        }
    }
}

#[test]
fn index_conserves_triangles_and_is_deterministic() {
    let two = Scene {
        spawn_pose: Pose::IDENTITY,
        objects: vec![SceneObject {
            object_id: "quad".into(),
            display_name: "Quad".into(),
            base_color: Rgb8(1, 2, 3),
            selectable: false,
            triangles: box_triangles(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0))[..2].to_vec(),
        }],
    };
    assert_eq!(SceneIndex::build(&two).leaf_reference_count(), 2);

    let scene = escape_room();
    assert!(scene.objects.len() >= 8);
    for id in ["wand", "cauldron", "door"] {
        assert!(scene.object(id).is_some(), "{id}");
    }
    let a = SceneIndex::build(&scene);
    let b = SceneIndex::build(&scene);
    assert_eq!(a.leaf_reference_count(), scene.triangle_count());
    let mut seen: Vec<(u32, u32)> = a.leaf_references().iter().map(|r| (r.object_index, r.triangle_index)).collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), scene.triangle_count());

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let ray = Ray::new(Vec3::new(rng.gen_range(-3.0..3.0), 1.5, rng.gen_range(-3.0..3.0)), random_unit(&mut rng)).unwrap();
        assert_eq!(a.visit_order(&ray), b.visit_order(&ray));
        assert_eq!(a.raycast(&ray), b.raycast(&ray));
    }
}

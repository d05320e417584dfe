mod support;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamfunnel::rig::{target_pose, CameraRig, FreeCamInput, RigConfig, RigError, RigMode};
use streamfunnel::scenario::{AvatarState, ScenarioEvent, ScenarioScript};
use streamfunnel::scene::Scene;
use streamfunnel::session::{Session, SessionConfig};
use streamfunnel::{Pose, UnitQuat, Vec3};
use support::*;

fn random_quat(rng: &mut ChaCha8Rng) -> UnitQuat {
    UnitQuat::from_wxyz(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn random_head(rng: &mut ChaCha8Rng) -> Pose {
    Pose::new(Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(0.5..2.0), rng.gen_range(-5.0..5.0)), random_quat(rng))
}

fn avatar(head: Pose, right: Pose) -> AvatarState {
    AvatarState { head, left_hand: head, right_hand: right, t: 0.0 }
}

#[test]
fn first_person_tracks_head_through_task_a() {
    let scene = Arc::new(Scene::load(fixture("escape_room.scene.json")).unwrap());
    let script = Arc::new(ScenarioScript::load(fixture("task_a.scenario.jsonl")).unwrap());
    // The t = 0 keyframe is consumed when the session is built.
    let total = script.events().iter().filter(|e| e.t > 0.0).count();
    let mut session = Session::new(scene, script, SessionConfig { tablet_refresh_ms: 1_000_000, ..SessionConfig::default() });
    let mut emitted = 0;
    let mut grabbed_seen = false;
    while !session.script_finished() || session.clock_ms() < 61_000 {
        for o in session.tick(33) {
            emitted += 1;
            assert!(o.rejected.is_none(), "{:?} rejected: {:?}", o.event, o.rejected);
            if matches!(o.event.event, ScenarioEvent::GrabMainCamera) {
                grabbed_seen = true;
            }
        }
        let head = session.avatar().head;
        let fp = session.rig(RigMode::FirstPerson).pose;
        assert_eq!(fp.position.x.to_bits(), head.position.x.to_bits());
        assert_eq!(fp, head);
    }
    assert_eq!(emitted, total);
    assert!(grabbed_seen);
    assert!(!session.rig(RigMode::Free).grabbed_by_vr);
}

#[test]
fn zero_tau_follow_rigs_hit_closed_form_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cfg = RigConfig { smoothing_tau: 0.0, ..RigConfig::default() };
    for _ in 0..2000 {
        let head = random_head(&mut rng);
        let a = avatar(head, head);
        let arm = rng.gen_range(0.5..20.0);
        for (mode, name) in [(RigMode::OverShoulder, "over_shoulder"), (RigMode::ThirdFollow, "third_follow"), (RigMode::MapView, "map_view")] {
            let mut rig = CameraRig::new(mode, Pose::IDENTITY, cfg);
            rig.set_arm_length(arm).unwrap();
            rig.update(&a, rng.gen_range(0.001..0.1));
            assert_eq!(Some(rig.pose), target_pose(mode, &head, arm, &cfg));
            let (pos, fwd) = follow_target(name, &head, arm);
            let f = rig.pose.orientation.forward();
            assert!((v(rig.pose.position)[0] - pos[0]).abs() < 1e-9);
            assert!((v(rig.pose.position)[1] - pos[1]).abs() < 1e-9);
            assert!((v(rig.pose.position)[2] - pos[2]).abs() < 1e-9);
            assert!((f.x - fwd[0]).abs() < 1e-9 && (f.y - fwd[1]).abs() < 1e-9 && (f.z - fwd[2]).abs() < 1e-9);
        }
    }
}

#[test]
fn smoothing_distance_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..200 {
        let head = random_head(&mut rng);
        let a = avatar(head, head);
        let tau = rng.gen_range(0.05..1.0);
        let cfg = RigConfig { smoothing_tau: tau, ..RigConfig::default() };
        let mode = [RigMode::OverShoulder, RigMode::ThirdFollow, RigMode::MapView][rng.gen_range(0..3)];
        let mut rig = CameraRig::new(mode, random_head(&mut rng), cfg);
        let target = rig.target(&a).unwrap().position;
        let mut prev = rig.pose.position.distance(target);
        for _ in 0..30 {
            let dt = rng.gen_range(0.005..0.1);
            rig.update(&a, dt);
            let d = rig.pose.position.distance(target);
            assert!(d <= prev * (-dt / tau).exp() + 1e-9);
            assert!(d < prev || prev == 0.0);
            prev = d;
        }
    }
}

#[test]
fn arm_stays_clamped_under_random_operations() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let cfg = RigConfig::default();
    let specials = [f64::NAN, f64::INFINITY, f64::NEG_INFINITY, -1.0, 0.0, 0.5, 20.0, 1e300, -0.0];
    for _ in 0..10_000 {
        let mode = [RigMode::Free, RigMode::FirstPerson, RigMode::OverShoulder, RigMode::ThirdFollow, RigMode::MapView][rng.gen_range(0..5)];
        let mut rig = CameraRig::new(mode, random_head(&mut rng), cfg);
        let head = random_head(&mut rng);
        for _ in 0..rng.gen_range(1..25) {
            match rng.gen_range(0..6) {
                0 => {
                    let value = if rng.gen_bool(0.3) { specials[rng.gen_range(0..specials.len())] } else { rng.gen_range(-50.0..50.0) };
                    let r = rig.set_arm_length(value);
                    assert_eq!(r.is_err(), value.is_nan());
                }
                1 => rig.update(&avatar(head, head), rng.gen_range(0.001..0.2)),
                2 => {
                    let input = FreeCamInput {
                        forward: rng.gen_range(-1.0..1.0),
                        right: rng.gen_range(-1.0..1.0),
                        up: rng.gen_range(-1.0..1.0),
                        yaw_delta: rng.gen_range(-1.0..1.0),
                        pitch_delta: rng.gen_range(-2.0..2.0),
                        dt: rng.gen_range(0.001..0.1),
                    };
                    let r = rig.apply_free_input(&input, 3.0);
                    if rig.grabbed_by_vr {
                        assert_eq!(r, Err(RigError::Grabbed));
                    }
                }
                3 => {
                    let near = Pose::new(rig.pose.position + Vec3::new(rng.gen_range(-0.6..0.6), 0.0, 0.0), random_quat(&mut rng));
                    let _ = rig.grab(&near);
                }
                4 => {
                    let _ = rig.move_grabbed(&random_head(&mut rng));
                }
                _ => {
                    let _ = rig.release();
                }
            }
            assert!((cfg.arm_min..=cfg.arm_max).contains(&rig.arm_length));
            assert!(!rig.grabbed_by_vr || rig.mode == RigMode::Free);
            assert!(rig.pose.orientation.norm() - 1.0 < 1e-9);
        }
    }
}

#[test]
fn grab_preserves_relative_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..1000 {
        let cam = random_head(&mut rng);
        let mut rig = CameraRig::new(RigMode::Free, cam, RigConfig::default());
        let offset = Vec3::new(rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25));
        let hand0 = Pose::new(cam.position + offset, random_quat(&mut rng));
        rig.grab(&hand0).unwrap();
        let rel = mat_mul(&rigid_inverse(&pose_matrix(&hand0)), &pose_matrix(&cam));
        let mut hand = hand0;
        for _ in 0..5 {
            hand = Pose::new(hand.position + Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)), random_quat(&mut rng));
            rig.move_grabbed(&hand).unwrap();
            let want = mat_mul(&pose_matrix(&hand), &rel);
            assert!(max_abs_diff(&pose_matrix(&rig.pose), &want) < 1e-9);
            let now_rel = mat_mul(&rigid_inverse(&pose_matrix(&hand)), &pose_matrix(&rig.pose));
            assert!(max_abs_diff(&now_rel, &rel) < 1e-9);
        }
        // Rotating the hand in place by q rotates the camera by q.
        let q = random_quat(&mut rng);
        let turned = Pose::new(hand.position, q * hand.orientation);
        let before = rig.pose.orientation;
        rig.move_grabbed(&turned).unwrap();
        let want = pose_matrix(&Pose::new(Vec3::ZERO, q * before));
        let got = pose_matrix(&Pose::new(Vec3::ZERO, rig.pose.orientation));
        assert!(max_abs_diff(&got, &want) < 1e-9);
        rig.release().unwrap();
        let frozen = rig.pose;
        assert!(rig.move_grabbed(&hand).is_err());
        assert_eq!(rig.pose, frozen);
    }
}

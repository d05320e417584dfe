//! Co-host camera rigs: a free main camera plus four presets that follow the
//! VR user's avatar.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Pose, UnitQuat, Vec3};
use crate::scenario::AvatarState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RigError {
    #[error("arm length must be a number")]
    ArmNotANumber,
    #[error("free-camera input requires the free rig")]
    NotFree,
    #[error("the main camera is held by the VR user")]
    Grabbed,
    #[error("the main camera is not grabbed")]
    NotGrabbed,
    #[error("hand is {distance:.3} m from the camera, beyond reach {reach} m")]
    OutOfReach { distance: f64, reach: f64 },
    #[error("invalid free-camera input: {0}")]
    InvalidInput(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum RigMode {
    Free,
    FirstPerson,
    OverShoulder,
    ThirdFollow,
    MapView,
}

impl RigMode {
    pub const ALL: [RigMode; 5] =
        [RigMode::Free, RigMode::FirstPerson, RigMode::OverShoulder, RigMode::ThirdFollow, RigMode::MapView];

    /// Stable camera identifier used in media records.
    pub fn camera_id(self) -> u8 {
        self as u8
    }

    pub fn from_camera_id(id: u8) -> Option<RigMode> {
        RigMode::ALL.get(id as usize).copied()
    }

    pub fn uses_arm(self) -> bool {
        matches!(self, RigMode::OverShoulder | RigMode::ThirdFollow | RigMode::MapView)
    }

    pub fn label(self) -> &'static str {
        match self {
            RigMode::Free => "free",
            RigMode::FirstPerson => "first_person",
            RigMode::OverShoulder => "over_shoulder",
            RigMode::ThirdFollow => "third_follow",
            RigMode::MapView => "map_view",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigConfig {
    pub arm_min: f64,
    pub arm_max: f64,
    pub arm_default: f64,
    pub smoothing_tau: f64,
    pub shoulder_right: f64,
    pub shoulder_up: f64,
    /// Follow-camera height as a fraction of the arm length.
    pub follow_elevation: f64,
    pub grab_reach: f64,
    /// Free-camera pitch stays this far inside ±90°.
    pub pitch_margin: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            arm_min: 0.5,
            arm_max: 20.0,
            arm_default: 2.0,
            smoothing_tau: 0.25,
            shoulder_right: 0.35,
            shoulder_up: 0.25,
            follow_elevation: 0.3,
            grab_reach: 0.5,
            pitch_margin: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeCamInput {
    pub forward: f64,
    pub right: f64,
    pub up: f64,
    pub yaw_delta: f64,
    pub pitch_delta: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub mode: RigMode,
    pub pose: Pose,
    pub arm_length: f64,
    pub grabbed_by_vr: bool,
    pub smoothing_tau: f64,
    pub config: RigConfig,
    /// Camera pose relative to the grabbing hand while grabbed.
    grab_offset: Option<Pose>,
}

/// Head forward flattened onto the ground plane. A head looking straight up
/// or down falls back to its up vector, which then points horizontally.
pub fn horizontal_forward(head: &Pose) -> Vec3 {
    let q = head.orientation;
    let f = q.forward();
    Vec3::new(f.x, 0.0, f.z)
        .try_normalize()
        .or_else(|| {
            let u = q.up();
            Vec3::new(u.x * -f.y.signum(), 0.0, u.z * -f.y.signum()).try_normalize()
        })
        .unwrap_or(-Vec3::Z)
}

/// Closed-form pose a follow rig converges to. `Free` has no target.
pub fn target_pose(mode: RigMode, head: &Pose, arm: f64, cfg: &RigConfig) -> Option<Pose> {
    let q = head.orientation;
    let p = head.position;
    match mode {
        RigMode::Free => None,
        RigMode::FirstPerson => Some(*head),
        RigMode::OverShoulder => {
            let pos = p + q.right() * cfg.shoulder_right + q.up() * cfg.shoulder_up - q.forward() * arm;
            Some(Pose::new(pos, q))
        }
        RigMode::ThirdFollow => {
            let fh = horizontal_forward(head);
            let pos = p - fh * arm + Vec3::Y * (cfg.follow_elevation * arm);
            Some(Pose::new(pos, UnitQuat::look_rotation(p - pos, Vec3::Y)))
        }
        RigMode::MapView => {
            let pos = p + Vec3::Y * arm;
            Some(Pose::new(pos, UnitQuat::look_rotation(-Vec3::Y, horizontal_forward(head))))
        }
    }
}

impl CameraRig {
    pub fn new(mode: RigMode, pose: Pose, config: RigConfig) -> Self {
        CameraRig {
            mode,
            pose,
            arm_length: config.arm_default.clamp(config.arm_min, config.arm_max),
            grabbed_by_vr: false,
            smoothing_tau: config.smoothing_tau.max(0.0),
            config,
            grab_offset: None,
        }
    }

    pub fn target(&self, avatar: &AvatarState) -> Option<Pose> {
        target_pose(self.mode, &avatar.head, self.arm_length, &self.config)
    }

    /// Follow the avatar. First-person copies the head pose; other presets
    /// approach their target by `1 - exp(-dt / tau)`; the free rig is left
    /// alone.
    pub fn update(&mut self, avatar: &AvatarState, dt: f64) {
        if self.grabbed_by_vr {
            return;
        }
        let Some(target) = self.target(avatar) else { return };
        if self.mode == RigMode::FirstPerson {
            self.pose = avatar.head;
            return;
        }
        let alpha = if self.smoothing_tau <= 0.0 { 1.0 } else { 1.0 - (-dt.max(0.0) / self.smoothing_tau).exp() };
        self.pose = if alpha >= 1.0 { target } else { self.pose.lerp(&target, alpha) };
    }

    /// Stores the clamped arm length. Rigs without an arm keep it unused.
    pub fn set_arm_length(&mut self, value: f64) -> Result<f64, RigError> {
        if value.is_nan() {
            return Err(RigError::ArmNotANumber);
        }
        self.arm_length = value.clamp(self.config.arm_min, self.config.arm_max);
        Ok(self.arm_length)
    }

    pub fn apply_free_input(&mut self, input: &FreeCamInput, speed: f64) -> Result<(), RigError> {
        if self.mode != RigMode::Free {
            return Err(RigError::NotFree);
        }
        if self.grabbed_by_vr {
            return Err(RigError::Grabbed);
        }
        if !(input.dt > 0.0) || !input.dt.is_finite() {
            return Err(RigError::InvalidInput("dt must be positive"));
        }
        let axes = [input.forward, input.right, input.up];
        if axes.iter().any(|a| !(-1.0..=1.0).contains(a)) {
            return Err(RigError::InvalidInput("move axes must lie in [-1, 1]"));
        }
        if !input.yaw_delta.is_finite() || !input.pitch_delta.is_finite() {
            return Err(RigError::InvalidInput("rotation deltas must be finite"));
        }

        let q = self.pose.orientation;
        let limit = FRAC_PI_2 - self.config.pitch_margin;
        let pitch = q.forward().y.clamp(-1.0, 1.0).asin();
        let new_pitch = (pitch + input.pitch_delta).clamp(-limit, limit);
        let pitched = q * UnitQuat::from_axis_angle(Vec3::X, new_pitch - pitch);
        let q = UnitQuat::from_axis_angle(Vec3::Y, input.yaw_delta) * pitched;

        let step = speed * input.dt;
        let delta = q.forward() * input.forward + q.right() * input.right + q.up() * input.up;
        self.pose = Pose::new(self.pose.position + delta * step, q);
        Ok(())
    }

    /// Attaches the free camera to the VR user's hand, keeping the current
    /// hand-to-camera transform.
    pub fn grab(&mut self, hand: &Pose) -> Result<(), RigError> {
        if self.mode != RigMode::Free {
            return Err(RigError::NotFree);
        }
        if self.grabbed_by_vr {
            return Err(RigError::Grabbed);
        }
        let distance = hand.position.distance(self.pose.position);
        if !(distance <= self.config.grab_reach) {
            return Err(RigError::OutOfReach { distance, reach: self.config.grab_reach });
        }
        self.grab_offset = Some(hand.inverse().compose(&self.pose));
        self.grabbed_by_vr = true;
        Ok(())
    }

    pub fn move_grabbed(&mut self, hand: &Pose) -> Result<(), RigError> {
        let offset = self.grab_offset.ok_or(RigError::NotGrabbed)?;
        self.pose = hand.compose(&offset);
        Ok(())
    }

    pub fn release(&mut self) -> Result<(), RigError> {
        if self.grab_offset.take().is_none() {
            return Err(RigError::NotGrabbed);
        }
        self.grabbed_by_vr = false;
        Ok(())
    }
}

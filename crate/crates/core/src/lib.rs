//! Building blocks for co-host mediated VR live streaming.
//!
//! A scripted VR user moves through a triangle-mesh scene while a single
//! co-host steers camera rigs, annotates the scene and relays chat. The
//! co-host sees a low-latency feed; spectators receive the same broadcast
//! through a buffered, segmented fan-out.

pub mod bvh;
pub mod camera;
pub mod fanout;
pub mod math;
pub mod media;
pub mod render;
pub mod rig;
pub mod scenario;
pub mod session;
pub mod scene;

pub use bvh::{Hit, SceneIndex};
pub use camera::{project, unproject, CameraIntrinsics, Ray};
pub use math::{Pose, UnitQuat, Vec3};
pub use rig::{CameraRig, RigMode};
pub use scene::{Rgb8, Scene, SceneObject};

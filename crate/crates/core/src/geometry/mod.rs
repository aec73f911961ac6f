//! Pinhole cameras, rigid transforms, image/depth buffers and inverse warping.

mod buffers;
mod camera;
mod pose;
pub mod warp;

pub(crate) use buffers::neighborhood;
pub use buffers::{DepthMap, ImageBuffer, Mask};
pub use camera::{CameraIntrinsics, Projection};
pub use pose::RigidPose;
pub use warp::{warp_constant_depth, warp_image, BilinearTaps, SampleStatus, WarpOutput};

//! Vision-only motion planning and control over image-space keypoint states.
//!
//! Roadmaps are built directly over keypoint vectors observed by a camera,
//! searched with lazy A*, and tracked with a model-free visual servo whose
//! Jacobian is estimated online. A simulated planar arm and pinhole camera
//! serve only as the offline data source and verification oracle.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*64` aliases
//! below fix the scalar to `f64`, which is what the CLI and bench use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod planner;
pub mod render;
pub mod roadmap;
pub mod bench;
pub mod mlp;
pub mod collision;
pub mod dataset;
pub mod scalar;
pub mod servo;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
pub use scalar::Real;
pub use types::{
    validate_image_state, CameraModel, ImageSize, ImageState, JointConfig, Keypoint, MetricTag,
    PathMetrics, PlannedPath, Polygon, Scene, Verdict, Violation,
};

pub type Keypoint64 = Keypoint<f64>;
pub type ImageState64 = ImageState<f64>;
pub type JointConfig64 = JointConfig<f64>;
pub type Scene64 = Scene<f64>;
pub type PlannedPath64 = PlannedPath<f64>;
pub type ImageState32 = ImageState<f32>;

//! Pose refinement toolkit.
//!
//! An initial body-pose estimate is refined by a fully convolutional network
//! that sees the image together with the pose, encoded as one binary disk
//! channel per joint. The crate covers the whole loop: corrupting ground
//! truth into realistic initial estimates ([`synth`]), geometric
//! normalization and encoding ([`tensorize`]), a small stride-8 refiner with
//! heatmap and offset heads ([`net`]), decoding ([`decode`]), and the usual
//! benchmark metrics ([`metrics`]). [`toy`] and [`pipeline`] provide a
//! synthetic stick-figure world for end-to-end runs.

pub mod datasets;
pub mod decode;
pub mod error;
pub mod image_io;
pub mod metrics;
pub mod net;
pub mod parallel;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod tensorize;
pub mod toy;
pub mod types;

pub use error::{Error, ErrorClass, Result};
pub use types::{flip_pose, pose_bbox, FrameAnnotation, ImageRaster, JointSchema, Keypoint, Point, Pose, Rect};

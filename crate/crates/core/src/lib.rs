//! Cross-view 3-DoF camera pose estimation.
//!
//! A ground-level image is split into `N` azimuth slices. Every candidate
//! pose `(u, v, theta)` on an aerial map gets a frustum mask per slice, the
//! aerial features under each mask are pooled into a slice descriptor, and
//! the concatenated descriptor is compared with the ground descriptor by
//! cosine similarity. Poses that differ only by a multiple of the slice
//! width reuse the same masks and pooled slices in permuted order.

pub mod aggregation;
pub mod bench;
pub mod calibration;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod learning;
pub mod matching;
pub mod pgm;
pub mod pipeline;
pub mod smtf;
pub mod tensor;

pub use aggregation::{aggregate_all, Aggregation, AttentionMlp, GroundSliceSet};
pub use error::{Error, Result};
pub use geometry::{generate_pose_grid, CameraModel, MaskSet, Pose, PoseSet, SliceMask};
pub use learning::{info_nce_alpha, LossConfig, TrainConfig};
pub use matching::{predict, score_poses, ScoreMap};
pub use pipeline::{ModelDims, SliceMatchModel};
pub use tensor::{FeatureMap, GlobalDescriptor, SliceDescriptor};

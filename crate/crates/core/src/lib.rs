//! Localization of a rectangular document of known aspect ratio in a
//! photograph, using fast Hough transforms over directional edge maps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod candidates;
pub mod contrast;
pub mod edges;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod hough;
pub mod imaging;
pub mod metrics;
pub mod pipeline;
pub mod refine;

pub use candidates::{Provenance, ScoredQuad};
pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, HomoLine, HomoPoint, Homography, Orientation, Point2, Quad};
pub use imaging::RgbImage;
pub use metrics::{GroundTruth, MetricsReport};
pub use pipeline::{
    localize, localize_with_diagnostics, LocalizationResult, Outcome, PipelineConfig, StageTimings,
    TemplateSpec,
};

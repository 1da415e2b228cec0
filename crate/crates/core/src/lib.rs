//! Single-object RGBD tracking: a correlation filter whose spatial support
//! follows a depth segmentation of the target.
//!
//! The tracker learns a multi-channel linear correlation filter in the Fourier
//! domain. Each frame, a depth segmentation of the search region decides which
//! filter coefficients may be nonzero, and the constrained filter is solved
//! with ADMM. When the filter response collapses and almost no pixels in the
//! box support the target depth, the model is frozen and the tracker falls back
//! to full-frame re-detection until the target reappears.
//!
//! The [`bench`] module carries dataset ingestion, a seeded synthetic sequence
//! generator, and IOU-based evaluation.

pub mod bench;
pub mod dcf;
pub mod depth_mask;
mod error;
pub mod features;
pub mod fft;
pub mod imaging;
pub mod masked_filter;
pub mod occlusion;
pub mod search;
pub mod tracker;

pub use dcf::{FilterBank, ResponseMap};
pub use depth_mask::{DepthModel, Mask};
pub use error::{Error, Result};
pub use features::{FeatureConfig, FeatureStack};
pub use imaging::{BoundingBox, Frame, Patch, Point, Size};
pub use masked_filter::AdmmConfig;
pub use occlusion::{OcclusionConfig, OcclusionState, ResponseHistory};
pub use tracker::{TrackOutput, Tracker, TrackerConfig};

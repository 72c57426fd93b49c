//! Stereo matching in cyclopean coordinates.
//!
//! Each epipolar line is solved by a dynamic program over the half-pixel
//! `(x, d)` grid that labels every cyclopean sample as matched, occluded or
//! homogeneous. Gaps are completed from a monocular prior and results are
//! scored with the usual disparity metrics.

pub mod costvolume;
pub mod dp;
pub mod error;
pub mod features;
pub mod fill;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod numeric;
pub mod pipeline;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};

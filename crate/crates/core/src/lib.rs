//! Noise-aware auto-exposure: image quality metric and exposure control.
//!
//! The crate is organized around four modules:
//!
//! - [`imaging`] — 8-bit image container, grayscale conversion, gradient
//!   fields, 3×3 convolution, and binary PGM/PPM I/O.
//! - [`metric`] — the fused image quality score combining gradient
//!   information, global entropy, and an estimate of the sensor noise level.
//! - [`controller`] — a Nelder–Mead search over (exposure time, gain) that
//!   maximizes the fused score against a frame source.
//! - [`camera`] — frame sources for closed-loop use and testing: a synthetic
//!   radiometric camera, a dataset-replay camera over a sweep manifest, and
//!   an interpolated metric-surface camera.

pub mod camera;
pub mod controller;
pub mod imaging;
pub mod metric;

pub use camera::{FrameSource, Scene, SweepManifest, SyntheticCameraModel};
pub use controller::{ExposureParams, ParamBounds};
pub use imaging::Image;
pub use metric::{MetricConfig, QualityBreakdown};

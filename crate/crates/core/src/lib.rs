//! Calibration-aware deformable convolution for fisheye cameras following the
//! radially symmetric Kannala-Brandt model.
//!
//! The crate derives per-pixel kernel offsets from a camera calibration, runs
//! standard and deformable convolutions with them, synthesizes and rectifies
//! fisheye images, and evaluates depth and segmentation predictions.

pub mod camera;
pub mod conv;
pub mod formats;
pub mod grid;
pub mod kernel;
pub mod metrics;
pub mod sample;
pub mod warp;

pub use camera::{Calibration, CalibrationParams, CameraError, KbPolynomial, RadialCamera, Ray};
pub use conv::{conv2d, deform_conv2d, ConvParams, ConvWeights};
pub use grid::Grid;
pub use kernel::{offset_field, KernelSpec, OffsetField};
pub use sample::BorderPolicy;

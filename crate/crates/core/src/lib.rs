//! Topological visible-tissue detection for B-mode ultrasound.
//!
//! The detector classifies every scan line (image column) of a frame as
//! acoustic shadow or visible tissue and produces a per-pixel confidence map:
//!
//! 1. [`saliency`]: iterative vertical-biased Gaussian stack, per-pixel
//!    standard deviation, thresholded into a salient point cloud.
//! 2. [`sparsify`]: saliency-adaptive spacing field and greedy thinning.
//! 3. [`topology`]: Vietoris–Rips triangles, occurrence map, `ln(O + 1)`.
//! 4. [`classify`]: triangles per scan line against `tau`; [`classify::detect`]
//!    runs the whole chain.
//!
//! [`baseline`] holds the intensity-sum classifier, [`eval`] the metrics and
//! experiment drivers, and [`synth`] a generator of frames with exact labels.

pub mod baseline;
pub mod classify;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod frame_io;
pub mod params;
pub mod saliency;
pub mod sparsify;
pub mod synth;
pub mod topology;

pub use classify::{detect, DetectionResult, ScanlineLabels};
pub use error::{Error, Result};
pub use frame_io::{Field, GrayImage};
pub use params::Params;

//! Uncertainty-guided data augmentation (UgDA) workbench for stereo pairs.
//!
//! The crate implements:
//!
//! * per-image RGB channel statistics and batch-level statistic spread,
//!   with Gaussian re-stylization of each image toward sampled target
//!   statistics ([`augment`]);
//! * a deterministic counter-based random-number scheme so every draw is
//!   reproducible regardless of thread schedule ([`rng`]);
//! * a training-free classical stereo matcher (census transform, Hamming
//!   cost volume, semi-global aggregation, winner-take-all with subpixel
//!   refinement, left-right check) used as a geometry probe ([`stereo`]);
//! * a small frozen convolutional feature extractor with hand-written
//!   reverse-mode gradients, the feature-consistency loss, and the combined
//!   training objective ([`loss`]);
//! * benchmark file I/O: PFM, 16-bit KITTI-style disparity PNGs, image
//!   loading, manifests, and synthetic oracle scenes ([`io`]);
//! * evaluation metrics (EPE, bad-pixel rate), histograms, and error maps
//!   ([`metrics`]).
//!
//! All numeric work is double precision. Every public operation is a pure
//! function of its inputs: same inputs, same outputs, byte for byte.

pub mod augment;
pub mod error;
pub mod image;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod rng;
pub mod stereo;

pub use error::{Error, Result};
pub use image::{ImageBatch, ImageF, StereoPair};
pub use rng::{RngStream, Side, StatKind, StreamKey};

//! MAP reconstruction for computational-imaging inverse problems.
//!
//! Four linear cameras are modelled (random-pixel inpainting, single-pixel
//! camera, line-sensor camera and a separable coded-mask lensless camera).
//! Images are recovered by alternating ascent steps on an image prior with
//! steps that enforce consistency with the measurements: exact projections,
//! an augmented Lagrangian, or a quadratic penalty.

pub mod error;
pub mod harness;
pub mod image;
pub mod imaging;
pub mod metrics;
pub mod priors;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use image::Image;

//! Motion-blur removal with an adversarially trained residual generator.
//!
//! The crate covers the whole workflow: architecture tables with an exact
//! parameter audit, the trainable networks, perceptual and Wasserstein losses,
//! paired-dataset ingestion and synthesis, the alternating training loop,
//! tiled full-frame inference, and PSNR/SSIM evaluation.

pub mod arch;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod patches;
pub mod train;

pub use error::{Error, Result};

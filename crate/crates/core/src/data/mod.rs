//! Paired blur/sharp datasets: directory scanning, motion-blur synthesis, and
//! a seeded synthetic corpus for desk-scale runs.

pub mod blur;
pub mod manifest;
pub mod synth;

pub use blur::{apply_blur, make_kernel, MotionBlurKernel};
pub use manifest::{scan_manifest, DatasetManifest, ManifestEntry, PairedSample, Split};
pub use synth::{make_synthetic_dataset, make_synthetic_split, render_shapes, synthesize_pair};

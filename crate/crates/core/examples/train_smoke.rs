//! Desk-scale training run on a synthetic dataset.
//!
//! ```text
//! cargo run --release --example train_smoke -- [epochs] [out_dir]
//! ```
//!
//! Writes 8 seeded 64-px pairs, trains the full-size networks with the
//! random-convolution perceptual extractor, and prints every step.

use std::path::PathBuf;

use deblur_gan::data::make_synthetic_dataset;
use deblur_gan::train::{train, ExtractorKind, TrainConfig};

fn main() -> deblur_gan::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|s| s.parse().expect("epochs")).unwrap_or(25);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("deblur-smoke"));

    let data = out.join("data");
    make_synthetic_dataset(8, 64, 7, &data)?;
    let config = TrainConfig {
        batch_size: 4,
        epochs,
        patch: 64,
        seed: 7,
        dataset_root: data,
        extractor: ExtractorKind::RandomConv,
        ..TrainConfig::default()
    };
    let outcome = train(&config, out.join("run"))?;
    for r in &outcome.reports {
        println!("{}", r.to_log_line());
    }
    println!("checkpoints: {}", outcome.checkpoints.len());
    Ok(())
}

//! Scores a checkpoint on a dataset split next to the blurred-input baseline.
//!
//! ```text
//! cargo run --release --example evaluate -- <checkpoint> <dataset_root> [train|test]
//! ```

use deblur_gan::data::{scan_manifest, Split};
use deblur_gan::eval::{evaluate_dataset, IdentityDeblurrer, TileOptions, TiledDeblurrer};
use deblur_gan::train::{Checkpoint, Trainer};

fn main() -> deblur_gan::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (ckpt, root) = match args.as_slice() {
        [c, r, ..] => (c, r),
        _ => {
            eprintln!("usage: evaluate <checkpoint> <dataset_root> [train|test]");
            std::process::exit(2);
        }
    };
    let split: Split = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(Split::Test);
    let manifest = scan_manifest(root, split)?;
    let generator = Checkpoint::load(ckpt)?.generator(Trainer::DTYPE)?;
    let model = TiledDeblurrer::new(&generator, TileOptions::default())?;
    println!("generator:\n{}", evaluate_dataset(&model, &manifest)?.to_table());
    println!("blurred input:\n{}", evaluate_dataset(&IdentityDeblurrer, &manifest)?.to_table());
    Ok(())
}

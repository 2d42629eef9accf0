//! Writes a seeded synthetic blur/sharp dataset and scores the blurred inputs.
//!
//! ```text
//! cargo run --release --example synth_dataset -- [out_dir] [count] [size]
//! ```

use std::path::PathBuf;

use deblur_gan::data::{make_synthetic_split, Split};
use deblur_gan::eval::{evaluate_dataset, IdentityDeblurrer};

fn main() -> deblur_gan::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("deblur-synth"));
    let count = args.next().map(|s| s.parse().expect("count")).unwrap_or(8);
    let size = args.next().map(|s| s.parse().expect("size")).unwrap_or(64);

    let manifest = make_synthetic_split(count, size, 0, &out, Split::Test)?;
    print!("{}", manifest.to_index());
    println!("\nblurred input against sharp:");
    print!("{}", evaluate_dataset(&IdentityDeblurrer, &manifest)?.to_table());
    Ok(())
}

//! Full-frame inference with a trained checkpoint.
//!
//! ```text
//! cargo run --release --example deblur_image -- <checkpoint> <input.png> <output.png>
//! ```

use deblur_gan::eval::{Deblurrer, TileOptions, TiledDeblurrer};
use deblur_gan::image::PixelImage;
use deblur_gan::metrics::psnr;
use deblur_gan::train::{Checkpoint, Trainer};

fn main() -> deblur_gan::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [ckpt, input, output] = args.as_slice() else {
        eprintln!("usage: deblur_image <checkpoint> <input.png> <output.png>");
        std::process::exit(2);
    };
    let checkpoint = Checkpoint::load(ckpt)?;
    println!("checkpoint after {} steps", checkpoint.steps_completed);
    let generator = checkpoint.generator(Trainer::DTYPE)?;
    let model = TiledDeblurrer::new(&generator, TileOptions::default())?;
    let blur = PixelImage::load(input)?;
    let restored = model.deblur(&blur)?;
    restored.save(output)?;
    println!("PSNR of the output against the input: {:.2} dB", psnr(&restored, &blur)?);
    Ok(())
}

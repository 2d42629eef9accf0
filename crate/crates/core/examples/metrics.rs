//! PSNR and SSIM between two images, or on a blurred synthetic frame.
//!
//! ```text
//! cargo run --release --example metrics -- [a.png b.png]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use deblur_gan::data::{apply_blur, make_kernel, render_shapes};
use deblur_gan::image::PixelImage;
use deblur_gan::metrics::{psnr, ssim};

fn main() -> deblur_gan::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (a, b) = if let [a, b] = args.as_slice() {
        (PixelImage::load(a)?, PixelImage::load(b)?)
    } else {
        let sharp = render_shapes(96, &mut ChaCha8Rng::seed_from_u64(1));
        let blur = apply_blur(&sharp, &make_kernel(9, 30.0)?)?;
        (blur, sharp)
    };
    println!("PSNR {:.3} dB", psnr(&a, &b)?);
    println!("SSIM {:.4}", ssim(&a, &b)?);
    Ok(())
}

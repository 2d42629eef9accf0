//! Critic and generator objectives on hand-picked scores.
//!
//! ```text
//! cargo run --example losses
//! ```

use candle_core::{Device, Tensor};

use deblur_gan::losses::{gan_value_estimate, generator_adversarial_loss, scalar, wasserstein_critic_loss};

fn main() -> deblur_gan::Result<()> {
    let cases: [(&[f64], &[f64]); 3] = [(&[0.5, 0.5], &[0.5, 0.5]), (&[0.9, 0.8], &[0.1, 0.2]), (&[0.2], &[0.7])];
    println!("real\tfake\tcritic\tgenerator\tvalue");
    for (real, fake) in cases {
        let (r, f) = (Tensor::new(real, &Device::Cpu)?, Tensor::new(fake, &Device::Cpu)?);
        println!(
            "{real:?}\t{fake:?}\t{:.4}\t{:.4}\t{:.4}",
            scalar(&wasserstein_critic_loss(&r, &f)?)?,
            scalar(&generator_adversarial_loss(&f)?)?,
            gan_value_estimate(real, fake)?
        );
    }
    Ok(())
}

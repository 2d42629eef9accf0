//! Builds a width-reduced generator and critic and runs one forward pass.
//!
//! ```text
//! cargo run --release --example inspect_generator -- [width_divisor] [size]
//! ```

use candle_core::{DType, Device, Tensor};

use deblur_gan::arch::{
    discriminator_spec_scaled, generator_spec_scaled, Discriminator, Generator, InitOptions, NormMode, ScaleOptions,
};

fn main() -> deblur_gan::Result<()> {
    let mut args = std::env::args().skip(1);
    let width_divisor = args.next().map(|s| s.parse().expect("width_divisor")).unwrap_or(8);
    let size: usize = args.next().map(|s| s.parse().expect("size")).unwrap_or(64);
    let scale = ScaleOptions {
        width_divisor,
        residual_blocks: 9,
    };
    let g = Generator::new(generator_spec_scaled(scale), InitOptions::default(), DType::F32)?;
    let d = Discriminator::new(discriminator_spec_scaled(scale), InitOptions { seed: 1, ..InitOptions::default() }, DType::F32)?;
    let count = |n: &deblur_gan::arch::Network| n.conv_parameter_count() + n.norm_parameter_count();
    println!("generator {} parameters, critic {}", count(g.network()), count(d.network()));

    let x = Tensor::rand(-1f32, 1f32, (1, 3, size, size), &Device::Cpu)?;
    let y = g.forward(&x, NormMode::Eval)?;
    let map = d.patch_map(&y, NormMode::Eval)?;
    println!("input {:?} -> output {:?} -> critic map {:?}", x.dims(), y.dims(), map.dims());
    println!("output range [{:.4}, {:.4}]", y.min_all()?.to_scalar::<f32>()?, y.max_all()?.to_scalar::<f32>()?);
    println!("critic score {:.4}", d.scores(&y, NormMode::Eval)?.to_vec1::<f32>()?[0]);
    Ok(())
}

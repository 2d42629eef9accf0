//! Fixed feature extractors for the perceptual loss.
//!
//! Every extractor takes `(N, 3, H, W)` tensors in `[-1, 1]` and owns its own
//! preprocessing. None of them hold trainable variables, so training never
//! updates them.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::arch::conv::{conv2d_valid, zero_pad};
use crate::error::{Error, Result};

pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;

    fn extract(&self, x: &Tensor) -> Result<Tensor>;

    /// Feature shape produced for an `(N, C, H, W)` input.
    fn output_shape(&self, input: [usize; 4]) -> [usize; 4];
}

/// Features are the pixels themselves; the perceptual loss becomes plain MSE.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn name(&self) -> &str {
        "identity"
    }

    fn extract(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.clone())
    }

    fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        input
    }
}

fn conv3x3_relu(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let c = bias.dim(0)?;
    let y = conv2d_valid(&zero_pad(x, 1, 1, 1, 1)?, weight, 1)?
        .broadcast_add(&bias.reshape((1, c, 1, 1))?)?;
    Ok(y.relu()?)
}

/// Two 3×3 ReLU convolutions with seeded He-normal weights.
///
/// Stands in for a pretrained network when no weight file is available.
pub struct RandomConvExtractor {
    layers: Vec<(Tensor, Tensor)>,
}

impl RandomConvExtractor {
    pub const DEFAULT_SEED: u64 = 0x5eed;
    pub const WIDTH: usize = 16;

    pub fn new(seed: u64, dtype: DType) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for (cin, cout) in [(3, Self::WIDTH), (Self::WIDTH, Self::WIDTH)] {
            let std = (2.0 / (cin * 9) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let w: Vec<f64> = (0..cout * cin * 9).map(|_| normal.sample(&mut rng)).collect();
            let w = Tensor::from_vec(w, (cout, cin, 3, 3), &Device::Cpu)?.to_dtype(dtype)?;
            let b = Tensor::zeros(cout, dtype, &Device::Cpu)?;
            layers.push((w, b));
        }
        Ok(Self { layers })
    }
}

impl FeatureExtractor for RandomConvExtractor {
    fn name(&self) -> &str {
        "random_conv"
    }

    fn extract(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (w, b) in &self.layers {
            h = conv3x3_relu(&h.to_dtype(w.dtype())?, w, b)?;
        }
        Ok(h)
    }

    fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        [input[0], Self::WIDTH, input[2], input[3]]
    }
}

/// Convolution names of the 16-layer visual-geometry network, grouped by block.
const VGG16_BLOCKS: [&[&str]; 5] = [
    &["conv1_1", "conv1_2"],
    &["conv2_1", "conv2_2"],
    &["conv3_1", "conv3_2", "conv3_3"],
    &["conv4_1", "conv4_2", "conv4_3"],
    &["conv5_1", "conv5_2", "conv5_3"],
];

/// Index of each convolution inside a torchvision-style `features` sequence.
fn vgg16_index(name: &str) -> Option<usize> {
    let mut idx = 0;
    for block in VGG16_BLOCKS {
        for conv in block {
            if *conv == name {
                return Some(idx);
            }
            idx += 2;
        }
        idx += 1;
    }
    None
}

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Pretrained VGG16 features up to (and including the ReLU of) a named convolution.
///
/// Weights are read from a safetensors file with torchvision key names
/// (`features.{i}.weight`, `features.{i}.bias`). Inputs in `[-1, 1]` are mapped
/// to `[0, 1]` and standardized with the ImageNet channel statistics.
pub struct Vgg16Extractor {
    layer: String,
    /// `None` marks a 2×2 max-pool.
    stages: Vec<Option<(Tensor, Tensor)>>,
    out_channels: usize,
    pools: usize,
    mean: Tensor,
    std: Tensor,
}

impl Vgg16Extractor {
    pub const DEFAULT_LAYER: &'static str = "conv3_3";

    pub fn load(path: impl AsRef<Path>, layer: &str, dtype: DType) -> Result<Self> {
        let path = path.as_ref();
        let tensors = candle_core::safetensors::load(path, &Device::Cpu)
            .map_err(|e| Error::Config(format!("cannot read VGG16 weights {}: {e}", path.display())))?;
        Self::from_tensors(&tensors, layer, dtype)
    }

    pub fn from_tensors(tensors: &HashMap<String, Tensor>, layer: &str, dtype: DType) -> Result<Self> {
        if vgg16_index(layer).is_none() {
            let names: Vec<&str> = VGG16_BLOCKS.iter().flat_map(|b| b.iter().copied()).collect();
            return Err(Error::Config(format!(
                "unknown VGG16 layer {layer}; expected one of {}",
                names.join(", ")
            )));
        }
        let mut stages = Vec::new();
        let mut out_channels = 3;
        let mut pools = 0;
        'outer: for (b, block) in VGG16_BLOCKS.iter().enumerate() {
            if b > 0 {
                stages.push(None);
                pools += 1;
            }
            for conv in block.iter() {
                let idx = vgg16_index(conv).expect("known layer");
                let get = |suffix: &str| -> Result<Tensor> {
                    let key = format!("features.{idx}.{suffix}");
                    tensors
                        .get(&key)
                        .ok_or_else(|| Error::Config(format!("VGG16 weights lack {key}")))
                        .and_then(|t| Ok(t.to_dtype(dtype)?))
                };
                let (w, bias) = (get("weight")?, get("bias")?);
                let (cout, cin, kh, kw) = w.dims4()?;
                if cin != out_channels || (kh, kw) != (3, 3) || bias.dims() != [cout] {
                    return Err(Error::Config(format!(
                        "VGG16 {conv}: unexpected weight shape {:?}",
                        w.dims()
                    )));
                }
                out_channels = cout;
                stages.push(Some((w, bias)));
                if *conv == layer {
                    break 'outer;
                }
            }
        }
        let mean = Tensor::new(&IMAGENET_MEAN, &Device::Cpu)?.to_dtype(dtype)?.reshape((1, 3, 1, 1))?;
        let std = Tensor::new(&IMAGENET_STD, &Device::Cpu)?.to_dtype(dtype)?.reshape((1, 3, 1, 1))?;
        Ok(Self {
            layer: layer.to_string(),
            stages,
            out_channels,
            pools,
            mean,
            std,
        })
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }
}

impl FeatureExtractor for Vgg16Extractor {
    fn name(&self) -> &str {
        "vgg16"
    }

    fn extract(&self, x: &Tensor) -> Result<Tensor> {
        let x = x.to_dtype(self.mean.dtype())?;
        let mut h = ((x + 1.0)? * 0.5)?
            .broadcast_sub(&self.mean)?
            .broadcast_div(&self.std)?;
        for stage in &self.stages {
            h = match stage {
                Some((w, b)) => conv3x3_relu(&h, w, b)?,
                None => h.max_pool2d(2)?,
            };
        }
        Ok(h)
    }

    fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        let f = 1 << self.pools;
        [input[0], self.out_channels, input[2] / f, input[3] / f]
    }
}

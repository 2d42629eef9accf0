//! Trainable networks built from an [`ArchitectureSpec`].

use std::collections::HashMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::audit::audit_architecture;
use super::norm::{batch_norm, batch_statistics};
use super::conv::{conv2d_valid, reflect_pad, same_padding, upsample_nearest2x, zero_pad};
use super::spec::{Activation, ArchitectureSpec, LayerKind, LayerSpec, Padding};
use crate::error::{Error, Result};
use crate::image::ImageTensor;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
pub const LEAKY_SLOPE: f64 = 0.2;

/// Weight initialization: zero-mean normal weights, zero biases, unit norm scales.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitOptions {
    pub std: f64,
    pub seed: u64,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self { std: 0.02, seed: 0 }
    }
}

/// How normalization layers compute their statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Running statistics (inference).
    Eval,
    /// Batch statistics; running statistics untouched.
    Batch,
    /// Batch statistics, and running statistics are updated afterwards.
    Train,
}

struct BatchNorm {
    gamma: Var,
    beta: Var,
    running_mean: Tensor,
    running_var: Tensor,
}

struct ConvLayer {
    spec: LayerSpec,
    weight: Var,
    bias: Var,
    norm: Option<BatchNorm>,
}

struct StatUpdate {
    layer: usize,
    mean: Tensor,
    var: Tensor,
}

impl ConvLayer {
    fn forward(&self, x: &Tensor, mode: NormMode, index: usize, updates: &mut Vec<StatUpdate>) -> Result<Tensor> {
        let l = &self.spec;
        let x = match l.kind {
            LayerKind::Convolution => x.clone(),
            LayerKind::UpsampleConvolution => upsample_nearest2x(x)?,
        };
        let (_, _, h, w) = x.dims4()?;
        let (top, bottom) = same_padding(h, l.kernel, l.stride);
        let (left, right) = same_padding(w, l.kernel, l.stride);
        let x = match l.padding {
            Padding::Reflect => reflect_pad(&x, top, bottom, left, right)?,
            Padding::Zero => zero_pad(&x, top, bottom, left, right)?,
        };
        let mut y = conv2d_valid(&x, self.weight.as_tensor(), l.stride)?
            .broadcast_add(&self.bias.reshape((1, l.out_channels, 1, 1))?)?;
        if let Some(bn) = &self.norm {
            y = bn.forward(&y, mode, index, updates)?;
        }
        Ok(match l.activation {
            Activation::Relu => y.relu()?,
            Activation::LeakyRelu => (y.relu()? - (y.neg()?.relu()? * LEAKY_SLOPE)?)?,
            Activation::Tanh => y.tanh()?,
            Activation::Sigmoid => sigmoid(&y)?,
            Activation::None => y,
        })
    }
}

fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

impl BatchNorm {
    fn forward(&self, x: &Tensor, mode: NormMode, index: usize, updates: &mut Vec<StatUpdate>) -> Result<Tensor> {
        let c = self.gamma.dim(0)?;
        let (mean, var) = match mode {
            NormMode::Eval => (
                self.running_mean.reshape((1, c, 1, 1))?,
                self.running_var.reshape((1, c, 1, 1))?,
            ),
            NormMode::Batch | NormMode::Train => {
                if mode == NormMode::Train {
                    let (n, _, h, w) = x.dims4()?;
                    let count = (n * h * w) as f64;
                    let unbiased = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                    let (mean, var) = batch_statistics(&x.detach())?;
                    updates.push(StatUpdate {
                        layer: index,
                        mean,
                        var: (var * unbiased)?,
                    });
                }
                return Ok(batch_norm(x, self.gamma.as_tensor(), self.beta.as_tensor(), BN_EPS)?);
            }
        };
        let xhat = x.broadcast_sub(&mean)?.broadcast_div(&(var + BN_EPS)?.sqrt()?)?;
        Ok(xhat
            .broadcast_mul(&self.gamma.reshape((1, c, 1, 1))?)?
            .broadcast_add(&self.beta.reshape((1, c, 1, 1))?)?)
    }
}

/// A network instance: its spec plus the weight collection.
pub struct Network {
    spec: ArchitectureSpec,
    layers: Vec<ConvLayer>,
    dtype: DType,
}

impl Network {
    pub fn new(spec: ArchitectureSpec, init: InitOptions, dtype: DType) -> Result<Self> {
        spec.validate().map_err(Error::Shape)?;
        let device = Device::Cpu;
        let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
        let normal = Normal::new(0.0, init.std)
            .map_err(|e| Error::InvalidArgument(format!("init std {}: {e}", init.std)))?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for l in &spec.layers {
            let shape = (l.out_channels, l.in_channels, l.kernel, l.kernel);
            let count = l.out_channels * l.in_channels * l.kernel * l.kernel;
            let values: Vec<f64> = (0..count).map(|_| normal.sample(&mut rng)).collect();
            let weight = Var::from_tensor(&Tensor::from_vec(values, shape, &device)?.to_dtype(dtype)?)?;
            let bias = Var::zeros(l.out_channels, dtype, &device)?;
            let norm = if l.normalization {
                Some(BatchNorm {
                    gamma: Var::ones(l.out_channels, dtype, &device)?,
                    beta: Var::zeros(l.out_channels, dtype, &device)?,
                    running_mean: Tensor::zeros(l.out_channels, dtype, &device)?,
                    running_var: Tensor::ones(l.out_channels, dtype, &device)?,
                })
            } else {
                None
            };
            layers.push(ConvLayer {
                spec: l.clone(),
                weight,
                bias,
                norm,
            });
        }
        Ok(Self { spec, layers, dtype })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Trainable variables in a fixed order.
    pub fn vars(&self) -> Vec<(String, &Var)> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push((format!("{}.weight", l.spec.name), &l.weight));
            out.push((format!("{}.bias", l.spec.name), &l.bias));
            if let Some(bn) = &l.norm {
                out.push((format!("{}.gamma", l.spec.name), &bn.gamma));
                out.push((format!("{}.beta", l.spec.name), &bn.beta));
            }
        }
        out
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars().into_iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// Every tensor that defines the network's behaviour: variables and running statistics.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .vars()
            .into_iter()
            .map(|(n, v)| (n, v.as_tensor().clone()))
            .collect();
        for l in &self.layers {
            if let Some(bn) = &l.norm {
                out.push((format!("{}.running_mean", l.spec.name), bn.running_mean.clone()));
                out.push((format!("{}.running_var", l.spec.name), bn.running_var.clone()));
            }
        }
        out
    }

    /// Overwrites every state tensor; all names in [`Network::state`] must be present.
    pub fn load_state(&mut self, state: &HashMap<String, Tensor>) -> Result<()> {
        let fetch = |name: String, like: &Tensor| -> Result<Tensor> {
            let t = state
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.dims() != like.dims() {
                return Err(Error::Checkpoint(format!(
                    "{name}: expected shape {:?}, found {:?}",
                    like.dims(),
                    t.dims()
                )));
            }
            Ok(t.to_dtype(like.dtype())?)
        };
        for l in &mut self.layers {
            let name = &l.spec.name;
            l.weight.set(&fetch(format!("{name}.weight"), l.weight.as_tensor())?)?;
            l.bias.set(&fetch(format!("{name}.bias"), l.bias.as_tensor())?)?;
            if let Some(bn) = &mut l.norm {
                bn.gamma.set(&fetch(format!("{name}.gamma"), bn.gamma.as_tensor())?)?;
                bn.beta.set(&fetch(format!("{name}.beta"), bn.beta.as_tensor())?)?;
                bn.running_mean = fetch(format!("{name}.running_mean"), &bn.running_mean)?;
                bn.running_var = fetch(format!("{name}.running_var"), &bn.running_var)?;
            }
        }
        Ok(())
    }

    /// Weights plus biases of every convolution.
    pub fn conv_parameter_count(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| (l.weight.elem_count() + l.bias.elem_count()) as u64)
            .sum()
    }

    /// Scale, shift and both running statistics of every normalization layer.
    pub fn norm_parameter_count(&self) -> u64 {
        self.layers
            .iter()
            .filter_map(|l| l.norm.as_ref())
            .map(|bn| {
                (bn.gamma.elem_count()
                    + bn.beta.elem_count()
                    + bn.running_mean.elem_count()
                    + bn.running_var.elem_count()) as u64
            })
            .sum()
    }

    /// SHA-256 over every state tensor, in order.
    pub fn digest(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        for (name, t) in self.state() {
            hasher.update(name.as_bytes());
            for v in t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()? {
                hasher.update(v.to_le_bytes());
            }
        }
        Ok(hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect())
    }

    fn run(&self, x: &Tensor, mode: NormMode) -> Result<(Tensor, Vec<StatUpdate>)> {
        let x = x.to_dtype(self.dtype)?;
        let starts: HashMap<usize, usize> = self.spec.residual_pairs.iter().map(|&(s, e)| (s, e)).collect();
        let mut pending: HashMap<usize, Tensor> = HashMap::new();
        let mut updates = Vec::new();
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some(&end) = starts.get(&i) {
                pending.insert(end, h.clone());
            }
            h = layer.forward(&h, mode, i, &mut updates)?;
            if let Some(skip) = pending.remove(&i) {
                h = (h + skip)?;
            }
        }
        if self.spec.global_skip {
            h = ((x + h)? * 0.5)?;
        }
        Ok((h, updates))
    }

    pub fn forward(&self, x: &Tensor, mode: NormMode) -> Result<Tensor> {
        if mode == NormMode::Train {
            return Err(Error::InvalidArgument(
                "updating running statistics needs forward_train".into(),
            ));
        }
        Ok(self.run(x, mode)?.0)
    }

    /// Batch-statistics forward that also folds the batch statistics into the running ones.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let (y, updates) = self.run(x, NormMode::Train)?;
        for u in updates {
            let bn = self.layers[u.layer]
                .norm
                .as_mut()
                .expect("statistics only come from normalized layers");
            bn.running_mean = ((&bn.running_mean * (1.0 - BN_MOMENTUM))? + (u.mean * BN_MOMENTUM)?)?;
            bn.running_var = ((&bn.running_var * (1.0 - BN_MOMENTUM))? + (u.var * BN_MOMENTUM)?)?;
        }
        Ok(y)
    }

    fn check_input(&self, x: &Tensor, min_size: usize) -> Result<()> {
        let (_, c, h, w) = x
            .dims4()
            .map_err(|_| Error::Shape(format!("expected (N, C, H, W), got {:?}", x.dims())))?;
        let expect_c = self.spec.input_channels();
        if c != expect_c {
            return Err(Error::Shape(format!("channels: expected {expect_c}, got {c}")));
        }
        let div = self.spec.total_stride();
        for (dim, v) in [("height", h), ("width", w)] {
            if v % div != 0 || v < min_size {
                return Err(Error::Shape(format!(
                    "{dim} {v} must be a multiple of {div} and at least {min_size}"
                )));
            }
        }
        Ok(())
    }
}

fn check_audit(net: &Network) -> Result<()> {
    let audit = audit_architecture(net.spec());
    if audit.conv_total != net.conv_parameter_count() || audit.norm_total != net.norm_parameter_count() {
        return Err(Error::Shape(format!(
            "{} weights disagree with the audited spec",
            net.spec().name
        )));
    }
    Ok(())
}

/// Blurred image in, restored image out; values stay in `[-1, 1]`.
pub struct Generator {
    net: Network,
}

impl Generator {
    pub fn new(spec: ArchitectureSpec, init: InitOptions, dtype: DType) -> Result<Self> {
        let net = Network::new(spec, init, dtype)?;
        check_audit(&net)?;
        Ok(Self { net })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    fn min_size(&self) -> usize {
        (2 * self.net.spec.total_stride()).max(8)
    }

    /// `(N, 3, H, W)` in, same shape out.
    pub fn forward(&self, x: &Tensor, mode: NormMode) -> Result<Tensor> {
        self.net.check_input(x, self.min_size())?;
        self.net.forward(x, mode)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.net.check_input(x, self.min_size())?;
        self.net.forward_train(x)
    }

    /// Inference on a channels-last batch.
    pub fn deblur(&self, blur: &ImageTensor) -> Result<ImageTensor> {
        let x = blur.to_tensor(self.net.dtype, &Device::Cpu)?;
        ImageTensor::from_tensor(&self.forward(&x, NormMode::Eval)?)
    }
}

/// Scores images in `[0, 1]`: high for sharp, low for generated.
pub struct Discriminator {
    net: Network,
}

impl Discriminator {
    pub fn new(spec: ArchitectureSpec, init: InitOptions, dtype: DType) -> Result<Self> {
        let net = Network::new(spec, init, dtype)?;
        check_audit(&net)?;
        Ok(Self { net })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    /// Per-location probabilities, `(N, 1, H/16, W/16)` for the reference spec.
    pub fn patch_map(&self, x: &Tensor, mode: NormMode) -> Result<Tensor> {
        self.net.check_input(x, self.net.spec.total_stride())?;
        self.net.forward(x, mode)
    }

    pub fn patch_map_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.net.check_input(x, self.net.spec.total_stride())?;
        self.net.forward_train(x)
    }

    /// One score per image: the spatial mean of the patch map.
    pub fn scores(&self, x: &Tensor, mode: NormMode) -> Result<Tensor> {
        reduce_scores(&self.patch_map(x, mode)?)
    }

    pub fn scores_train(&mut self, x: &Tensor) -> Result<Tensor> {
        reduce_scores(&self.patch_map_train(x)?)
    }

    pub fn score_images(&self, images: &ImageTensor) -> Result<Vec<f64>> {
        let x = images.to_tensor(self.net.dtype, &Device::Cpu)?;
        Ok(self
            .scores(&x, NormMode::Eval)?
            .to_dtype(DType::F64)?
            .to_vec1::<f64>()?)
    }
}

fn reduce_scores(map: &Tensor) -> Result<Tensor> {
    Ok(map.flatten_from(1)?.mean(D::Minus1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::spec::{
        discriminator_spec, discriminator_spec_scaled, generator_spec, generator_spec_scaled, ScaleOptions,
    };

    fn tiny() -> ScaleOptions {
        ScaleOptions {
            width_divisor: 16,
            residual_blocks: 2,
        }
    }

    fn random_input(n: usize, h: usize, w: usize, seed: u64, dtype: DType) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uni = rand_distr::Uniform::new_inclusive(-1.0f64, 1.0).unwrap();
        let v: Vec<f64> = (0..n * 3 * h * w).map(|_| uni.sample(&mut rng)).collect();
        Tensor::from_vec(v, (n, 3, h, w), &Device::Cpu).unwrap().to_dtype(dtype).unwrap()
    }

    #[test]
    fn built_counts_match_audit() {
        let g = Generator::new(generator_spec(), InitOptions::default(), DType::F32).unwrap();
        assert_eq!(g.network().conv_parameter_count(), 11_378_179);
        assert_eq!(g.network().norm_parameter_count(), 20_992);
        let d = Discriminator::new(discriminator_spec(), InitOptions::default(), DType::F32).unwrap();
        assert_eq!(d.network().conv_parameter_count(), 2_830_337);
    }

    #[test]
    fn generator_shapes_and_range() {
        let g = Generator::new(generator_spec_scaled(tiny()), InitOptions::default(), DType::F32).unwrap();
        for &(h, w) in &[(8, 8), (16, 24), (32, 12)] {
            let x = random_input(2, h, w, 1, DType::F32);
            let y = g.forward(&x, NormMode::Batch).unwrap();
            assert_eq!(y.dims(), &[2, 3, h, w]);
            let vals = y.flatten_all().unwrap().to_vec1::<f32>().unwrap();
            assert!(vals.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn generator_rejects_bad_shapes() {
        let g = Generator::new(generator_spec_scaled(tiny()), InitOptions::default(), DType::F32).unwrap();
        let err = g.forward(&random_input(1, 10, 8, 0, DType::F32), NormMode::Eval).unwrap_err();
        assert!(err.to_string().contains("height"), "{err}");
        let err = g.forward(&random_input(1, 8, 6, 0, DType::F32), NormMode::Eval).unwrap_err();
        assert!(err.to_string().contains("width"), "{err}");
        let x = Tensor::zeros((1, 1, 8, 8), DType::F32, &Device::Cpu).unwrap();
        assert!(g.forward(&x, NormMode::Eval).unwrap_err().to_string().contains("channels"));
    }

    #[test]
    fn discriminator_patch_map_shape() {
        let d = Discriminator::new(discriminator_spec_scaled(tiny()), InitOptions::default(), DType::F32).unwrap();
        let x = random_input(3, 64, 32, 2, DType::F32);
        assert_eq!(d.patch_map(&x, NormMode::Eval).unwrap().dims(), &[3, 1, 4, 2]);
        let s = d.scores(&x, NormMode::Batch).unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(d.scores(&random_input(1, 24, 32, 0, DType::F32), NormMode::Eval).is_err());
    }

    #[test]
    fn saturated_head_scores_one() {
        let d = Discriminator::new(discriminator_spec_scaled(tiny()), InitOptions::default(), DType::F32).unwrap();
        let w = d.network().var("conv2d_29.weight").unwrap();
        w.set(&w.zeros_like().unwrap()).unwrap();
        let b = d.network().var("conv2d_29.bias").unwrap();
        b.set(&(b.ones_like().unwrap() * 30.0).unwrap()).unwrap();
        let s = d.scores(&random_input(2, 32, 32, 3, DType::F32), NormMode::Eval).unwrap();
        for v in s.to_vec1::<f32>().unwrap() {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zeroed_residual_block_is_identity() {
        let spec = generator_spec_scaled(tiny());
        let net = Network::new(spec.clone(), InitOptions::default(), DType::F64).unwrap();
        let (start, end) = spec.residual_pairs[0];
        for i in start..=end {
            let name = &spec.layers[i].name;
            let w = net.var(&format!("{name}.weight")).unwrap();
            w.set(&w.zeros_like().unwrap()).unwrap();
        }
        let block_input = Tensor::randn(0f64, 1.0, (2, 16, 4, 4), &Device::Cpu).unwrap();
        let mut updates = Vec::new();
        let mut h = block_input.clone();
        for i in start..=end {
            h = net.layers[i].forward(&h, NormMode::Eval, i, &mut updates).unwrap();
        }
        let out = (h + &block_input).unwrap();
        let diff = (out - &block_input).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f64>().unwrap();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn train_forward_moves_running_stats_only_in_train_mode() {
        let mut g = Generator::new(generator_spec_scaled(tiny()), InitOptions::default(), DType::F32).unwrap();
        let x = random_input(2, 16, 16, 4, DType::F32);
        let before = g.network().digest().unwrap();
        g.forward(&x, NormMode::Batch).unwrap();
        assert_eq!(before, g.network().digest().unwrap());
        g.forward_train(&x).unwrap();
        assert_ne!(before, g.network().digest().unwrap());
    }

    #[test]
    fn state_round_trip() {
        let spec = generator_spec_scaled(tiny());
        let a = Network::new(spec.clone(), InitOptions { std: 0.02, seed: 1 }, DType::F32).unwrap();
        let mut b = Network::new(spec, InitOptions { std: 0.02, seed: 2 }, DType::F32).unwrap();
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
        b.load_state(&a.state().into_iter().collect()).unwrap();
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
    }
}

//! Training configuration and its `key = value` text form.
//!
//! File keys and command-line override keys are the same names. Later
//! assignments win, so overrides are applied by parsing them after the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use candle_core::DType;
use sha2::{Digest, Sha256};

use crate::arch::{
    discriminator_spec_scaled, generator_spec_scaled, ArchitectureSpec, InitOptions, ScaleOptions,
};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, IdentityExtractor, RandomConvExtractor, Vgg16Extractor};
use crate::losses::LossWeights;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtractorKind {
    Vgg16,
    RandomConv,
    Identity,
}

impl ExtractorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtractorKind::Vgg16 => "vgg16",
            ExtractorKind::RandomConv => "random_conv",
            ExtractorKind::Identity => "identity",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "vgg16" => Ok(Self::Vgg16),
            "random_conv" => Ok(Self::RandomConv),
            "identity" => Ok(Self::Identity),
            other => Err(Error::Config(format!(
                "unknown extractor {other:?}; expected vgg16, random_conv or identity"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta_1: f64,
    pub beta_2: f64,
    pub epsilon: f64,
    pub patch: usize,
    pub critic_steps_per_gen_step: usize,
    pub loss_weights: LossWeights,
    pub seed: u64,
    pub dataset_root: PathBuf,
    pub shuffle: bool,
    pub extractor: ExtractorKind,
    pub extractor_weights: Option<PathBuf>,
    pub extractor_layer: String,
    pub width_divisor: usize,
    pub residual_blocks: usize,
    pub init_std: f64,
    /// Critic weights are clamped to `[-c, c]` after each update; 0 disables.
    pub critic_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 40,
            learning_rate: 1e-4,
            beta_1: 0.9,
            beta_2: 0.999,
            epsilon: 1e-8,
            patch: 256,
            critic_steps_per_gen_step: 1,
            loss_weights: LossWeights::default(),
            seed: 0,
            dataset_root: PathBuf::new(),
            shuffle: true,
            extractor: ExtractorKind::Vgg16,
            extractor_weights: None,
            extractor_layer: Vgg16Extractor::DEFAULT_LAYER.to_string(),
            width_divisor: 1,
            residual_blocks: 9,
            init_std: 0.02,
            critic_clip: 0.0,
        }
    }
}

/// Every accepted key with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("batch_size", "pairs per step (default 16)"),
    ("epochs", "passes over the dataset (default 40)"),
    ("learning_rate", "adaptive-moment step size (default 1e-4)"),
    ("beta_1", "first-moment decay (default 0.9)"),
    ("beta_2", "second-moment decay (default 0.999)"),
    ("epsilon", "denominator stabilizer (default 1e-8)"),
    ("patch", "training crop side in pixels (default 256)"),
    ("critic_steps_per_gen_step", "critic updates per generator update (default 1)"),
    ("perceptual_weight", "weight of the perceptual loss (default 100)"),
    ("adversarial_weight", "weight of the adversarial loss (default 1)"),
    ("seed", "seed for initialization, shuffling and crops (default 0)"),
    ("dataset_root", "directory holding <split>/<sequence>/{blur,sharp}/"),
    ("shuffle", "shuffle pairs every epoch (default true)"),
    ("extractor", "perceptual features: vgg16, random_conv or identity (default vgg16)"),
    ("extractor_weights", "VGG16 safetensors file (required for vgg16)"),
    ("extractor_layer", "VGG16 layer whose ReLU output is compared (default conv3_3)"),
    ("width_divisor", "divide every hidden width by this (default 1)"),
    ("residual_blocks", "generator residual blocks (default 9)"),
    ("init_std", "standard deviation of initial weights (default 0.02)"),
    ("critic_clip", "clamp critic weights to [-c, c]; 0 disables (default 0)"),
];

pub fn valid_keys() -> Vec<&'static str> {
    CONFIG_KEYS.iter().map(|(k, _)| *k).collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl TrainConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "beta_1" => self.beta_1 = parse_num(key, value)?,
            "beta_2" => self.beta_2 = parse_num(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "patch" => self.patch = parse_num(key, value)?,
            "critic_steps_per_gen_step" => self.critic_steps_per_gen_step = parse_num(key, value)?,
            "perceptual_weight" => self.loss_weights.perceptual_weight = parse_num(key, value)?,
            "adversarial_weight" => self.loss_weights.adversarial_weight = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "dataset_root" => self.dataset_root = PathBuf::from(value),
            "shuffle" => self.shuffle = parse_num(key, value)?,
            "extractor" => self.extractor = ExtractorKind::parse(value)?,
            "extractor_weights" => {
                self.extractor_weights = (!value.is_empty()).then(|| PathBuf::from(value))
            }
            "extractor_layer" => self.extractor_layer = value.to_string(),
            "width_divisor" => self.width_divisor = parse_num(key, value)?,
            "residual_blocks" => self.residual_blocks = parse_num(key, value)?,
            "init_std" => self.init_std = parse_num(key, value)?,
            "critic_clip" => self.critic_clip = parse_num(key, value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown key {other:?}; valid keys: {}",
                    valid_keys().join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies every assignment in a config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("patch", self.patch),
            ("critic_steps_per_gen_step", self.critic_steps_per_gen_step),
            ("width_divisor", self.width_divisor),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        for (k, v) in [("beta_1", self.beta_1), ("beta_2", self.beta_2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{k} must be in [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(self.init_std > 0.0) {
            return Err(Error::Config("init_std must be positive".into()));
        }
        if !(self.critic_clip >= 0.0) {
            return Err(Error::Config("critic_clip must be non-negative".into()));
        }
        if self.patch % 16 != 0 {
            return Err(Error::Config("patch must be a multiple of 16".into()));
        }
        LossWeights::new(self.loss_weights.perceptual_weight, self.loss_weights.adversarial_weight)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Canonical text listing every key; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "batch_size = {}", self.batch_size);
        let _ = writeln!(w, "epochs = {}", self.epochs);
        let _ = writeln!(w, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(w, "beta_1 = {}", self.beta_1);
        let _ = writeln!(w, "beta_2 = {}", self.beta_2);
        let _ = writeln!(w, "epsilon = {}", self.epsilon);
        let _ = writeln!(w, "patch = {}", self.patch);
        let _ = writeln!(w, "critic_steps_per_gen_step = {}", self.critic_steps_per_gen_step);
        let _ = writeln!(w, "perceptual_weight = {}", self.loss_weights.perceptual_weight);
        let _ = writeln!(w, "adversarial_weight = {}", self.loss_weights.adversarial_weight);
        let _ = writeln!(w, "seed = {}", self.seed);
        let _ = writeln!(w, "dataset_root = {}", self.dataset_root.display());
        let _ = writeln!(w, "shuffle = {}", self.shuffle);
        let _ = writeln!(w, "extractor = {}", self.extractor.as_str());
        let _ = writeln!(
            w,
            "extractor_weights = {}",
            self.extractor_weights.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        );
        let _ = writeln!(w, "extractor_layer = {}", self.extractor_layer);
        let _ = writeln!(w, "width_divisor = {}", self.width_divisor);
        let _ = writeln!(w, "residual_blocks = {}", self.residual_blocks);
        let _ = writeln!(w, "init_std = {}", self.init_std);
        let _ = writeln!(w, "critic_clip = {}", self.critic_clip);
        s
    }

    /// First 16 hex digits of the SHA-256 of [`TrainConfig::to_text`].
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn scale(&self) -> ScaleOptions {
        ScaleOptions {
            width_divisor: self.width_divisor,
            residual_blocks: self.residual_blocks,
        }
    }

    pub fn generator_spec(&self) -> ArchitectureSpec {
        generator_spec_scaled(self.scale())
    }

    pub fn discriminator_spec(&self) -> ArchitectureSpec {
        discriminator_spec_scaled(self.scale())
    }

    pub fn generator_init(&self) -> InitOptions {
        InitOptions {
            std: self.init_std,
            seed: self.seed,
        }
    }

    pub fn discriminator_init(&self) -> InitOptions {
        InitOptions {
            std: self.init_std,
            seed: self.seed ^ 0xd15c_0000_0000_0001,
        }
    }

    pub fn build_extractor(&self, dtype: DType) -> Result<Box<dyn FeatureExtractor>> {
        Ok(match self.extractor {
            ExtractorKind::Identity => Box::new(IdentityExtractor),
            ExtractorKind::RandomConv => Box::new(RandomConvExtractor::new(RandomConvExtractor::DEFAULT_SEED, dtype)?),
            ExtractorKind::Vgg16 => {
                let path = self.extractor_weights.as_ref().ok_or_else(|| {
                    Error::Config(
                        "extractor = vgg16 needs extractor_weights (a safetensors file); \
                         use extractor = random_conv to train without pretrained weights"
                            .into(),
                    )
                })?;
                Box::new(Vgg16Extractor::load(path, &self.extractor_layer, dtype)?)
            }
        })
    }
}

//! Declarative layer tables for the generator and the discriminator.

use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Convolution,
    /// Input is resized ×2 (nearest neighbour) before the convolution.
    UpsampleConvolution,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Zero,
    Reflect,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub normalization: bool,
    pub activation: Activation,
    pub padding: Padding,
    /// Published parameter count for this row, when it comes from a reference table.
    pub declared_params: Option<u64>,
}

impl LayerSpec {
    pub fn conv(name: &str, kernel: usize, stride: usize, cin: usize, cout: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Convolution,
            kernel,
            stride,
            in_channels: cin,
            out_channels: cout,
            normalization: true,
            activation: Activation::Relu,
            padding: Padding::Zero,
            declared_params: None,
        }
    }

    fn with(mut self, f: impl FnOnce(&mut Self)) -> Self {
        f(&mut self);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchitectureSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    /// `(start, end)` indices: the input of layer `start` is added to the output of layer `end`.
    pub residual_pairs: Vec<(usize, usize)>,
    /// Final output is `(input + head) / 2`.
    pub global_skip: bool,
    pub upsample_layers: BTreeSet<String>,
    /// Published whole-network total, when there is one.
    pub declared_total: Option<u64>,
}

impl ArchitectureSpec {
    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Product of all strides; input sizes must be multiples of this.
    pub fn total_stride(&self) -> usize {
        self.layers.iter().map(|l| l.stride).product()
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn output_channels(&self) -> usize {
        self.layers[self.layers.len() - 1].out_channels
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.layers.is_empty() {
            return Err("no layers".into());
        }
        for l in &self.layers {
            if l.kernel == 0 || l.stride == 0 || l.in_channels == 0 || l.out_channels == 0 {
                return Err(format!("{}: K, S, C_in and C_out must be >= 1", l.name));
            }
        }
        for w in self.layers.windows(2) {
            if w[0].out_channels != w[1].in_channels {
                return Err(format!(
                    "{} outputs {} channels but {} expects {}",
                    w[0].name, w[0].out_channels, w[1].name, w[1].in_channels
                ));
            }
        }
        for &(start, end) in &self.residual_pairs {
            if start > end || end >= self.layers.len() {
                return Err(format!("bad residual pair ({start}, {end})"));
            }
            let block = &self.layers[start..=end];
            if block.iter().any(|l| l.stride != 1 || l.kind != LayerKind::Convolution) {
                return Err(format!(
                    "residual pair ({start}, {end}) contains a resampling layer"
                ));
            }
            if self.layers[start].in_channels != self.layers[end].out_channels {
                return Err(format!(
                    "residual pair ({start}, {end}) changes the channel count"
                ));
            }
        }
        for name in &self.upsample_layers {
            match self.layer(name) {
                Some(l) if l.kind == LayerKind::UpsampleConvolution => {}
                _ => return Err(format!("{name} is not an upsampling layer")),
            }
        }
        if self.global_skip && self.input_channels() != self.output_channels() {
            return Err("global skip needs matching input and output channels".into());
        }
        Ok(())
    }
}

/// Per-layer parameter counts published for the generator, in layer order.
pub const GENERATOR_TABLE: [(&str, u64); 24] = [
    ("conv2d", 9472),
    ("conv2d_1", 73856),
    ("conv2d_2", 295168),
    ("conv2d_3", 590080),
    ("conv2d_4", 590080),
    ("conv2d_5", 590080),
    ("conv2d_6", 590080),
    ("conv2d_7", 590080),
    ("conv2d_8", 590080),
    ("conv2d_9", 590080),
    ("conv2d_10", 590080),
    ("conv2d_11", 590080),
    ("conv2d_12", 590080),
    ("conv2d_13", 590080),
    ("conv2d_14", 590080),
    ("conv2d_15", 590080),
    ("conv2d_16", 590080),
    ("conv2d_17", 590080),
    ("conv2d_18", 590080),
    ("conv2d_19", 590080),
    ("conv2d_20", 590080),
    ("conv2d_21", 295040),
    ("conv2d_22", 73792),
    ("conv2d_23", 9411),
];

/// Per-layer parameter counts published for the discriminator.
pub const DISCRIMINATOR_TABLE: [(&str, u64); 6] = [
    ("conv2d_24", 3136),
    ("conv2d_25", 65600),
    ("conv2d_26", 131200),
    ("conv2d_27", 524544),
    ("conv2d_28", 2097664),
    ("conv2d_29", 8193),
];

pub const GENERATOR_DECLARED_TOTAL: u64 = 11_399_171;
pub const DISCRIMINATOR_DECLARED_TOTAL: u64 = 3_098_370;

/// Width and depth knobs. The defaults reproduce the published tables; other
/// values build proportionally smaller networks for tests and quick runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScaleOptions {
    /// Every hidden channel count is divided by this (minimum 1).
    pub width_divisor: usize,
    /// Number of residual blocks in the generator.
    pub residual_blocks: usize,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        Self {
            width_divisor: 1,
            residual_blocks: 9,
        }
    }
}

impl ScaleOptions {
    pub fn is_reference(&self) -> bool {
        *self == Self::default()
    }

    fn width(&self, c: usize) -> usize {
        (c / self.width_divisor.max(1)).max(1)
    }
}

pub fn generator_spec() -> ArchitectureSpec {
    generator_spec_scaled(ScaleOptions::default())
}

pub fn generator_spec_scaled(scale: ScaleOptions) -> ArchitectureSpec {
    let (c64, c128, c256) = (scale.width(64), scale.width(128), scale.width(256));
    let mut layers = vec![
        LayerSpec::conv("conv2d", 7, 1, 3, c64).with(|l| l.padding = Padding::Reflect),
        LayerSpec::conv("conv2d_1", 3, 2, c64, c128),
        LayerSpec::conv("conv2d_2", 3, 2, c128, c256),
    ];
    let mut residual_pairs = Vec::new();
    for b in 0..scale.residual_blocks {
        let start = layers.len();
        layers.push(LayerSpec::conv(&format!("conv2d_{}", 3 + 2 * b), 3, 1, c256, c256));
        layers.push(
            LayerSpec::conv(&format!("conv2d_{}", 4 + 2 * b), 3, 1, c256, c256)
                .with(|l| l.activation = Activation::None),
        );
        residual_pairs.push((start, start + 1));
    }
    let next = 3 + 2 * scale.residual_blocks;
    let up_a = format!("conv2d_{next}");
    let up_b = format!("conv2d_{}", next + 1);
    layers.push(
        LayerSpec::conv(&up_a, 3, 1, c256, c128).with(|l| l.kind = LayerKind::UpsampleConvolution),
    );
    layers.push(
        LayerSpec::conv(&up_b, 3, 1, c128, c64).with(|l| l.kind = LayerKind::UpsampleConvolution),
    );
    layers.push(
        LayerSpec::conv(&format!("conv2d_{}", next + 2), 7, 1, c64, 3).with(|l| {
            l.normalization = false;
            l.activation = Activation::Tanh;
            l.padding = Padding::Reflect;
        }),
    );

    let reference = scale.is_reference();
    if reference {
        for (layer, &(name, params)) in layers.iter_mut().zip(GENERATOR_TABLE.iter()) {
            debug_assert_eq!(layer.name, name);
            layer.declared_params = Some(params);
        }
    }
    ArchitectureSpec {
        name: "generator".into(),
        layers,
        residual_pairs,
        global_skip: true,
        upsample_layers: [up_a, up_b].into_iter().collect(),
        declared_total: reference.then_some(GENERATOR_DECLARED_TOTAL),
    }
}

pub fn discriminator_spec() -> ArchitectureSpec {
    discriminator_spec_scaled(ScaleOptions::default())
}

/// Only `width_divisor` applies; the discriminator has no residual blocks.
pub fn discriminator_spec_scaled(scale: ScaleOptions) -> ArchitectureSpec {
    let (c64, c128, c256, c512) = (
        scale.width(64),
        scale.width(128),
        scale.width(256),
        scale.width(512),
    );
    let hidden = |l: &mut LayerSpec| l.activation = Activation::LeakyRelu;
    let mut layers = vec![
        LayerSpec::conv("conv2d_24", 4, 2, 3, c64).with(|l| {
            hidden(l);
            l.normalization = false;
        }),
        LayerSpec::conv("conv2d_25", 4, 2, c64, c64).with(hidden),
        LayerSpec::conv("conv2d_26", 4, 2, c64, c128).with(hidden),
        LayerSpec::conv("conv2d_27", 4, 2, c128, c256).with(hidden),
        LayerSpec::conv("conv2d_28", 4, 1, c256, c512).with(hidden),
        LayerSpec::conv("conv2d_29", 4, 1, c512, 1).with(|l| {
            l.normalization = false;
            l.activation = Activation::Sigmoid;
        }),
    ];
    let reference = scale.width_divisor <= 1;
    if reference {
        for (layer, &(_, params)) in layers.iter_mut().zip(DISCRIMINATOR_TABLE.iter()) {
            layer.declared_params = Some(params);
        }
    }
    ArchitectureSpec {
        name: "discriminator".into(),
        layers,
        residual_pairs: Vec::new(),
        global_skip: false,
        upsample_layers: BTreeSet::new(),
        declared_total: reference.then_some(DISCRIMINATOR_DECLARED_TOTAL),
    }
}

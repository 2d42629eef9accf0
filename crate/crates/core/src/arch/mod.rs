//! Generator and discriminator: declarative specs, parameter audit, and trainable networks.

pub mod audit;
pub mod conv;
pub mod network;
pub mod norm;
pub mod spec;

pub use audit::{audit_architecture, layer_param_count, norm_param_count, AuditReport, LayerAudit};
pub use network::{Discriminator, Generator, InitOptions, Network, NormMode};
pub use spec::{
    discriminator_spec, discriminator_spec_scaled, generator_spec, generator_spec_scaled, Activation,
    ArchitectureSpec, LayerKind, LayerSpec, Padding, ScaleOptions,
};

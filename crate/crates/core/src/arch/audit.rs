//! Parameter-count auditing of an [`ArchitectureSpec`] against its published table.

use std::fmt;

use super::spec::{ArchitectureSpec, LayerSpec};

/// Weights plus biases of one convolution: `C_out * (C_in * K^2 + 1)`.
pub fn layer_param_count(layer: &LayerSpec) -> u64 {
    let (k, cin, cout) = (
        layer.kernel as u64,
        layer.in_channels as u64,
        layer.out_channels as u64,
    );
    cout * (cin * k * k + 1)
}

/// Scale, shift, running mean and running variance of a normalized layer.
pub fn norm_param_count(layer: &LayerSpec) -> u64 {
    if layer.normalization {
        4 * layer.out_channels as u64
    } else {
        0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerAudit {
    pub name: String,
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub params: u64,
    pub norm_params: u64,
    pub declared: Option<u64>,
}

impl LayerAudit {
    pub fn matches(&self) -> Option<bool> {
        self.declared.map(|d| d == self.params)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditReport {
    pub network: String,
    pub layers: Vec<LayerAudit>,
    pub conv_total: u64,
    pub norm_total: u64,
    pub grand_total: u64,
    pub declared_total: Option<u64>,
    /// Layers whose computed count differs from the declared row.
    pub mismatches: Vec<String>,
}

impl AuditReport {
    /// `Some(true)` when either the conv-only or the grand total equals the declared total.
    pub fn total_matches(&self) -> Option<bool> {
        self.declared_total
            .map(|d| d == self.grand_total || d == self.conv_total)
    }

    /// Declared total minus the conv-only total.
    pub fn total_discrepancy(&self) -> Option<i64> {
        self.declared_total
            .map(|d| d as i64 - self.conv_total as i64)
    }
}

pub fn audit_architecture(spec: &ArchitectureSpec) -> AuditReport {
    let layers: Vec<LayerAudit> = spec
        .layers
        .iter()
        .map(|l| LayerAudit {
            name: l.name.clone(),
            kernel: l.kernel,
            stride: l.stride,
            in_channels: l.in_channels,
            out_channels: l.out_channels,
            params: layer_param_count(l),
            norm_params: norm_param_count(l),
            declared: l.declared_params,
        })
        .collect();
    let conv_total = layers.iter().map(|l| l.params).sum();
    let norm_total = layers.iter().map(|l| l.norm_params).sum();
    let mismatches = layers
        .iter()
        .filter(|l| l.matches() == Some(false))
        .map(|l| l.name.clone())
        .collect();
    AuditReport {
        network: spec.name.clone(),
        layers,
        conv_total,
        norm_total,
        grand_total: conv_total + norm_total,
        declared_total: spec.declared_total,
        mismatches,
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>3} {:>3} {:>6} {:>6} {:>12} {:>12}  mismatch",
            self.network, "K", "S", "C_in", "C_out", "#Parameters", "declared"
        )?;
        for l in &self.layers {
            let declared = l.declared.map_or_else(|| "-".to_string(), |d| d.to_string());
            let flag = match l.matches() {
                Some(true) => "ok",
                Some(false) => "MISMATCH",
                None => "-",
            };
            writeln!(
                f,
                "{:<12} {:>3} {:>3} {:>6} {:>6} {:>12} {:>12}  {}",
                l.name, l.kernel, l.stride, l.in_channels, l.out_channels, l.params, declared, flag
            )?;
        }
        writeln!(f, "conv total          {}", self.conv_total)?;
        writeln!(f, "normalization total {}", self.norm_total)?;
        writeln!(f, "grand total         {}", self.grand_total)?;
        if let Some(declared) = self.declared_total {
            if declared == self.grand_total {
                writeln!(f, "declared total      {declared} (matches grand total)")?;
            } else if declared == self.conv_total {
                writeln!(f, "declared total      {declared} (matches conv total)")?;
            } else {
                writeln!(
                    f,
                    "declared total      {declared} (differs from conv total by {}; known, documented)",
                    declared as i64 - self.conv_total as i64
                )?;
            }
        }
        Ok(())
    }
}

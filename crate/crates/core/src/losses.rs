//! Training objective: perceptual loss, Wasserstein critic/generator losses and
//! their weighted sum, plus the log-likelihood minimax value as a diagnostic.
//!
//! Sign convention: the critic minimizes `mean(fake) - mean(real)`, so lowering
//! it pushes scores of sharp images up. The generator minimizes `-mean(fake)`.

use candle_core::{DType, Tensor};

use crate::error::{Error, Result};
use crate::features::FeatureExtractor;

/// Clamp applied to probabilities before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub perceptual_weight: f64,
    pub adversarial_weight: f64,
}

impl LossWeights {
    pub fn new(perceptual_weight: f64, adversarial_weight: f64) -> Result<Self> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(perceptual_weight) || !ok(adversarial_weight) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be finite and non-negative, got ({perceptual_weight}, {adversarial_weight})"
            )));
        }
        if perceptual_weight == 0.0 && adversarial_weight == 0.0 {
            return Err(Error::InvalidArgument("loss weights cannot both be zero".into()));
        }
        Ok(Self {
            perceptual_weight,
            adversarial_weight,
        })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            perceptual_weight: 100.0,
            adversarial_weight: 1.0,
        }
    }
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

pub fn perceptual_loss(sharp: &Tensor, generated: &Tensor, fx: &dyn FeatureExtractor) -> Result<Tensor> {
    if sharp.dims() != generated.dims() {
        return Err(Error::Shape(format!(
            "perceptual loss needs equal shapes, got {:?} and {:?}",
            sharp.dims(),
            generated.dims()
        )));
    }
    let target = fx.extract(&sharp.detach())?.detach();
    let features = fx.extract(generated)?;
    Ok((features - target)?.sqr()?.mean_all()?)
}

fn mean_score(scores: &Tensor, what: &str) -> Result<Tensor> {
    if scores.elem_count() == 0 {
        return Err(Error::InvalidArgument(format!("{what} score batch is empty")));
    }
    Ok(scores.mean_all()?)
}

/// `mean(scores_fake) - mean(scores_real)`.
pub fn wasserstein_critic_loss(scores_real: &Tensor, scores_fake: &Tensor) -> Result<Tensor> {
    let real = mean_score(scores_real, "real")?;
    let fake = mean_score(scores_fake, "fake")?;
    Ok((fake - real.to_dtype(scores_fake.dtype())?)?)
}

/// `-mean(scores_fake)`.
pub fn generator_adversarial_loss(scores_fake: &Tensor) -> Result<Tensor> {
    Ok(mean_score(scores_fake, "fake")?.neg()?)
}

/// Total generator loss and its two unweighted components.
pub struct GeneratorLoss {
    pub total: Tensor,
    pub perceptual: Tensor,
    pub adversarial: Tensor,
}

pub fn combined_generator_loss(
    sharp: &Tensor,
    generated: &Tensor,
    scores_fake: &Tensor,
    fx: &dyn FeatureExtractor,
    weights: LossWeights,
) -> Result<GeneratorLoss> {
    let perceptual = perceptual_loss(sharp, generated, fx)?;
    let adversarial = generator_adversarial_loss(scores_fake)?.to_dtype(perceptual.dtype())?;
    let total = ((&perceptual * weights.perceptual_weight)? + (&adversarial * weights.adversarial_weight)?)?;
    Ok(GeneratorLoss {
        total,
        perceptual,
        adversarial,
    })
}

/// `mean(ln D(x)) + mean(ln(1 - D(G(z))))` with probabilities clamped to
/// `[LOG_CLAMP, 1 - LOG_CLAMP]`. Plain numbers in, plain number out: it never
/// enters a gradient computation.
pub fn gan_value_estimate(scores_real: &[f64], scores_fake: &[f64]) -> Result<f64> {
    if scores_real.is_empty() || scores_fake.is_empty() {
        return Err(Error::InvalidArgument("score batches must be non-empty".into()));
    }
    if let Some(bad) = scores_real
        .iter()
        .chain(scores_fake)
        .find(|s| !(0.0..=1.0).contains(*s))
    {
        return Err(Error::InvalidArgument(format!("score {bad} outside [0, 1]")));
    }
    let clamp = |p: f64| p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
    let real = scores_real.iter().map(|&p| clamp(p).ln()).sum::<f64>() / scores_real.len() as f64;
    let fake = scores_fake.iter().map(|&p| (1.0 - clamp(p)).ln()).sum::<f64>() / scores_fake.len() as f64;
    Ok(real + fake)
}

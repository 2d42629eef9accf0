//! The alternating critic/generator training loop.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{Adam, AdamParams};
use super::checkpoint::{to_map, Checkpoint, OptimizerState};
use super::config::TrainConfig;
use crate::arch::{Discriminator, Generator, NormMode};
use crate::data::{scan_manifest, DatasetManifest, PairedSample, Split};
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::image::{normalize, ImageTensor};
use crate::losses::{combined_generator_loss, gan_value_estimate, scalar, wasserstein_critic_loss};

pub const STEP_LOG: &str = "steps.tsv";

/// Losses and timing of one generator update and the critic updates before it.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub epoch: u64,
    /// Critic loss of the last critic update.
    pub critic_loss: f64,
    pub generator_loss: f64,
    pub perceptual_loss: f64,
    pub adversarial_loss: f64,
    /// Log-likelihood value of the two-player game on the first critic batch.
    pub gan_value: f64,
    pub wall_time: f64,
}

impl StepReport {
    pub const HEADER: &'static str =
        "step\tepoch\tcritic_loss\tgenerator_loss\tperceptual_loss\tadversarial_loss\tgan_value\twall_time";

    pub fn to_log_line(&self) -> String {
        format!(
            "{}\t{}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:.3}",
            self.step,
            self.epoch,
            self.critic_loss,
            self.generator_loss,
            self.perceptual_loss,
            self.adversarial_loss,
            self.gan_value,
            self.wall_time
        )
    }

    /// The line without the trailing wall-clock column.
    pub fn deterministic_part(&self) -> String {
        let line = self.to_log_line();
        line.rsplit_once('\t').map(|(a, _)| a.to_string()).unwrap_or(line)
    }

    fn is_finite(&self) -> bool {
        [
            self.critic_loss,
            self.generator_loss,
            self.perceptual_loss,
            self.adversarial_loss,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// A batch as `(N, 3, P, P)` tensors in `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub blur: Tensor,
    pub sharp: Tensor,
}

impl Batch {
    pub fn from_images(blur: &ImageTensor, sharp: &ImageTensor, dtype: DType) -> Result<Self> {
        Ok(Self {
            blur: blur.to_tensor(dtype, &Device::Cpu)?,
            sharp: sharp.to_tensor(dtype, &Device::Cpu)?,
        })
    }

    /// Crops the same `patch`×`patch` window from each pair at a random offset.
    pub fn crop_pairs(pairs: &[PairedSample], patch: usize, rng: &mut impl Rng, dtype: DType) -> Result<Self> {
        let mut blur = Vec::with_capacity(pairs.len());
        let mut sharp = Vec::with_capacity(pairs.len());
        for p in pairs {
            let (h, w) = (p.sharp.height(), p.sharp.width());
            if h < patch || w < patch {
                return Err(Error::ImageTooSmall { height: h, width: w, patch });
            }
            let row = rng.random_range(0..=h - patch);
            let col = rng.random_range(0..=w - patch);
            blur.push(normalize(&p.blur.crop(row, col, patch, patch)?));
            sharp.push(normalize(&p.sharp.crop(row, col, patch, patch)?));
        }
        Self::from_images(&ImageTensor::stack(&blur)?, &ImageTensor::stack(&sharp)?, dtype)
    }
}

/// Networks, optimizers and counters of a run in progress.
pub struct Trainer {
    config: TrainConfig,
    fingerprint: String,
    generator: Generator,
    discriminator: Discriminator,
    generator_opt: Adam,
    discriminator_opt: Adam,
    extractor: Box<dyn FeatureExtractor>,
    steps_completed: u64,
    epochs_completed: u64,
    started: Instant,
}

fn adam_params(c: &TrainConfig) -> AdamParams {
    AdamParams {
        learning_rate: c.learning_rate,
        beta_1: c.beta_1,
        beta_2: c.beta_2,
        epsilon: c.epsilon,
    }
}

impl Trainer {
    pub const DTYPE: DType = DType::F32;

    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let extractor = config.build_extractor(Self::DTYPE)?;
        Self::with_extractor(config, extractor)
    }

    /// Uses a caller-supplied perceptual feature extractor.
    pub fn with_extractor(config: TrainConfig, extractor: Box<dyn FeatureExtractor>) -> Result<Self> {
        config.validate()?;
        let generator = Generator::new(config.generator_spec(), config.generator_init(), Self::DTYPE)?;
        let discriminator =
            Discriminator::new(config.discriminator_spec(), config.discriminator_init(), Self::DTYPE)?;
        let params = adam_params(&config);
        Ok(Self {
            fingerprint: config.fingerprint(),
            config,
            generator,
            discriminator,
            generator_opt: Adam::new(params),
            discriminator_opt: Adam::new(params),
            extractor,
            steps_completed: 0,
            epochs_completed: 0,
            started: Instant::now(),
        })
    }

    /// Continues a run from a checkpoint; rebuilds the extractor from its config.
    pub fn resume(ckpt: &Checkpoint) -> Result<Self> {
        let extractor = ckpt.config.build_extractor(Self::DTYPE)?;
        let mut t = Self::with_extractor(ckpt.config.clone(), extractor)?;
        t.fingerprint = ckpt.fingerprint.clone();
        t.generator.network_mut().load_state(&to_map(&ckpt.generator))?;
        t.discriminator.network_mut().load_state(&to_map(&ckpt.discriminator))?;
        let params = adam_params(&ckpt.config);
        let restore = |s: &OptimizerState| Adam::restore(params, s.step, s.m.clone(), s.v.clone());
        t.generator_opt = restore(&ckpt.generator_opt)?;
        t.discriminator_opt = restore(&ckpt.discriminator_opt)?;
        t.steps_completed = ckpt.steps_completed;
        t.epochs_completed = ckpt.epochs_completed;
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.discriminator
    }

    pub fn steps_completed(&self) -> u64 {
        self.steps_completed
    }

    pub fn epochs_completed(&self) -> u64 {
        self.epochs_completed
    }

    /// Updates the critic only. Returns its loss and the game value on this batch.
    pub fn critic_step(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        let fake = self.generator.forward(&batch.blur, NormMode::Batch)?.detach();
        let real_scores = self.discriminator.scores_train(&batch.sharp)?;
        let fake_scores = self.discriminator.scores_train(&fake)?;
        let loss = wasserstein_critic_loss(&real_scores, &fake_scores)?;
        let real = real_scores.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        let fake = fake_scores.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        let value = if real.iter().chain(&fake).all(|v| v.is_finite()) {
            gan_value_estimate(&real, &fake)?
        } else {
            f64::NAN
        };
        let grads = loss.backward()?;
        let vars = self.discriminator.network().vars();
        self.discriminator_opt.step(&vars, &grads)?;
        if self.config.critic_clip > 0.0 {
            let c = self.config.critic_clip;
            for (_, v) in &vars {
                v.set(&v.as_tensor().clamp(-c, c)?)?;
            }
        }
        Ok((scalar(&loss)?, value))
    }

    /// Updates the generator only; the critic's state is not touched.
    pub fn generator_step(&mut self, batch: &Batch) -> Result<(f64, f64, f64)> {
        let fake = self.generator.forward_train(&batch.blur)?;
        let scores = self.discriminator.scores(&fake, NormMode::Batch)?;
        let loss = combined_generator_loss(&batch.sharp, &fake, &scores, self.extractor.as_ref(), self.config.loss_weights)?;
        let grads = loss.total.backward()?;
        self.generator_opt.step(&self.generator.network().vars(), &grads)?;
        Ok((scalar(&loss.total)?, scalar(&loss.perceptual)?, scalar(&loss.adversarial)?))
    }

    /// `critic_steps_per_gen_step` critic updates, then one generator update.
    /// Fails with [`Error::NonFinite`] if any loss or updated parameter is NaN or infinite.
    pub fn train_step(&mut self, batch: &Batch) -> Result<StepReport> {
        let mut critic_loss = f64::NAN;
        let mut gan_value = f64::NAN;
        for k in 0..self.config.critic_steps_per_gen_step {
            let (loss, value) = self.critic_step(batch)?;
            critic_loss = loss;
            if k == 0 {
                gan_value = value;
            }
        }
        let (generator_loss, perceptual_loss, adversarial_loss) = self.generator_step(batch)?;
        self.steps_completed += 1;
        let report = StepReport {
            step: self.steps_completed,
            epoch: self.epochs_completed + 1,
            critic_loss,
            generator_loss,
            perceptual_loss,
            adversarial_loss,
            gan_value,
            wall_time: self.started.elapsed().as_secs_f64(),
        };
        if !report.is_finite() {
            return Err(Error::NonFinite {
                step: report.step,
                report: report.to_log_line(),
            });
        }
        // ReLU-style maxima swallow NaN, so diverged weights can still give finite losses.
        if let Some(name) = self.first_non_finite_tensor()? {
            return Err(Error::NonFinite {
                step: report.step,
                report: format!("{} (non-finite {name})", report.to_log_line()),
            });
        }
        Ok(report)
    }

    fn first_non_finite_tensor(&self) -> Result<Option<String>> {
        for net in [self.generator.network(), self.discriminator.network()] {
            for (name, t) in net.state() {
                // Any NaN or infinity survives the sum.
                let sum = t.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
                if !sum.is_finite() {
                    return Ok(Some(name));
                }
            }
        }
        Ok(None)
    }

    /// Pair order and crop positions for an epoch depend only on the seed and
    /// the epoch number.
    pub fn epoch_rng(&self, epoch: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch);
        rng
    }

    /// One pass over `manifest`. The last batch may be smaller.
    pub fn train_epoch(
        &mut self,
        manifest: &DatasetManifest,
        on_step: &mut dyn FnMut(&StepReport, &Trainer) -> Result<()>,
    ) -> Result<Vec<StepReport>> {
        let epoch = self.epochs_completed + 1;
        let mut rng = self.epoch_rng(epoch);
        let mut order: Vec<usize> = (0..manifest.len()).collect();
        if self.config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut reports = Vec::new();
        for chunk in order.chunks(self.config.batch_size) {
            let pairs = chunk
                .iter()
                .map(|&i| manifest.load_pair(i))
                .collect::<Result<Vec<_>>>()?;
            let batch = Batch::crop_pairs(&pairs, self.config.patch, &mut rng, Self::DTYPE)?;
            let report = self.train_step(&batch)?;
            log::info!("{}", report.to_log_line());
            on_step(&report, self)?;
            reports.push(report);
        }
        self.epochs_completed = epoch;
        Ok(reports)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            fingerprint: self.fingerprint.clone(),
            epochs_completed: self.epochs_completed,
            steps_completed: self.steps_completed,
            generator: self.generator.network().state(),
            discriminator: self.discriminator.network().state(),
            generator_opt: OptimizerState::of(&self.generator_opt),
            discriminator_opt: OptimizerState::of(&self.discriminator_opt),
        }
    }
}

pub fn checkpoint_path(out_dir: &Path, epoch: u64) -> PathBuf {
    out_dir.join(format!("epoch_{epoch:04}.ckpt"))
}

/// Summary of a finished run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub reports: Vec<StepReport>,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: Checkpoint,
}

/// Trains for `config.epochs` epochs on the training split of
/// `config.dataset_root`, appending to `<out_dir>/steps.tsv` after every step
/// and writing `<out_dir>/epoch_NNNN.ckpt` after every epoch.
pub fn train(config: &TrainConfig, out_dir: impl AsRef<Path>) -> Result<TrainOutcome> {
    run(Trainer::new(config.clone())?, out_dir.as_ref(), &mut |_, _| Ok(()))
}

/// [`train`] with an existing trainer and a per-step callback.
pub fn run(
    mut trainer: Trainer,
    out_dir: &Path,
    on_step: &mut dyn FnMut(&StepReport, &Trainer) -> Result<()>,
) -> Result<TrainOutcome> {
    let manifest = scan_manifest(&trainer.config.dataset_root, Split::Train)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join(STEP_LOG);
    let fresh = trainer.steps_completed == 0;
    let file = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    if fresh {
        writeln!(log, "{}", StepReport::HEADER).map_err(|e| Error::io(&log_path, e))?;
    }
    log::info!(
        "training on {} pairs for {} epochs; config fingerprint {}",
        manifest.len(),
        trainer.config.epochs,
        trainer.fingerprint
    );
    let mut reports = Vec::new();
    let mut checkpoints = Vec::new();
    while trainer.epochs_completed < trainer.config.epochs as u64 {
        let mut step_logger = |r: &StepReport, t: &Trainer| -> Result<()> {
            writeln!(log, "{}", r.to_log_line())
                .and_then(|_| log.flush())
                .map_err(|e| Error::io(&log_path, e))?;
            on_step(r, t)
        };
        reports.extend(trainer.train_epoch(&manifest, &mut step_logger)?);
        let path = checkpoint_path(out_dir, trainer.epochs_completed);
        trainer.checkpoint().save(&path)?;
        log::info!("wrote {}", path.display());
        checkpoints.push(path);
    }
    Ok(TrainOutcome {
        reports,
        checkpoints,
        final_checkpoint: trainer.checkpoint(),
    })
}

/// Reads a step log written by [`train`], dropping the header.
pub fn read_step_log(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().skip(1).map(str::to_string).collect())
}

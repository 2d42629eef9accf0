//! Command-line front end shared by the `deblur-gan` binary and its tests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};

use crate::arch::{
    audit_architecture, discriminator_spec_scaled, generator_spec_scaled, Generator, ScaleOptions,
};
use crate::data::{make_synthetic_split, scan_manifest, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate_dataset, Deblurrer, IdentityDeblurrer, TileOptions, TiledDeblurrer};
use crate::image::PixelImage;
use crate::train::{self, Checkpoint, Trainer, TrainConfig, CONFIG_KEYS};

#[derive(Debug, Parser)]
#[command(name = "deblur-gan", version, about = "Train and run a motion-deblurring generator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Train on `<dataset_root>/train/*/{blur,sharp}/`.
    Train(TrainArgs),
    /// Deblur one image or every image in a directory.
    Deblur(DeblurArgs),
    /// Score a model (or the blurred input) on a dataset split.
    Evaluate(EvaluateArgs),
    /// Print the per-layer parameter audit.
    Audit(AuditArgs),
    /// Write a seeded synthetic blur/sharp dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `key = value` config file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where checkpoints and the step log go.
    #[arg(long, default_value = "runs/train")]
    pub out: PathBuf,
    /// Continue from a checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

/// One optional `--<key> <value>` flag per config key.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigOverrides(pub Vec<(String, String)>);

impl FromArgMatches for ConfigOverrides {
    fn from_arg_matches(m: &ArgMatches) -> std::result::Result<Self, clap::Error> {
        let mut out = Vec::new();
        for (key, _) in CONFIG_KEYS {
            if let Some(v) = m.get_one::<String>(key) {
                out.push((key.to_string(), v.clone()));
            }
        }
        Ok(Self(out))
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> std::result::Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for ConfigOverrides {
    fn augment_args(cmd: Command) -> Command {
        CONFIG_KEYS.iter().fold(cmd, |cmd, (key, help)| {
            cmd.arg(
                clap::Arg::new(*key)
                    .long(*key)
                    .value_name("VALUE")
                    .help(*help)
                    .help_heading("Config overrides"),
            )
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

#[derive(Debug, Args)]
pub struct TileArgs {
    /// Tile side for full-frame inference.
    #[arg(long, default_value_t = 256)]
    pub patch: usize,
    /// Offset between neighbouring tiles.
    #[arg(long, default_value_t = 128)]
    pub stride: usize,
    /// Tiles per generator call.
    #[arg(long, default_value_t = 4)]
    pub tile_batch: usize,
}

impl TileArgs {
    fn options(&self) -> TileOptions {
        TileOptions {
            patch: self.patch,
            stride: self.stride,
            batch: self.tile_batch,
        }
    }
}

#[derive(Debug, Args)]
pub struct DeblurArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// An image file or a directory of images.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file (for a file input) or directory.
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub tiles: TileArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, required_unless_present = "identity", conflicts_with = "identity")]
    pub checkpoint: Option<PathBuf>,
    /// Score the blurred input itself.
    #[arg(long)]
    pub identity: bool,
    #[arg(long)]
    pub dataset_root: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Also write per-image scores here.
    #[arg(long)]
    pub per_image: Option<PathBuf>,
    #[command(flatten)]
    pub tiles: TileArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum NetworkChoice {
    Generator,
    Discriminator,
    Both,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long, value_enum, default_value_t = NetworkChoice::Both)]
    pub network: NetworkChoice,
    #[arg(long, default_value_t = 1)]
    pub width_divisor: usize,
    #[arg(long, default_value_t = 9)]
    pub residual_blocks: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset root to create.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "train")]
    pub split: Split,
}

/// Builds the effective config: defaults, then the file, then the flags.
pub fn resolve_config(file: Option<&Path>, overrides: &ConfigOverrides) -> Result<TrainConfig> {
    let mut config = TrainConfig::default();
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        config.apply_text(&text)?;
    }
    for (k, v) in &overrides.0 {
        config.set(k, v)?;
    }
    config.validate()?;
    Ok(config)
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

fn load_generator(path: &Path) -> Result<Generator> {
    Checkpoint::load(path)?.generator(Trainer::DTYPE)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let say = |out: &mut dyn Write, s: &str| out.write_all(s.as_bytes()).map_err(|e| Error::io("<stdout>", e));
    match cli.command {
        Commands::Train(a) => {
            let outcome = match &a.resume {
                Some(path) => {
                    let (mut ckpt, _) = match &a.config {
                        Some(file) => Checkpoint::load_for(path, &resolve_config(Some(file), &a.overrides)?)?,
                        None => (Checkpoint::load(path)?, true),
                    };
                    // Only the epoch budget may change on resume.
                    if let Some((_, v)) = a.overrides.0.iter().find(|(k, _)| k == "epochs") {
                        ckpt.config.set("epochs", v)?;
                    }
                    train::run(Trainer::resume(&ckpt)?, &a.out, &mut |_, _| Ok(()))?
                }
                None => {
                    let config = resolve_config(a.config.as_deref(), &a.overrides)?;
                    train::train(&config, &a.out)?
                }
            };
            let last = outcome.reports.last();
            say(
                out,
                &format!(
                    "trained {} steps; last checkpoint {}\n",
                    last.map(|r| r.step).unwrap_or(0),
                    outcome
                        .checkpoints
                        .last()
                        .map(|p| p.display().to_string())
                        .unwrap_or_else(|| "none".into())
                ),
            )
        }
        Commands::Deblur(a) => {
            let g = load_generator(&a.checkpoint)?;
            let model = TiledDeblurrer::new(&g, a.tiles.options())?;
            if a.input.is_dir() {
                fs::create_dir_all(&a.output).map_err(|e| Error::io(&a.output, e))?;
                let mut files: Vec<PathBuf> = fs::read_dir(&a.input)
                    .map_err(|e| Error::io(&a.input, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.is_file() && is_image(p))
                    .collect();
                files.sort();
                for f in &files {
                    let dest = a.output.join(f.file_name().expect("file has a name"));
                    model.deblur(&PixelImage::load(f)?)?.save(&dest)?;
                    say(out, &format!("{}\n", dest.display()))?;
                }
                Ok(())
            } else {
                model.deblur(&PixelImage::load(&a.input)?)?.save(&a.output)?;
                say(out, &format!("{}\n", a.output.display()))
            }
        }
        Commands::Evaluate(a) => {
            let manifest = scan_manifest(&a.dataset_root, a.split)?;
            let report = match &a.checkpoint {
                Some(path) if !a.identity => {
                    let g = load_generator(path)?;
                    evaluate_dataset(&TiledDeblurrer::new(&g, a.tiles.options())?, &manifest)?
                }
                _ => evaluate_dataset(&IdentityDeblurrer, &manifest)?,
            };
            if let Some(path) = &a.per_image {
                fs::write(path, report.to_index()).map_err(|e| Error::io(path, e))?;
            }
            say(out, &report.to_table())
        }
        Commands::Audit(a) => {
            let scale = ScaleOptions {
                width_divisor: a.width_divisor,
                residual_blocks: a.residual_blocks,
            };
            let mut specs = Vec::new();
            if a.network != NetworkChoice::Discriminator {
                specs.push(generator_spec_scaled(scale));
            }
            if a.network != NetworkChoice::Generator {
                specs.push(discriminator_spec_scaled(scale));
            }
            for spec in specs {
                say(out, &format!("{}\n", audit_architecture(&spec)))?;
            }
            Ok(())
        }
        Commands::Synth(a) => {
            let m = make_synthetic_split(a.count, a.size, a.seed, &a.out, a.split)?;
            say(out, &format!("wrote {} pairs under {}\n", m.len(), a.out.join(a.split.as_str()).display()))
        }
    }
}

/// Parses `argv`, runs, and maps failures to exit codes: 0 ok, 1 runtime error, 2 usage.
pub fn main_with(argv: impl IntoIterator<Item = String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

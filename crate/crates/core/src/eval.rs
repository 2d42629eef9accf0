//! Full-frame inference by overlapping tiles, and dataset scoring.

use crate::arch::Generator;
use crate::data::DatasetManifest;
use crate::error::{Error, Result};
use crate::image::{denormalize, normalize, ImageTensor, PixelImage};
use crate::metrics::{psnr, ssim, ImageScore, MetricReport};
use crate::patches::{assemble_patches, extract_patches, plan_patches};

/// Anything that maps a blurred frame to a restored frame of the same size.
pub trait Deblurrer {
    fn deblur(&self, blur: &PixelImage) -> Result<PixelImage>;
}

/// Returns the input unchanged; scoring it gives the blurred-input baseline.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityDeblurrer;

impl Deblurrer for IdentityDeblurrer {
    fn deblur(&self, blur: &PixelImage) -> Result<PixelImage> {
        Ok(blur.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileOptions {
    pub patch: usize,
    pub stride: usize,
    /// Patches per generator call.
    pub batch: usize,
}

impl Default for TileOptions {
    fn default() -> Self {
        Self {
            patch: 256,
            stride: 128,
            batch: 4,
        }
    }
}

/// Runs the generator over overlapping tiles and averages the overlaps.
pub struct TiledDeblurrer<'a> {
    generator: &'a Generator,
    options: TileOptions,
}

impl<'a> TiledDeblurrer<'a> {
    pub fn new(generator: &'a Generator, options: TileOptions) -> Result<Self> {
        if options.patch == 0 || options.stride == 0 || options.stride > options.patch || options.batch == 0 {
            return Err(Error::InvalidArgument(format!("bad tiling options {options:?}")));
        }
        Ok(Self { generator, options })
    }

    /// Patch side actually used for an `h`×`w` frame: the configured patch,
    /// shrunk to fit small frames and rounded down to the generator's stride.
    pub fn effective_patch(&self, h: usize, w: usize) -> Result<usize> {
        let step = self.generator.network().spec().total_stride();
        let p = self.options.patch.min(h).min(w) / step * step;
        if p < 2 * step || p < 8 {
            return Err(Error::ImageTooSmall {
                height: h,
                width: w,
                patch: self.options.patch,
            });
        }
        Ok(p)
    }

    pub fn deblur_tensor(&self, blur: &ImageTensor) -> Result<ImageTensor> {
        let (_, h, w, _) = blur.shape();
        let patch = self.effective_patch(h, w)?;
        let stride = self.options.stride.min(patch);
        let grid = plan_patches(h, w, patch, stride)?;
        let tiles = extract_patches(blur, &grid)?;
        let mut restored = Vec::with_capacity(tiles.len());
        for chunk in tiles.chunks(self.options.batch) {
            let out = self.generator.deblur(&ImageTensor::stack(chunk)?)?;
            for i in 0..out.batch() {
                restored.push(out.item(i)?);
            }
        }
        assemble_patches(&restored, &grid)
    }
}

impl Deblurrer for TiledDeblurrer<'_> {
    fn deblur(&self, blur: &PixelImage) -> Result<PixelImage> {
        if blur.channels() != 3 {
            return Err(Error::Shape(format!(
                "the generator takes RGB images, got {} channels",
                blur.channels()
            )));
        }
        denormalize(&self.deblur_tensor(&normalize(blur))?)
    }
}

/// Deblurs every pair and scores the result against its sharp frame.
pub fn evaluate_dataset(model: &dyn Deblurrer, manifest: &DatasetManifest) -> Result<MetricReport> {
    if manifest.is_empty() {
        return Err(Error::Dataset("manifest has no pairs".into()));
    }
    let mut scores = Vec::with_capacity(manifest.len());
    for i in 0..manifest.len() {
        let pair = manifest.load_pair(i)?;
        let restored = model.deblur(&pair.blur)?;
        scores.push(ImageScore {
            id: pair.id.clone(),
            psnr: psnr(&restored, &pair.sharp)?,
            ssim: ssim(&restored, &pair.sharp)?,
        });
    }
    MetricReport::from_scores(scores)
}

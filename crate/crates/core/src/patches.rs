//! Square-patch tiling of full frames and seam blending on reassembly.

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Patch origins covering a `source_shape` image.
///
/// Offsets advance by the stride and the last one snaps to `dim - patch`, so
/// every patch lies inside the image and the border is covered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub positions: Vec<(usize, usize)>,
    pub source_shape: (usize, usize),
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn axis_offsets(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = dim - patch;
    let mut offsets: Vec<usize> = (0..=last).step_by(stride).collect();
    if offsets.last() != Some(&last) {
        offsets.push(last);
    }
    offsets
}

pub fn plan_patches(height: usize, width: usize, patch: usize, stride: usize) -> Result<PatchGrid> {
    if patch == 0 {
        return Err(Error::InvalidArgument("patch size must be positive".into()));
    }
    if stride == 0 || stride > patch {
        return Err(Error::InvalidArgument(format!(
            "stride must be in 1..={patch}, got {stride}"
        )));
    }
    if patch > height || patch > width {
        return Err(Error::ImageTooSmall {
            height,
            width,
            patch,
        });
    }
    let rows = axis_offsets(height, patch, stride);
    let cols = axis_offsets(width, patch, stride);
    let positions = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect();
    Ok(PatchGrid {
        patch_size: patch,
        positions,
        source_shape: (height, width),
    })
}

/// Cuts `image` (batch of one) into one patch per grid position.
pub fn extract_patches(image: &ImageTensor, grid: &PatchGrid) -> Result<Vec<ImageTensor>> {
    if image.batch() != 1 || (image.height(), image.width()) != grid.source_shape {
        return Err(Error::Shape(format!(
            "grid planned for {:?} cannot tile tensor {:?}",
            grid.source_shape,
            image.shape()
        )));
    }
    grid.positions
        .iter()
        .map(|&(r, c)| image.crop(r, c, grid.patch_size, grid.patch_size))
        .collect()
}

/// Reassembles patches, averaging every overlap with uniform weights.
pub fn assemble_patches(patches: &[ImageTensor], grid: &PatchGrid) -> Result<ImageTensor> {
    if patches.len() != grid.positions.len() {
        return Err(Error::Shape(format!(
            "grid has {} positions but {} patches were given",
            grid.positions.len(),
            patches.len()
        )));
    }
    let channels = patches
        .first()
        .map(ImageTensor::channels)
        .ok_or_else(|| Error::Shape("no patches to assemble".into()))?;
    let p = grid.patch_size;
    for patch in patches {
        if patch.shape() != (1, p, p, channels) {
            return Err(Error::Shape(format!(
                "expected patch (1, {p}, {p}, {channels}), got {:?}",
                patch.shape()
            )));
        }
    }

    let (h, w) = grid.source_shape;
    let mut sum = vec![0f64; h * w * channels];
    let mut count = vec![0u32; h * w];
    for (patch, &(r, c)) in patches.iter().zip(&grid.positions) {
        for y in 0..p {
            for x in 0..p {
                let pix = (r + y) * w + (c + x);
                count[pix] += 1;
                for ch in 0..channels {
                    sum[pix * channels + ch] += patch.get(0, y, x, ch) as f64;
                }
            }
        }
    }
    let mut values = Vec::with_capacity(sum.len());
    for (i, s) in sum.iter().enumerate() {
        let n = count[i / channels];
        if n == 0 {
            return Err(Error::Shape(format!(
                "pixel {} is not covered by any patch",
                i / channels
            )));
        }
        values.push((s / n as f64) as f32);
    }
    ImageTensor::new(1, h, w, channels, values)
}

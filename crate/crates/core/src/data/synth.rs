//! Seeded synthetic blur/sharp pairs: flat shapes on plain backgrounds,
//! smeared by random linear motion kernels.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::blur::{apply_blur, make_kernel, MotionBlurKernel};
use super::manifest::{scan_manifest, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::image::PixelImage;

pub const MIN_SYNTH_SIZE: usize = 32;
pub const KERNEL_LENGTHS: std::ops::RangeInclusive<usize> = 3..=15;
const SEQUENCE: &str = "synthetic";

fn random_color(rng: &mut impl Rng) -> [u8; 3] {
    [rng.random(), rng.random(), rng.random()]
}

fn paint(img: &mut PixelImage, y: usize, x: usize, color: [u8; 3]) {
    for (c, &v) in color.iter().enumerate() {
        img.set(y, x, c, v);
    }
}

/// A `size`×`size` RGB render of 3–6 rectangles, discs and triangles.
pub fn render_shapes(size: usize, rng: &mut impl Rng) -> PixelImage {
    let bg = random_color(rng);
    let mut img = PixelImage::new(size, size, 3, bg.repeat(size * size)).expect("valid shape");
    let count = rng.random_range(3..=6);
    let s = size as f64;
    for _ in 0..count {
        let color = random_color(rng);
        let cx = rng.random_range(0.0..s);
        let cy = rng.random_range(0.0..s);
        let r = rng.random_range(s / 10.0..s / 3.0);
        match rng.random_range(0..3) {
            0 => {
                let hw = rng.random_range(r / 3.0..r);
                let hh = rng.random_range(r / 3.0..r);
                for y in 0..size {
                    for x in 0..size {
                        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                        if (px - cx).abs() <= hw && (py - cy).abs() <= hh {
                            paint(&mut img, y, x, color);
                        }
                    }
                }
            }
            1 => {
                for y in 0..size {
                    for x in 0..size {
                        let (px, py) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                        if px * px + py * py <= r * r {
                            paint(&mut img, y, x, color);
                        }
                    }
                }
            }
            _ => {
                let rot = rng.random_range(0.0..std::f64::consts::TAU);
                let verts: Vec<(f64, f64)> = (0..3)
                    .map(|i| {
                        let a = rot + i as f64 * std::f64::consts::TAU / 3.0;
                        (cx + r * a.cos(), cy + r * a.sin())
                    })
                    .collect();
                let edge = |a: (f64, f64), b: (f64, f64), p: (f64, f64)| {
                    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
                };
                for y in 0..size {
                    for x in 0..size {
                        let p = (x as f64 + 0.5, y as f64 + 0.5);
                        let e = [
                            edge(verts[0], verts[1], p),
                            edge(verts[1], verts[2], p),
                            edge(verts[2], verts[0], p),
                        ];
                        if e.iter().all(|&v| v >= 0.0) || e.iter().all(|&v| v <= 0.0) {
                            paint(&mut img, y, x, color);
                        }
                    }
                }
            }
        }
    }
    img
}

pub fn random_kernel(rng: &mut impl Rng) -> Result<MotionBlurKernel> {
    let length = rng.random_range(KERNEL_LENGTHS);
    let angle = rng.random_range(0.0..180.0);
    make_kernel(length, angle)
}

/// One sharp render and its blurred copy.
pub fn synthesize_pair(size: usize, rng: &mut impl Rng) -> Result<(PixelImage, PixelImage)> {
    let sharp = render_shapes(size, rng);
    let kernel = random_kernel(rng)?;
    let blur = apply_blur(&sharp, &kernel)?;
    Ok((sharp, blur))
}

/// Writes `n` pairs into the training split under `out`.
pub fn make_synthetic_dataset(n: usize, size: usize, seed: u64, out: impl AsRef<Path>) -> Result<DatasetManifest> {
    make_synthetic_split(n, size, seed, out, Split::Train)
}

/// Writes `n` pairs as `<out>/<split>/synthetic/{blur,sharp}/NNNNNN.png`.
pub fn make_synthetic_split(
    n: usize,
    size: usize,
    seed: u64,
    out: impl AsRef<Path>,
    split: Split,
) -> Result<DatasetManifest> {
    if n < 1 {
        return Err(Error::InvalidArgument("need at least one pair".into()));
    }
    if size < MIN_SYNTH_SIZE {
        return Err(Error::InvalidArgument(format!(
            "synthetic images must be at least {MIN_SYNTH_SIZE}px, got {size}"
        )));
    }
    let out = out.as_ref();
    let seq = out.join(split.as_str()).join(SEQUENCE);
    let (blur_dir, sharp_dir) = (seq.join("blur"), seq.join("sharp"));
    for dir in [&blur_dir, &sharp_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let (sharp, blur) = synthesize_pair(size, &mut rng)?;
        let name = format!("{i:06}.png");
        sharp.save(sharp_dir.join(&name))?;
        blur.save(blur_dir.join(&name))?;
    }
    scan_manifest(out, split)
}

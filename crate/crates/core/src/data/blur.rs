//! Uniform linear motion blur.

use crate::error::{Error, Result};
use crate::image::PixelImage;

/// Line-segment point-spread function on a square, odd-sized grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionBlurKernel {
    pub length: usize,
    /// Degrees in `[0, 180)`, counter-clockwise from the +x axis.
    pub angle: f64,
    /// Grid side; the centre tap is at `(size / 2, size / 2)`.
    pub size: usize,
    /// Row-major weights, non-negative, summing to one.
    pub taps: Vec<f64>,
}

impl MotionBlurKernel {
    #[inline]
    pub fn tap(&self, y: usize, x: usize) -> f64 {
        self.taps[y * self.size + x]
    }
}

/// Rasterizes `length` unit samples spaced one pixel apart along the segment,
/// bilinearly splatted onto the grid, then normalizes to unit mass.
pub fn make_kernel(length: usize, angle: f64) -> Result<MotionBlurKernel> {
    if length < 1 {
        return Err(Error::InvalidArgument("kernel length must be at least 1".into()));
    }
    if !angle.is_finite() {
        return Err(Error::InvalidArgument(format!("bad kernel angle {angle}")));
    }
    let angle = angle.rem_euclid(180.0);
    let size = if length % 2 == 1 { length } else { length + 1 };
    let centre = (size / 2) as f64;
    let (sin, cos) = angle.to_radians().sin_cos();
    let mut taps = vec![0.0; size * size];
    for i in 0..length {
        let t = i as f64 - (length as f64 - 1.0) / 2.0;
        // Image rows grow downwards.
        let x = centre + t * cos;
        let y = centre - t * sin;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                let w = wy * wx;
                if w <= 1e-12 {
                    continue;
                }
                let (yy, xx) = (y0 as isize + dy, x0 as isize + dx);
                if (0..size as isize).contains(&yy) && (0..size as isize).contains(&xx) {
                    taps[yy as usize * size + xx as usize] += w;
                }
            }
        }
    }
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    Ok(MotionBlurKernel {
        length,
        angle,
        size,
        taps,
    })
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Convolves every channel with `kernel` using mirror boundaries and rounds
/// half up back to 8 bits.
pub fn apply_blur(img: &PixelImage, kernel: &MotionBlurKernel) -> Result<PixelImage> {
    if kernel.size > img.height() || kernel.size > img.width() {
        return Err(Error::InvalidArgument(format!(
            "{}px kernel does not fit a {}x{} image",
            kernel.size,
            img.height(),
            img.width()
        )));
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let c = (kernel.size / 2) as isize;
    let nonzero: Vec<(isize, isize, f64)> = (0..kernel.size)
        .flat_map(|ky| (0..kernel.size).map(move |kx| (ky, kx)))
        .filter_map(|(ky, kx)| {
            let t = kernel.tap(ky, kx);
            (t > 0.0).then_some((ky as isize - c, kx as isize - c, t))
        })
        .collect();
    let mut out = vec![0u8; h * w * ch];
    let src = img.data();
    for y in 0..h {
        for x in 0..w {
            for k in 0..ch {
                let mut acc = 0.0;
                for &(dy, dx, t) in &nonzero {
                    let sy = reflect(y as isize - dy, h);
                    let sx = reflect(x as isize - dx, w);
                    acc += t * src[(sy * w + sx) * ch + k] as f64;
                }
                out[(y * w + x) * ch + k] = (acc + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
        }
    }
    PixelImage::new(h, w, ch, out)
}

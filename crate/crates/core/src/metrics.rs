//! PSNR and SSIM on 8-bit images, and per-dataset aggregate reports.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::PixelImage;

pub const MAX_VALUE: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub fn ssim_c1() -> f64 {
    (SSIM_K1 * MAX_VALUE).powi(2)
}

pub fn ssim_c2() -> f64 {
    (SSIM_K2 * MAX_VALUE).powi(2)
}

fn check_same(a: &PixelImage, b: &PixelImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "images differ in shape: {}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

/// `10 log10(255^2 / MSE)` over all pixels and channels; `+inf` when identical.
pub fn psnr(a: &PixelImage, b: &PixelImage) -> Result<f64> {
    check_same(a, b)?;
    let sse: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / a.data().len() as f64;
    Ok(10.0 * (MAX_VALUE * MAX_VALUE / mse).log10())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SsimMode {
    /// Score the luma plane (`0.299 R + 0.587 G + 0.114 B`).
    #[default]
    Luma,
    /// Score each channel separately and average.
    ChannelMean,
}

/// Normalized 1-D Gaussian; the 2-D window is its outer product.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Image planes as `f64`, one per scored channel.
pub fn planes(img: &PixelImage, mode: SsimMode) -> Vec<Vec<f64>> {
    let d = img.data();
    match (img.channels(), mode) {
        (1, _) => vec![d.iter().map(|&v| v as f64).collect()],
        (_, SsimMode::Luma) => vec![d
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()],
        (c, SsimMode::ChannelMean) => (0..c)
            .map(|k| d.iter().skip(k).step_by(c).map(|&v| v as f64).collect())
            .collect(),
    }
}

/// Separable "valid" filtering of an `h`×`w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64]) -> Vec<f64> {
    let k = win.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = win.iter().zip(&src[x..x + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = win
                .iter()
                .enumerate()
                .map(|(i, a)| a * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, win: &[f64]) -> f64 {
    let (c1, c2) = (ssim_c1(), ssim_c2());
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter_valid(a, h, w, win);
    let mu_b = filter_valid(b, h, w, win);
    let e_aa = filter_valid(&prod(&|x, _| x * x), h, w, win);
    let e_bb = filter_valid(&prod(&|_, y| y * y), h, w, win);
    let e_ab = filter_valid(&prod(&|x, y| x * y), h, w, win);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    total / n as f64
}

/// Mean SSIM over all valid 11×11 Gaussian windows (σ = 1.5), luma plane.
pub fn ssim(a: &PixelImage, b: &PixelImage) -> Result<f64> {
    ssim_with(a, b, SsimMode::default())
}

pub fn ssim_with(a: &PixelImage, b: &PixelImage, mode: SsimMode) -> Result<f64> {
    check_same(a, b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let win = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let pa = planes(a, mode);
    let pb = planes(b, mode);
    let scores: Vec<f64> = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| ssim_plane(x, y, a.height(), a.width(), &win))
        .collect();
    Ok((scores.iter().sum::<f64>() / scores.len() as f64).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
}

impl Aggregate {
    /// Max/min over every value; the mean skips infinities.
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = values.clone().fold(f64::INFINITY, f64::min);
        let finite: Vec<f64> = values.filter(|v| v.is_finite()).collect();
        let mean = if finite.is_empty() {
            max
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        Self { max, min, mean }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub per_image: Vec<ImageScore>,
    pub psnr: Aggregate,
    pub ssim: Aggregate,
    /// Images whose PSNR was infinite (excluded from the PSNR mean).
    pub infinite_psnr: usize,
}

impl MetricReport {
    pub fn from_scores(per_image: Vec<ImageScore>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::Dataset("no images were scored".into()));
        }
        let psnr = Aggregate::of(per_image.iter().map(|s| s.psnr));
        let ssim = Aggregate::of(per_image.iter().map(|s| s.ssim));
        let infinite_psnr = per_image.iter().filter(|s| s.psnr.is_infinite()).count();
        Ok(Self {
            per_image,
            psnr,
            ssim,
            infinite_psnr,
        })
    }

    /// Tab-separated summary: `metric max min mean`, one row per metric.
    pub fn to_table(&self) -> String {
        let mut s = String::from("metric\tmax\tmin\tmean\n");
        let _ = writeln!(s, "PSNR\t{:.2}\t{:.2}\t{:.2}", self.psnr.max, self.psnr.min, self.psnr.mean);
        let _ = writeln!(s, "SSIM\t{:.4}\t{:.4}\t{:.4}", self.ssim.max, self.ssim.min, self.ssim.mean);
        if self.infinite_psnr > 0 {
            let _ = writeln!(
                s,
                "# {} of {} images had infinite PSNR and are excluded from the PSNR mean",
                self.infinite_psnr,
                self.per_image.len()
            );
        }
        s
    }

    /// One `id<TAB>psnr<TAB>ssim` line per image.
    pub fn to_index(&self) -> String {
        self.per_image
            .iter()
            .map(|s| format!("{}\t{}\t{}\n", s.id, s.psnr, s.ssim))
            .collect()
    }
}

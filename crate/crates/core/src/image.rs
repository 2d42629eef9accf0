//! 8-bit images and the normalized floating-point batches the networks consume.
//!
//! Normalized tensors use the `[-1, 1]` range of the generator's tanh head:
//! intensity `v` maps to `v / 127.5 - 1`. The reverse mapping rounds half up,
//! so `0.0` becomes `128`.

use std::path::Path;

use candle_core::{DType, Device, Tensor};

use crate::error::{Error, Result};

/// An 8-bit image stored row-major, channels-last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl PixelImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!(
                "images need 1 or 3 channels, got {channels}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty image {height}x{width}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} image needs {} bytes, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &PixelImage) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Copies a `size`-by-`size` window whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::Shape(format!(
                "crop {height}x{width} at ({row}, {col}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * self.channels);
        for y in row..row + height {
            let start = (y * self.width + col) * self.channels;
            data.extend_from_slice(&self.data[start..start + width * self.channels]);
        }
        Self::new(height, width, self.channels, data)
    }

    /// Decodes a PNG or JPEG file as 8-bit RGB.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(h as usize, w as usize, 3, img.into_raw())
    }

    /// Encodes by file extension (`png`, `jpg`, `jpeg`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let color = if self.channels == 3 {
            image::ExtendedColorType::Rgb8
        } else {
            image::ExtendedColorType::L8
        };
        image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            color,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// A batch of normalized images, laid out `(batch, height, width, channels)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    batch: usize,
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f32>,
}

impl ImageTensor {
    pub fn new(
        batch: usize,
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f32>,
    ) -> Result<Self> {
        if batch == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "empty tensor ({batch}, {height}, {width}, {channels})"
            )));
        }
        if values.len() != batch * height * width * channels {
            return Err(Error::Shape(format!(
                "tensor ({batch}, {height}, {width}, {channels}) needs {} values, got {}",
                batch * height * width * channels,
                values.len()
            )));
        }
        Ok(Self {
            batch,
            height,
            width,
            channels,
            values,
        })
    }

    pub fn filled(
        batch: usize,
        height: usize,
        width: usize,
        channels: usize,
        value: f32,
    ) -> Result<Self> {
        Self::new(
            batch,
            height,
            width,
            channels,
            vec![value; batch * height * width * channels],
        )
    }

    /// `(batch, height, width, channels)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.batch, self.height, self.width, self.channels)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    fn index(&self, n: usize, y: usize, x: usize, c: usize) -> usize {
        ((n * self.height + y) * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, n: usize, y: usize, x: usize, c: usize) -> f32 {
        self.values[self.index(n, y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, y: usize, x: usize, c: usize, v: f32) {
        let i = self.index(n, y, x, c);
        self.values[i] = v;
    }

    /// Batch element `n` as a batch of one.
    pub fn item(&self, n: usize) -> Result<Self> {
        if n >= self.batch {
            return Err(Error::Shape(format!(
                "batch index {n} out of range for batch {}",
                self.batch
            )));
        }
        let len = self.height * self.width * self.channels;
        Self::new(
            1,
            self.height,
            self.width,
            self.channels,
            self.values[n * len..(n + 1) * len].to_vec(),
        )
    }

    /// Concatenates along the batch dimension.
    pub fn stack(items: &[ImageTensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        let mut values = Vec::new();
        let mut batch = 0;
        for t in items {
            if (t.height, t.width, t.channels) != (first.height, first.width, first.channels) {
                return Err(Error::Shape(format!(
                    "cannot stack {:?} with {:?}",
                    t.shape(),
                    first.shape()
                )));
            }
            batch += t.batch;
            values.extend_from_slice(&t.values);
        }
        Self::new(batch, first.height, first.width, first.channels, values)
    }

    /// Window of every batch element with top-left corner `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::Shape(format!(
                "crop {height}x{width} at ({row}, {col}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut values = Vec::with_capacity(self.batch * height * width * self.channels);
        for n in 0..self.batch {
            for y in row..row + height {
                let start = self.index(n, y, col, 0);
                values.extend_from_slice(&self.values[start..start + width * self.channels]);
            }
        }
        Self::new(self.batch, height, width, self.channels, values)
    }

    /// Converts to an `(N, C, H, W)` tensor, the layout the convolutions use.
    pub fn to_tensor(&self, dtype: DType, device: &Device) -> Result<Tensor> {
        let t = Tensor::from_slice(
            &self.values,
            (self.batch, self.height, self.width, self.channels),
            device,
        )?
        .permute((0, 3, 1, 2))?
        .contiguous()?
        .to_dtype(dtype)?;
        Ok(t)
    }

    /// Inverse of [`ImageTensor::to_tensor`].
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (n, c, h, w) = t.dims4()?;
        let values = t
            .permute((0, 2, 3, 1))?
            .to_dtype(DType::F32)?
            .flatten_all()?
            .to_vec1::<f32>()?;
        Self::new(n, h, w, c, values)
    }
}

/// Maps intensities into `[-1, 1]` and adds a batch dimension of one.
pub fn normalize(img: &PixelImage) -> ImageTensor {
    let values = img.data.iter().map(|&v| v as f32 / 127.5 - 1.0).collect();
    ImageTensor {
        batch: 1,
        height: img.height,
        width: img.width,
        channels: img.channels,
        values,
    }
}

/// Maps one normalized value back to 8 bits: `round_half_up((v + 1) * 127.5)`, clamped.
#[inline]
pub fn to_intensity(v: f32) -> u8 {
    let scaled = (v as f64 + 1.0) * 127.5;
    if scaled.is_nan() {
        return 0;
    }
    (scaled + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Inverse of [`normalize`] for a batch of one; out-of-range values are clamped.
pub fn denormalize(t: &ImageTensor) -> Result<PixelImage> {
    if t.batch != 1 {
        return Err(Error::Shape(format!(
            "denormalize expects a batch of 1, got {}",
            t.batch
        )));
    }
    let data = t.values.iter().map(|&v| to_intensity(v)).collect();
    PixelImage::new(t.height, t.width, t.channels, data)
}

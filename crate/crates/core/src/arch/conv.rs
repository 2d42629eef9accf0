//! Unpadded 2-D convolution as a differentiable tensor op, plus the padding
//! and resampling helpers the layers need.
//!
//! Both passes lower to im2col + matrix products, processed in chunks of whole samples or row
//! stripes so the column buffer stays bounded on full-resolution frames. The backward pass
//! is the exact adjoint of the forward lowering (col2im for the input gradient).

use candle_core::{
    CpuStorage, CustomOp2, DType, Device, Layout, Shape, Tensor, WithDType,
};

/// Upper bound on the number of elements in one column buffer.
const COLUMN_BUDGET: usize = 1 << 22;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    out_height: usize,
    out_width: usize,
}

impl Geometry {
    fn new(x: &[usize], w: &[usize], stride: usize) -> candle_core::Result<Self> {
        let (&[n, c, h, wd], &[o, wc, kh, kw]) = (x, w) else {
            candle_core::bail!("conv2d expects 4-d input and kernel, got {x:?} and {w:?}")
        };
        if wc != c || kh != kw {
            candle_core::bail!("kernel {w:?} does not fit input {x:?}")
        }
        if h < kh || wd < kw || stride == 0 {
            candle_core::bail!("input {x:?} smaller than kernel {w:?} (stride {stride})")
        }
        Ok(Self {
            batch: n,
            channels: c,
            height: h,
            width: wd,
            out_channels: o,
            kernel: kh,
            stride,
            out_height: (h - kh) / stride + 1,
            out_width: (wd - kw) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn stripe_rows(&self) -> usize {
        (COLUMN_BUDGET / (self.out_width * self.patch_len()).max(1)).clamp(1, self.out_height)
    }

    /// Work units `(first sample, samples, first output row, rows)`. Whole
    /// samples are grouped while they fit the budget; larger ones are split
    /// into row stripes.
    fn chunks(&self) -> Vec<Chunk> {
        let rows = self.stripe_rows();
        let mut out = Vec::new();
        if rows == self.out_height {
            let per = (COLUMN_BUDGET / (self.out_height * self.out_width * self.patch_len()).max(1)).clamp(1, self.batch);
            for n0 in (0..self.batch).step_by(per) {
                out.push(Chunk { n0, samples: per.min(self.batch - n0), r0: 0, rows });
            }
        } else {
            for n0 in 0..self.batch {
                for r0 in (0..self.out_height).step_by(rows) {
                    out.push(Chunk { n0, samples: 1, r0, rows: rows.min(self.out_height - r0) });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
struct Chunk {
    n0: usize,
    samples: usize,
    r0: usize,
    rows: usize,
}

impl Chunk {
    fn positions(&self, g: &Geometry) -> usize {
        self.rows * g.out_width
    }

    fn width(&self, g: &Geometry) -> usize {
        self.samples * self.positions(g)
    }
}

/// Writes the column block of output rows `r0..r0+rows` of one sample into
/// `cols`, a row-major matrix with `ld` columns, starting at column `offset`.
fn im2col<T: WithDType>(sample: &[T], g: &Geometry, r0: usize, rows: usize, cols: &mut [T], ld: usize, offset: usize) {
    let (k, s, ow) = (g.kernel, g.stride, g.out_width);
    let positions = rows * ow;
    for c in 0..g.channels {
        let plane = &sample[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * ld + offset..][..positions];
                for oy in 0..rows {
                    let src = &plane[((r0 + oy) * s + ky) * g.width + kx..];
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if s == 1 {
                        dst.copy_from_slice(&src[..ow]);
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            *d = src[ox * s];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds a column block back into one sample.
fn col2im<T: WithDType>(cols: &[T], g: &Geometry, r0: usize, rows: usize, ld: usize, offset: usize, sample: &mut [T]) {
    let (k, s, ow) = (g.kernel, g.stride, g.out_width);
    let positions = rows * ow;
    for c in 0..g.channels {
        let plane = &mut sample[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * ld + offset..][..positions];
                for oy in 0..rows {
                    let base = ((r0 + oy) * s + ky) * g.width + kx;
                    let src = &row[oy * ow..(oy + 1) * ow];
                    if s == 1 {
                        for (d, &v) in plane[base..base + ow].iter_mut().zip(src) {
                            *d += v;
                        }
                    } else {
                        for (ox, &v) in src.iter().enumerate() {
                            plane[base + ox * s] += v;
                        }
                    }
                }
            }
        }
    }
}

fn cpu() -> Device {
    Device::Cpu
}

fn columns<T: WithDType>(x: &[T], g: &Geometry, ch: &Chunk) -> candle_core::Result<Tensor> {
    let sample_len = g.channels * g.height * g.width;
    let (positions, ld) = (ch.positions(g), ch.width(g));
    let mut cols = vec![T::zero(); g.patch_len() * ld];
    for i in 0..ch.samples {
        let n = ch.n0 + i;
        im2col(&x[n * sample_len..(n + 1) * sample_len], g, ch.r0, ch.rows, &mut cols, ld, i * positions);
    }
    Tensor::from_vec(cols, (g.patch_len(), ld), &cpu())
}

fn forward_impl<T: WithDType>(x: &[T], w: &[T], g: &Geometry) -> candle_core::Result<Vec<T>> {
    let (oh, ow, o) = (g.out_height, g.out_width, g.out_channels);
    let kernel = Tensor::from_slice(w, (o, g.patch_len()), &cpu())?;
    let mut out = vec![T::zero(); g.batch * o * oh * ow];
    for ch in g.chunks() {
        let (positions, ld) = (ch.positions(g), ch.width(g));
        let y = kernel.matmul(&columns(x, g, &ch)?)?.flatten_all()?.to_vec1::<T>()?;
        for i in 0..ch.samples {
            for oc in 0..o {
                let dst = &mut out[(((ch.n0 + i) * o + oc) * oh + ch.r0) * ow..][..positions];
                dst.copy_from_slice(&y[oc * ld + i * positions..][..positions]);
            }
        }
    }
    Ok(out)
}

fn backward_impl<T: WithDType>(
    x: &[T],
    w: &[T],
    grad: &[T],
    g: &Geometry,
) -> candle_core::Result<(Vec<T>, Vec<T>)> {
    let (oh, ow, o) = (g.out_height, g.out_width, g.out_channels);
    let kernel_t = Tensor::from_slice(w, (o, g.patch_len()), &cpu())?.t()?;
    let sample_len = g.channels * g.height * g.width;
    let mut dx = vec![T::zero(); x.len()];
    let mut dw: Option<Tensor> = None;
    for ch in g.chunks() {
        let (positions, ld) = (ch.positions(g), ch.width(g));
        let mut gchunk = vec![T::zero(); o * ld];
        for i in 0..ch.samples {
            for oc in 0..o {
                gchunk[oc * ld + i * positions..][..positions]
                    .copy_from_slice(&grad[(((ch.n0 + i) * o + oc) * oh + ch.r0) * ow..][..positions]);
            }
        }
        let gchunk = Tensor::from_vec(gchunk, (o, ld), &cpu())?;
        let part = gchunk.matmul(&columns(x, g, &ch)?.t()?)?;
        dw = Some(match dw {
            Some(acc) => (acc + part)?,
            None => part,
        });
        let dcols = kernel_t.matmul(&gchunk)?.flatten_all()?.to_vec1::<T>()?;
        for i in 0..ch.samples {
            let n = ch.n0 + i;
            col2im(&dcols, g, ch.r0, ch.rows, ld, i * positions, &mut dx[n * sample_len..(n + 1) * sample_len]);
        }
    }
    let dw = dw.expect("at least one chunk");
    Ok((dx, dw.flatten_all()?.to_vec1::<T>()?))
}

fn contiguous_slice<'a, T: WithDType>(s: &'a CpuStorage, l: &Layout) -> candle_core::Result<&'a [T]> {
    let Some((start, end)) = l.contiguous_offsets() else {
        candle_core::bail!("conv2d operands must be contiguous")
    };
    Ok(&s.as_slice::<T>()?[start..end])
}

struct ValidConv2d {
    stride: usize,
}

impl CustomOp2 for ValidConv2d {
    fn name(&self) -> &'static str {
        "valid-conv2d"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = Geometry::new(l1.dims(), l2.dims(), self.stride)?;
        let shape = Shape::from((g.batch, g.out_channels, g.out_height, g.out_width));
        let storage = match (s1, s2) {
            (CpuStorage::F32(_), CpuStorage::F32(_)) => {
                let out = forward_impl::<f32>(contiguous_slice(s1, l1)?, contiguous_slice(s2, l2)?, &g)?;
                CpuStorage::F32(out)
            }
            (CpuStorage::F64(_), CpuStorage::F64(_)) => {
                let out = forward_impl::<f64>(contiguous_slice(s1, l1)?, contiguous_slice(s2, l2)?, &g)?;
                CpuStorage::F64(out)
            }
            _ => candle_core::bail!("conv2d supports matching f32 or f64 operands"),
        };
        Ok((storage, shape))
    }

    fn bwd(
        &self,
        x: &Tensor,
        w: &Tensor,
        _res: &Tensor,
        grad: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let g = Geometry::new(x.dims(), w.dims(), self.stride)?;
        let grad = grad.contiguous()?;
        let (dx, dw) = match x.dtype() {
            DType::F32 => {
                let (dx, dw) = backward_impl::<f32>(
                    &x.flatten_all()?.to_vec1()?,
                    &w.flatten_all()?.to_vec1()?,
                    &grad.flatten_all()?.to_vec1()?,
                    &g,
                )?;
                (Tensor::from_vec(dx, x.shape(), x.device())?, Tensor::from_vec(dw, w.shape(), w.device())?)
            }
            DType::F64 => {
                let (dx, dw) = backward_impl::<f64>(
                    &x.flatten_all()?.to_vec1()?,
                    &w.flatten_all()?.to_vec1()?,
                    &grad.flatten_all()?.to_vec1()?,
                    &g,
                )?;
                (Tensor::from_vec(dx, x.shape(), x.device())?, Tensor::from_vec(dw, w.shape(), w.device())?)
            }
            dt => candle_core::bail!("conv2d backward does not support {dt:?}"),
        };
        Ok((Some(dx), Some(dw)))
    }
}

/// Convolution without padding: `(N, C, H, W) * (O, C, K, K) -> (N, O, H', W')`.
pub fn conv2d_valid(x: &Tensor, kernel: &Tensor, stride: usize) -> candle_core::Result<Tensor> {
    x.contiguous()?.apply_op2(&kernel.contiguous()?, ValidConv2d { stride })
}

/// Split of the total "same" padding: the extra pixel, if any, goes after.
pub fn same_padding(size: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = size.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(size);
    (total / 2, total - total / 2)
}

/// Spatial re-indexing: output pixel `(y, x)` copies input pixel
/// `(rows[y], cols[x])`, or is zero where either index is `None`. The
/// backward pass scatter-adds the gradient through the same map.
struct IndexMap2d {
    rows: Vec<Option<usize>>,
    cols: Vec<Option<usize>>,
}

impl IndexMap2d {
    fn gather<T: WithDType>(&self, x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
        let (oh, ow) = (self.rows.len(), self.cols.len());
        let mut out = vec![T::zero(); planes * oh * ow];
        for p in 0..planes {
            let src = &x[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for (oy, r) in self.rows.iter().enumerate() {
                let Some(r) = *r else { continue };
                let line = &src[r * w..(r + 1) * w];
                for (d, c) in dst[oy * ow..(oy + 1) * ow].iter_mut().zip(&self.cols) {
                    if let Some(c) = *c {
                        *d = line[c];
                    }
                }
            }
        }
        out
    }

    fn scatter<T: WithDType>(&self, g: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
        let (oh, ow) = (self.rows.len(), self.cols.len());
        let mut out = vec![T::zero(); planes * h * w];
        for p in 0..planes {
            let src = &g[p * oh * ow..(p + 1) * oh * ow];
            let dst = &mut out[p * h * w..(p + 1) * h * w];
            for (oy, r) in self.rows.iter().enumerate() {
                let Some(r) = *r else { continue };
                let line = &mut dst[r * w..(r + 1) * w];
                for (v, c) in src[oy * ow..(oy + 1) * ow].iter().zip(&self.cols) {
                    if let Some(c) = *c {
                        line[c] += *v;
                    }
                }
            }
        }
        out
    }
}

impl candle_core::CustomOp1 for IndexMap2d {
    fn name(&self) -> &'static str {
        "index-map-2d"
    }

    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let &[n, c, h, w] = l.dims() else {
            candle_core::bail!("expected NCHW input, got {:?}", l.dims())
        };
        let shape = Shape::from((n, c, self.rows.len(), self.cols.len()));
        let out = match s {
            CpuStorage::F32(_) => CpuStorage::F32(self.gather(contiguous_slice::<f32>(s, l)?, n * c, h, w)),
            CpuStorage::F64(_) => CpuStorage::F64(self.gather(contiguous_slice::<f64>(s, l)?, n * c, h, w)),
            _ => candle_core::bail!("resampling supports f32 or f64"),
        };
        Ok((out, shape))
    }

    fn bwd(&self, arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let (n, c, h, w) = arg.dims4()?;
        let g = grad.contiguous()?.flatten_all()?;
        Ok(Some(match arg.dtype() {
            DType::F32 => Tensor::from_vec(self.scatter(&g.to_vec1::<f32>()?, n * c, h, w), arg.shape(), arg.device())?,
            DType::F64 => Tensor::from_vec(self.scatter(&g.to_vec1::<f64>()?, n * c, h, w), arg.shape(), arg.device())?,
            dt => candle_core::bail!("resampling backward does not support {dt:?}"),
        }))
    }
}

fn remap(x: &Tensor, rows: Vec<Option<usize>>, cols: Vec<Option<usize>>) -> candle_core::Result<Tensor> {
    x.contiguous()?.apply_op1(IndexMap2d { rows, cols })
}

fn reflect_indices(size: usize, before: usize, after: usize) -> Vec<Option<usize>> {
    let last = size as isize - 1;
    (0..size + before + after)
        .map(|i| {
            let p = i as isize - before as isize;
            let r = if p < 0 {
                -p
            } else if p > last {
                2 * last - p
            } else {
                p
            };
            Some(r as usize)
        })
        .collect()
}

fn zero_indices(size: usize, before: usize, after: usize) -> Vec<Option<usize>> {
    (0..size + before + after)
        .map(|i| i.checked_sub(before).filter(|&p| p < size))
        .collect()
}

/// Mirror padding without repeating the edge pixel (`d c b | a b c d | c b a`).
pub fn reflect_pad(x: &Tensor, top: usize, bottom: usize, left: usize, right: usize) -> candle_core::Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if top >= h || bottom >= h || left >= w || right >= w {
        candle_core::bail!("reflection padding ({top}, {bottom}, {left}, {right}) too large for {h}x{w}")
    }
    remap(x, reflect_indices(h, top, bottom), reflect_indices(w, left, right))
}

pub fn zero_pad(x: &Tensor, top: usize, bottom: usize, left: usize, right: usize) -> candle_core::Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if top + bottom + left + right == 0 {
        return Ok(x.clone());
    }
    remap(x, zero_indices(h, top, bottom), zero_indices(w, left, right))
}

/// Nearest-neighbour x2 resize; differentiates as a 2x2 sum.
pub fn upsample_nearest2x(x: &Tensor) -> candle_core::Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    remap(x, (0..2 * h).map(|i| Some(i / 2)).collect(), (0..2 * w).map(|i| Some(i / 2)).collect())
}

//! Batch normalization with batch statistics as a fused differentiable op.

use candle_core::{CpuStorage, CustomOp3, DType, Layout, Shape, Tensor, WithDType};

/// Per-channel mean and biased variance over `(N, H, W)` of an NCHW slice.
fn channel_stats<T: WithDType>(x: &[T], n: usize, c: usize, hw: usize) -> (Vec<f64>, Vec<f64>) {
    let count = (n * hw) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for b in 0..n {
            s += x[(b * c + ch) * hw..][..hw].iter().map(|v| v.to_f64()).sum::<f64>();
        }
        let m = s / count;
        let mut q = 0.0;
        for b in 0..n {
            q += x[(b * c + ch) * hw..][..hw]
                .iter()
                .map(|v| {
                    let d = v.to_f64() - m;
                    d * d
                })
                .sum::<f64>();
        }
        mean[ch] = m;
        var[ch] = q / count;
    }
    (mean, var)
}

fn dims(l: &Layout) -> candle_core::Result<(usize, usize, usize)> {
    let &[n, c, h, w] = l.dims() else {
        candle_core::bail!("batch norm expects NCHW input, got {:?}", l.dims())
    };
    Ok((n, c, h * w))
}

fn slice<'a, T: WithDType>(s: &'a CpuStorage, l: &Layout) -> candle_core::Result<&'a [T]> {
    let Some((a, b)) = l.contiguous_offsets() else {
        candle_core::bail!("batch norm operands must be contiguous")
    };
    Ok(&s.as_slice::<T>()?[a..b])
}

fn forward_impl<T: WithDType>(x: &[T], gamma: &[T], beta: &[T], n: usize, c: usize, hw: usize, eps: f64) -> Vec<T> {
    let (mean, var) = channel_stats(x, n, c, hw);
    let mut out = vec![T::zero(); x.len()];
    for ch in 0..c {
        let scale = gamma[ch].to_f64() / (var[ch] + eps).sqrt();
        let shift = beta[ch].to_f64() - mean[ch] * scale;
        for b in 0..n {
            let base = (b * c + ch) * hw;
            for (o, v) in out[base..base + hw].iter_mut().zip(&x[base..base + hw]) {
                *o = T::from_f64(v.to_f64() * scale + shift);
            }
        }
    }
    out
}

/// Returns `(dx, dgamma, dbeta)`.
fn backward_impl<T: WithDType>(
    x: &[T],
    gamma: &[T],
    dy: &[T],
    n: usize,
    c: usize,
    hw: usize,
    eps: f64,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (mean, var) = channel_stats(x, n, c, hw);
    let count = (n * hw) as f64;
    let mut dx = vec![T::zero(); x.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        let inv = 1.0 / (var[ch] + eps).sqrt();
        let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
        for b in 0..n {
            let base = (b * c + ch) * hw;
            for (v, g) in x[base..base + hw].iter().zip(&dy[base..base + hw]) {
                let g = g.to_f64();
                sum_dy += g;
                sum_dy_xhat += g * (v.to_f64() - mean[ch]) * inv;
            }
        }
        dgamma[ch] = T::from_f64(sum_dy_xhat);
        dbeta[ch] = T::from_f64(sum_dy);
        let k = gamma[ch].to_f64() * inv;
        let (a, bcoef) = (sum_dy / count, sum_dy_xhat / count);
        for b in 0..n {
            let base = (b * c + ch) * hw;
            for ((d, v), g) in dx[base..base + hw].iter_mut().zip(&x[base..base + hw]).zip(&dy[base..base + hw]) {
                let xhat = (v.to_f64() - mean[ch]) * inv;
                *d = T::from_f64(k * (g.to_f64() - a - xhat * bcoef));
            }
        }
    }
    (dx, dgamma, dbeta)
}

struct BatchNormOp {
    eps: f64,
}

impl CustomOp3 for BatchNormOp {
    fn name(&self) -> &'static str {
        "batch-norm"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
        s3: &CpuStorage,
        l3: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let (n, c, hw) = dims(l1)?;
        if l2.dims() != [c] || l3.dims() != [c] {
            candle_core::bail!("batch norm scale/shift must have {c} entries")
        }
        let out = match (s1, s2, s3) {
            (CpuStorage::F32(_), CpuStorage::F32(_), CpuStorage::F32(_)) => CpuStorage::F32(forward_impl::<f32>(
                slice(s1, l1)?,
                slice(s2, l2)?,
                slice(s3, l3)?,
                n,
                c,
                hw,
                self.eps,
            )),
            (CpuStorage::F64(_), CpuStorage::F64(_), CpuStorage::F64(_)) => CpuStorage::F64(forward_impl::<f64>(
                slice(s1, l1)?,
                slice(s2, l2)?,
                slice(s3, l3)?,
                n,
                c,
                hw,
                self.eps,
            )),
            _ => candle_core::bail!("batch norm supports matching f32 or f64 operands"),
        };
        Ok((out, l1.shape().clone()))
    }

    fn bwd(
        &self,
        x: &Tensor,
        gamma: &Tensor,
        _beta: &Tensor,
        _res: &Tensor,
        grad: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>, Option<Tensor>)> {
        let (n, c, h, w) = x.dims4()?;
        let hw = h * w;
        macro_rules! run {
            ($t:ty) => {{
                let (dx, dg, db) = backward_impl::<$t>(
                    &x.flatten_all()?.to_vec1()?,
                    &gamma.to_vec1()?,
                    &grad.flatten_all()?.to_vec1()?,
                    n,
                    c,
                    hw,
                    self.eps,
                );
                (
                    Tensor::from_vec(dx, x.shape(), x.device())?,
                    Tensor::from_vec(dg, c, x.device())?,
                    Tensor::from_vec(db, c, x.device())?,
                )
            }};
        }
        let (dx, dg, db) = match x.dtype() {
            DType::F32 => run!(f32),
            DType::F64 => run!(f64),
            dt => candle_core::bail!("batch norm backward does not support {dt:?}"),
        };
        Ok((Some(dx), Some(dg), Some(db)))
    }
}

/// `gamma * (x - mean) / sqrt(var + eps) + beta` with per-channel statistics
/// of this batch (biased variance).
pub fn batch_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> candle_core::Result<Tensor> {
    x.contiguous()?
        .apply_op3(&gamma.contiguous()?, &beta.contiguous()?, BatchNormOp { eps })
}

/// Per-channel batch mean and biased variance, as `(C,)` tensors of `x`'s dtype.
pub fn batch_statistics(x: &Tensor) -> candle_core::Result<(Tensor, Tensor)> {
    let (n, c, h, w) = x.dims4()?;
    let (mean, var) = match x.dtype() {
        DType::F32 => channel_stats(&x.flatten_all()?.to_vec1::<f32>()?, n, c, h * w),
        DType::F64 => channel_stats(&x.flatten_all()?.to_vec1::<f64>()?, n, c, h * w),
        dt => candle_core::bail!("batch statistics do not support {dt:?}"),
    };
    Ok((
        Tensor::new(mean, x.device())?.to_dtype(x.dtype())?,
        Tensor::new(var, x.device())?.to_dtype(x.dtype())?,
    ))
}

//! Binary checkpoints of a training run.
//!
//! Layout: `DBGANCKP`, format version (u32 LE), payload length (u64 LE),
//! payload, SHA-256 of the payload. Loading verifies length and checksum
//! before decoding anything.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use sha2::{Digest, Sha256};

use super::adam::Adam;
use super::config::TrainConfig;
use crate::arch::{Discriminator, Generator};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DBGANCKP";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;
const CHECKSUM_LEN: usize = 32;

#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<(String, Tensor)>,
    pub v: Vec<(String, Tensor)>,
}

impl OptimizerState {
    pub fn of(opt: &Adam) -> Self {
        let (m, v) = opt.moments();
        Self {
            step: opt.step_count(),
            m,
            v,
        }
    }
}

/// Everything needed to resume or deploy a run.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Fingerprint of the config the run was started with.
    pub fingerprint: String,
    pub epochs_completed: u64,
    pub steps_completed: u64,
    pub generator: Vec<(String, Tensor)>,
    pub discriminator: Vec<(String, Tensor)>,
    pub generator_opt: OptimizerState,
    pub discriminator_opt: OptimizerState,
}

impl Checkpoint {
    pub fn fingerprint_matches(&self, config: &TrainConfig) -> bool {
        self.fingerprint == config.fingerprint()
    }

    /// Rebuilds the generator recorded in the checkpoint.
    pub fn generator(&self, dtype: DType) -> Result<Generator> {
        let mut g = Generator::new(self.config.generator_spec(), self.config.generator_init(), dtype)?;
        g.network_mut().load_state(&to_map(&self.generator))?;
        Ok(g)
    }

    pub fn discriminator(&self, dtype: DType) -> Result<Discriminator> {
        let mut d = Discriminator::new(self.config.discriminator_spec(), self.config.discriminator_init(), dtype)?;
        d.network_mut().load_state(&to_map(&self.discriminator))?;
        Ok(d)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut p = Vec::new();
        put_str(&mut p, &self.config.to_text());
        put_str(&mut p, &self.fingerprint);
        p.extend(self.epochs_completed.to_le_bytes());
        p.extend(self.steps_completed.to_le_bytes());
        p.extend(self.generator_opt.step.to_le_bytes());
        p.extend(self.discriminator_opt.step.to_le_bytes());
        for section in [
            &self.generator,
            &self.discriminator,
            &self.generator_opt.m,
            &self.generator_opt.v,
            &self.discriminator_opt.m,
            &self.discriminator_opt.v,
        ] {
            put_section(&mut p, section)?;
        }
        let mut out = Vec::with_capacity(HEADER_LEN + p.len() + CHECKSUM_LEN);
        out.extend_from_slice(MAGIC);
        out.extend(FORMAT_VERSION.to_le_bytes());
        out.extend((p.len() as u64).to_le_bytes());
        out.extend_from_slice(&p);
        out.extend(Sha256::digest(&p));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let expected = HEADER_LEN
            .checked_add(len)
            .and_then(|n| n.checked_add(CHECKSUM_LEN))
            .ok_or_else(|| Error::Checkpoint("corrupt length field".into()))?;
        if bytes.len() != expected {
            return Err(Error::Checkpoint(format!(
                "truncated or padded: expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let payload = &bytes[HEADER_LEN..HEADER_LEN + len];
        if Sha256::digest(payload).as_slice() != &bytes[HEADER_LEN + len..] {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader { buf: payload, pos: 0 };
        let config = TrainConfig::from_text(&r.string()?)?;
        let fingerprint = r.string()?;
        let epochs_completed = r.u64()?;
        let steps_completed = r.u64()?;
        let g_step = r.u64()?;
        let d_step = r.u64()?;
        let generator = r.section()?;
        let discriminator = r.section()?;
        let (gm, gv) = (r.section()?, r.section()?);
        let (dm, dv) = (r.section()?, r.section()?);
        if r.pos != payload.len() {
            return Err(Error::Checkpoint("trailing bytes in payload".into()));
        }
        Ok(Self {
            config,
            fingerprint,
            epochs_completed,
            steps_completed,
            generator,
            discriminator,
            generator_opt: OptimizerState { step: g_step, m: gm, v: gv },
            discriminator_opt: OptimizerState { step: d_step, m: dm, v: dv },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("partial");
        std::fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Loads a checkpoint for a run configured as `config`, warning when the
    /// stored fingerprint differs. Returns the checkpoint and whether it matched.
    pub fn load_for(path: impl AsRef<Path>, config: &TrainConfig) -> Result<(Self, bool)> {
        let ckpt = Self::load(path.as_ref())?;
        let matched = ckpt.fingerprint_matches(config);
        if !matched {
            log::warn!(
                "{}: config fingerprint {} differs from the current config {}",
                path.as_ref().display(),
                ckpt.fingerprint,
                config.fingerprint()
            );
        }
        Ok((ckpt, matched))
    }
}

pub(crate) fn to_map(v: &[(String, Tensor)]) -> HashMap<String, Tensor> {
    v.iter().cloned().collect()
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_section(out: &mut Vec<u8>, tensors: &[(String, Tensor)]) -> Result<()> {
    out.extend((tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        put_str(out, name);
        let code = match t.dtype() {
            DType::F32 => 0u8,
            DType::F64 => 1u8,
            other => return Err(Error::Checkpoint(format!("{name}: cannot store dtype {other:?}"))),
        };
        out.push(code);
        out.extend((t.rank() as u32).to_le_bytes());
        for &d in t.dims() {
            out.extend((d as u64).to_le_bytes());
        }
        let flat = t.flatten_all()?;
        match code {
            0 => flat.to_vec1::<f32>()?.iter().for_each(|v| out.extend(v.to_le_bytes())),
            _ => flat.to_vec1::<f64>()?.iter().for_each(|v| out.extend(v.to_le_bytes())),
        }
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("payload ends early".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }

    fn section(&mut self) -> Result<Vec<(String, Tensor)>> {
        let count = self.u32()? as usize;
        let mut out = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = self.string()?;
            let code = self.take(1)?[0];
            let rank = self.u32()? as usize;
            let mut dims = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                dims.push(self.u64()? as usize);
            }
            let n: usize = dims.iter().product();
            let t = match code {
                0 => {
                    let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("bad shape".into()))?)?;
                    let v: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                    Tensor::from_vec(v, dims, &Device::Cpu)?
                }
                1 => {
                    let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("bad shape".into()))?)?;
                    let v: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                    Tensor::from_vec(v, dims, &Device::Cpu)?
                }
                other => return Err(Error::Checkpoint(format!("{name}: unknown dtype code {other}"))),
            };
            out.push((name, t));
        }
        Ok(out)
    }
}

//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! "ADL1"  u8 version
//! u32 tensor_count, then per tensor:
//!     u32 name_len, name (utf-8), u32 rank, u32 dims[rank], f32 values[Π dims]
//! u64 adam_step, f32 lr, f32 beta1, f32 beta2, f32 eps
//! u32 tensor_count, tensors as above named "m.<param>" then "v.<param>"
//! ```
//!
//! Parameters are stored in network order (`enc.w`, `enc.b`, `mix.w`, ...);
//! the action count is read back from the shape of `pi2.w`.

use super::{Adam, AdamConfig, NetworkParams, PI2};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ADL1";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0} (expected {CHECKPOINT_VERSION})")]
    BadVersion(u8),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
    #[error("unexpected tensor: {0}")]
    Layout(String),
}

fn put_u32(w: &mut impl Write, x: u32) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn write_tensor(w: &mut impl Write, name: &str, dims: &[usize], values: &[f32]) -> std::io::Result<()> {
    put_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    put_u32(w, dims.len() as u32)?;
    for &d in dims {
        put_u32(w, d as u32)?;
    }
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint(w: &mut impl Write, params: &NetworkParams, opt: &Adam) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&[CHECKPOINT_VERSION])?;
    let tensors = params.tensors();
    put_u32(w, tensors.len() as u32)?;
    for (name, dims, values) in &tensors {
        write_tensor(w, name, dims, values)?;
    }
    w.write_all(&opt.step.to_le_bytes())?;
    for x in [opt.config.lr, opt.config.beta1, opt.config.beta2, opt.config.eps] {
        w.write_all(&x.to_le_bytes())?;
    }
    put_u32(w, 2 * tensors.len() as u32)?;
    for (prefix, moments) in [("m", &opt.m), ("v", &opt.v)] {
        let mut offset = 0;
        for (name, dims, values) in &tensors {
            let n = values.len();
            write_tensor(w, &format!("{prefix}.{name}"), dims, &moments[offset..offset + n])?;
            offset += n;
        }
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, params: &NetworkParams, opt: &Adam) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, params, opt)?;
    w.flush()
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N], CheckpointError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => CheckpointError::Truncated(what.to_string()),
            _ => CheckpointError::Io(e),
        })?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn f32(&mut self, what: &str) -> Result<f32, CheckpointError> {
        Ok(f32::from_le_bytes(self.bytes(what)?))
    }

    fn tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f32>), CheckpointError> {
        let len = self.u32("tensor name length")? as usize;
        if len > 256 {
            return Err(CheckpointError::Layout(format!("tensor name of {len} bytes")));
        }
        let mut name = vec![0u8; len];
        self.inner
            .read_exact(&mut name)
            .map_err(|_| CheckpointError::Truncated("tensor name".into()))?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::Layout("non-utf8 tensor name".into()))?;
        let rank = self.u32(&name)? as usize;
        if rank > 4 {
            return Err(CheckpointError::Layout(format!("{name} has rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u32(&name)? as usize);
        }
        let count: usize = dims.iter().product();
        if count > 1 << 26 {
            return Err(CheckpointError::Layout(format!("{name} has {count} values")));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(self.f32(&name)?);
        }
        Ok((name, dims, values))
    }
}

fn expect_tensor(got: (String, Vec<usize>, Vec<f32>), name: &str, dims: &[usize]) -> Result<Vec<f32>, CheckpointError> {
    if got.0 != name || got.1 != dims {
        return Err(CheckpointError::Layout(format!(
            "expected {name} {dims:?}, found {} {:?}",
            got.0, got.1
        )));
    }
    Ok(got.2)
}

pub fn read_checkpoint(r: impl Read) -> Result<(NetworkParams, Adam), CheckpointError> {
    let mut r = Reader { inner: r };
    let magic: [u8; 4] = r.bytes("magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let [version] = r.bytes::<1>("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let count = r.u32("tensor count")? as usize;
    let mut raw = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        raw.push(r.tensor()?);
    }
    let n_actions = raw
        .iter()
        .find(|(name, _, _)| name == "pi2.w")
        .and_then(|(_, dims, _)| dims.first().copied())
        .filter(|&n| n > 0)
        .ok_or_else(|| CheckpointError::Layout("missing pi2.w".into()))?;
    let mut params = NetworkParams::zeros(n_actions);
    debug_assert_eq!(params.shape(PI2).out, n_actions);
    let expected: Vec<(String, Vec<usize>)> =
        params.tensors().into_iter().map(|(n, d, _)| (n, d)).collect();
    if raw.len() != expected.len() {
        return Err(CheckpointError::Layout(format!("{} tensors, expected {}", raw.len(), expected.len())));
    }
    let mut flat = Vec::with_capacity(params.len());
    for (got, (name, dims)) in raw.into_iter().zip(&expected) {
        flat.extend(expect_tensor(got, name, dims)?);
    }
    params.as_mut_slice().copy_from_slice(&flat);

    let step = u64::from_le_bytes(r.bytes("optimizer step")?);
    let config = AdamConfig {
        lr: r.f32("learning rate")?,
        beta1: r.f32("beta1")?,
        beta2: r.f32("beta2")?,
        eps: r.f32("eps")?,
    };
    let count = r.u32("optimizer tensor count")? as usize;
    if count != 2 * expected.len() {
        return Err(CheckpointError::Layout(format!("{count} optimizer tensors, expected {}", 2 * expected.len())));
    }
    let mut opt = Adam::new(params.len(), config);
    opt.step = step;
    for (prefix, target) in [("m", &mut opt.m), ("v", &mut opt.v)] {
        let mut offset = 0;
        for (name, dims) in &expected {
            let values = expect_tensor(r.tensor()?, &format!("{prefix}.{name}"), dims)?;
            target[offset..offset + values.len()].copy_from_slice(&values);
            offset += values.len();
        }
    }
    Ok((params, opt))
}

pub fn load_checkpoint(path: &Path) -> Result<(NetworkParams, Adam), CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

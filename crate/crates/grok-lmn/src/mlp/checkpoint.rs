//! Binary checkpoint format.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "GLMNCKPT"
//! 8       4     version (u32) = 1
//! 12      1     task kind (0 modular-addition, 1 permutation-s4, 2 bitwise-xor)
//! 13      4     modulus (u32)
//! 17      4     digits (u32)
//! 21      8     train_fraction (f64)
//! 29      8     split_seed (u64)
//! 37      16    vocab, d_embed, d_hidden, d_out (u32 each)
//! 53      ...   tensors as f64, in order: embedding, w1, b1, w2, b2, w3, b3
//! ```
//!
//! The file must end exactly after the last tensor.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{Architecture, MlpModel, ParamSet};
use crate::tasks::{TaskKind, TaskSpec};

const MAGIC: &[u8; 8] = b"GLMNCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes; not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("unknown task kind byte {0}")]
    BadTaskKind(u8),
    #[error("checkpoint has trailing bytes after the last tensor")]
    TrailingBytes,
    #[error("non-finite parameter at tensor {tensor} index {index}")]
    NonFinite { tensor: &'static str, index: usize },
}

fn kind_to_byte(kind: TaskKind) -> u8 {
    match kind {
        TaskKind::ModularAddition => 0,
        TaskKind::PermutationS4 => 1,
        TaskKind::BitwiseXor => 2,
    }
}

fn kind_from_byte(b: u8) -> Result<TaskKind, CheckpointError> {
    match b {
        0 => Ok(TaskKind::ModularAddition),
        1 => Ok(TaskKind::PermutationS4),
        2 => Ok(TaskKind::BitwiseXor),
        other => Err(CheckpointError::BadTaskKind(other)),
    }
}

pub fn save_checkpoint(
    model: &MlpModel,
    spec: &TaskSpec,
    path: &Path,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[kind_to_byte(spec.kind)])?;
    w.write_all(&spec.modulus.to_le_bytes())?;
    w.write_all(&spec.digits.to_le_bytes())?;
    w.write_all(&spec.train_fraction.to_le_bytes())?;
    w.write_all(&spec.split_seed.to_le_bytes())?;
    for dim in [model.arch.vocab, model.arch.d_embed, model.arch.d_hidden, model.arch.d_out] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    for (_, tensor, _) in model.params.tensors() {
        for &v in tensor.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpModel, TaskSpec), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let mut kind_byte = [0u8; 1];
    r.read_exact(&mut kind_byte)?;
    let kind = kind_from_byte(kind_byte[0])?;
    let modulus = read_u32(&mut r)?;
    let digits = read_u32(&mut r)?;
    let train_fraction = read_f64(&mut r)?;
    let split_seed = read_u64(&mut r)?;
    let spec = TaskSpec { kind, modulus, digits, train_fraction, split_seed };
    let vocab = read_u32(&mut r)? as usize;
    let d_embed = read_u32(&mut r)? as usize;
    let d_hidden = read_u32(&mut r)? as usize;
    let d_out = read_u32(&mut r)? as usize;
    let arch = Architecture { vocab, d_embed, d_hidden, d_out };
    let mut params = ParamSet::zeros(&arch);
    for (name, tensor, _) in params.tensors_mut() {
        for (index, v) in tensor.iter_mut().enumerate() {
            *v = read_f64(&mut r)?;
            if !v.is_finite() {
                return Err(CheckpointError::NonFinite { tensor: name, index });
            }
        }
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(CheckpointError::TrailingBytes);
    }
    Ok((MlpModel { arch, params }, spec))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, CheckpointError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

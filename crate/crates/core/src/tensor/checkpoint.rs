//! "MFTC" checkpoint format.
//!
//! Layout: magic `MFTC`, version u32, then per parameter (sorted by name for
//! reproducible hashes): `[name_len u32][name utf8][dtype u8][ndim u8]
//! [dims u32 x ndim][raw little-endian values]`.

use std::fs;
use std::path::Path;

use crate::error::{MatError, Result};
use crate::tensor::data::Tensor;
use crate::tensor::param::ParamStore;
use crate::tensor::scalar::{Dtype, Scalar};

const MAGIC: &[u8; 4] = b"MFTC";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_to_vec<S: Scalar>(store: &ParamStore<S>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    // ParamStore iterates in name order already
    for p in store.iter() {
        let name = p.name.as_bytes();
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.push(S::DTYPE as u8);
        let shape = p.tensor.shape();
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.tensor.data() {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn save<S: Scalar>(store: &ParamStore<S>, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, save_to_vec(store))?;
    Ok(())
}

pub fn load_from_slice<S: Scalar>(bytes: &[u8]) -> Result<ParamStore<S>> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(MatError::CheckpointFormat(format!(
                "truncated at byte {} (wanted {} more)",
                pos, n
            )));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(MatError::CheckpointFormat("bad magic".to_string()));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(MatError::CheckpointFormat(format!(
            "unsupported version {version}"
        )));
    }
    let mut store = ParamStore::new();
    while pos < bytes.len() {
        let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(&mut pos, name_len)?)
            .map_err(|e| MatError::CheckpointFormat(format!("bad name utf8: {e}")))?
            .to_string();
        let dtype = Dtype::from_u8(take(&mut pos, 1)?[0])
            .ok_or_else(|| MatError::CheckpointFormat(format!("bad dtype in {name}")))?;
        if dtype != S::DTYPE {
            return Err(MatError::CheckpointFormat(format!(
                "dtype mismatch for {name}: file has {dtype:?}"
            )));
        }
        let ndim = take(&mut pos, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let esz = S::DTYPE.size();
        let raw = take(&mut pos, numel * esz)?;
        let data: Vec<S> = raw.chunks_exact(esz).map(S::read_le).collect();
        store.insert(&name, Tensor::new(shape, data)?);
    }
    Ok(store)
}

pub fn load<S: Scalar>(path: &Path) -> Result<ParamStore<S>> {
    if !path.exists() {
        return Err(MatError::MissingPrerequisite(format!(
            "checkpoint {} not found",
            path.display()
        )));
    }
    load_from_slice(&fs::read(path)?)
}

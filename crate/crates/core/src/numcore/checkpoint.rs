//! Flat binary checkpoint for a [`ParamStore`].
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic      4 bytes  "DLCK"
//! version    u32      1
//! n_slots    u32
//! per slot, in store order:
//!   name_len u32
//!   name     name_len bytes, UTF-8
//!   rank     u32      1..=3
//!   dims     rank x u64
//!   values   prod(dims) x f64
//! ```
//!
//! Only parameter values are stored; gradients and optimizer moments are not.

use std::io::{Read, Write};

use super::{NumError, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &ParamStore, mut w: W) -> Result<(), NumError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for id in params.ids() {
        let name = params.name(id).as_bytes();
        let value = params.value(id);
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(value.rank() as u32).to_le_bytes())?;
        for &d in value.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in value.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NumError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NumError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamStore, NumError> {
    let bad = |m: &str| NumError::Checkpoint(m.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(NumError::Checkpoint(format!("unsupported version {version}")));
    }
    let n_slots = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..n_slots {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("slot name is not UTF-8"))?;
        let rank = read_u32(&mut r)? as usize;
        if rank == 0 || rank > 3 {
            return Err(NumError::Checkpoint(format!("slot {name}: rank {rank}")));
        }
        let dims = (0..rank).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = dims.iter().product();
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        store.insert(&name, Tensor::new(dims, data)?)?;
    }
    Ok(store)
}

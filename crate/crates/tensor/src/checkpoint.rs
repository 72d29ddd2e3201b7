//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "TKGCCKPT"
//! version  u32
//! count    u64
//! per tensor:
//!   name_len u64, name bytes (UTF-8)
//!   rank u64, dims u64 * rank
//!   data f64 * prod(dims)
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::{ParamStore, Result, Tensor, TensorError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TKGCCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u64).to_le_bytes())?;
    for (name, t) in store.iter() {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u64).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

// Guards allocations against corrupt length fields.
const MAX_LEN: u64 = 1 << 40;

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamStore> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != CHECKPOINT_VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u64(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u64(&mut r)?;
        if name_len > MAX_LEN {
            return Err(TensorError::Checkpoint("name length out of range".into()));
        }
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| TensorError::Checkpoint("name is not UTF-8".into()))?;
        let rank = read_u64(&mut r)?;
        if rank > 16 {
            return Err(TensorError::Checkpoint(format!("rank {rank} out of range")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut n: u64 = 1;
        for _ in 0..rank {
            let d = read_u64(&mut r)?;
            n = n.saturating_mul(d);
            shape.push(d as usize);
        }
        if n > MAX_LEN {
            return Err(TensorError::Checkpoint(format!("tensor `{name}` too large")));
        }
        let mut data = Vec::with_capacity(n as usize);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        store.insert(name, Tensor::new(shape, data)?)?;
    }
    Ok(store)
}

/// Writes to a sibling temp file and renames it into place.
pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let f = fs::File::create(&tmp)?;
        write_checkpoint(store, io::BufWriter::new(f))?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let f = fs::File::open(path)?;
    read_checkpoint(io::BufReader::new(f))
}

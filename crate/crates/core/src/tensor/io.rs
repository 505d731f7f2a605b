//! Binary tensor file format.
//!
//! Layout: magic `RTN1`, u32 little-endian ndim, ndim u32 dims, then the raw
//! f32 little-endian payload. Bit-exact across platforms.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::Tensor;

pub const RTN1_MAGIC: &[u8; 4] = b"RTN1";

const MAX_NDIM: u32 = 8;
const MAX_NUMEL: u64 = 1 << 31;

pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> std::io::Result<()> {
    w.write_all(RTN1_MAGIC)?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads one tensor from the stream; `path` is only used for error context.
pub fn read_tensor(r: &mut impl Read, path: &Path) -> Result<Tensor> {
    let bad = |reason: String| Error::BadTensorFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != RTN1_MAGIC {
        return Err(bad(format!("bad magic {magic:?}, expected {RTN1_MAGIC:?}")));
    }
    let ndim = read_u32(r, path)?;
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(bad(format!("unsupported ndim {ndim}")));
    }
    let mut shape = Vec::with_capacity(ndim as usize);
    let mut numel: u64 = 1;
    for _ in 0..ndim {
        let d = read_u32(r, path)?;
        if d == 0 {
            return Err(bad("zero-sized dimension".into()));
        }
        numel = numel.saturating_mul(d as u64);
        shape.push(d as usize);
    }
    if numel > MAX_NUMEL {
        return Err(bad(format!("tensor too large ({numel} elements)")));
    }
    let mut payload = vec![0u8; numel as usize * 4];
    r.read_exact(&mut payload).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            bad("truncated payload".into())
        } else {
            Error::io(path, e)
        }
    })?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor::from_vec(data, &shape))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::BadTensorFile {
                path: path.to_path_buf(),
                reason: "truncated header".into(),
            }
        } else {
            Error::io(path, e)
        }
    })?;
    Ok(u32::from_le_bytes(buf))
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensor(&mut w, t).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let t = read_tensor(&mut r, path)?;
    // A standalone tensor file must be fully consumed.
    let mut rest = [0u8; 1];
    match r.read(&mut rest) {
        Ok(0) => Ok(t),
        Ok(_) => Err(Error::BadTensorFile {
            path: path.to_path_buf(),
            reason: "trailing bytes after payload".into(),
        }),
        Err(e) => Err(Error::io(path, e)),
    }
}

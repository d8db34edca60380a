//! Flat little-endian parameter checkpoint.
//!
//! ```text
//! magic "CELMTNSR" | version u32 | count u32
//! per tensor: name_len u32 | name utf-8 | rank u32 | dims u64 × rank | f64 × product(dims)
//! ```

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::tensor::{ParamStore, Tensor};

pub const MAGIC: &[u8; 8] = b"CELMTNSR";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<'a, W, I>(mut w: W, tensors: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a Tensor)>,
{
    let tensors: Vec<_> = tensors.into_iter().collect();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| TensorError::Checkpoint("tensor name is not utf-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

impl ParamStore {
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        write_checkpoint(w, self.iter())
    }

    /// Restores values; `requires_grad` flags start cleared.
    pub fn load<R: Read>(r: R) -> Result<Self> {
        Ok(read_checkpoint(r)?.into_iter().collect())
    }

    /// Overwrites values of existing entries from `other`, keeping flags.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, t) in other.iter() {
            let dst = self.get_mut(name)?;
            if dst.shape() != t.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "copy_values_from",
                    left: dst.shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            dst.data_mut().copy_from_slice(t.data());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_magic() {
        let err = read_checkpoint(&b"NOTCKPT!\x01\0\0\0\0\0\0\0"[..]).unwrap_err();
        assert_eq!(err, TensorError::Checkpoint("bad magic".into()));
    }

    #[test]
    fn layout_is_bit_exact() {
        let t = Tensor::new(vec![2], vec![1.0, -0.5]).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, [("w", &t)]).unwrap();
        let mut want = Vec::new();
        want.extend_from_slice(b"CELMTNSR");
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&1u32.to_le_bytes());
        want.push(b'w');
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u64.to_le_bytes());
        want.extend_from_slice(&1.0f64.to_le_bytes());
        want.extend_from_slice(&(-0.5f64).to_le_bytes());
        assert_eq!(buf, want);
    }
}

//! Binary layout, all integers little-endian:
//!
//! ```text
//! b"SNCK" | u32 version | u32 entry count
//! per entry: u32 name len | name utf-8 | u32 rank | u64 dims... | f64 payload
//! trailer: sha256 of everything before it (32 bytes)
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{NnError, ParamStore, Tensor};

const MAGIC: &[u8; 4] = b"SNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(store.scalar_count() * 8 + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NnError::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor)>, NnError> {
    if bytes.len() < 12 + 32 {
        return Err(NnError::Checkpoint("file too short".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(NnError::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| NnError::Checkpoint("name is not utf-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = r.take(len.checked_mul(8).ok_or_else(|| NnError::Checkpoint("absurd shape".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        entries.push((name, Tensor::new(&shape, data)?));
    }
    if r.pos != body.len() {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    Ok(entries)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), NnError> {
    std::fs::write(path, encode_checkpoint(store)).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>, NnError> {
    let bytes = std::fs::read(path).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("enc.w", Tensor::new(&[2, 3], vec![0.1, -0.2, 1e-300, f64::MIN_POSITIVE, 3.5, -0.0]).unwrap());
        s.add("enc.b", Tensor::vector(vec![1.0 / 3.0, 2.0]));
        s
    }

    #[test]
    fn bit_exact_round_trip() {
        let s = store();
        let back = decode_checkpoint(&encode_checkpoint(&s)).unwrap();
        let mut fresh = ParamStore::new();
        fresh.add("enc.w", Tensor::zeros(&[2, 3]));
        fresh.add("enc.b", Tensor::zeros(&[2]));
        fresh.assign(&back).unwrap();
        for ((_, a), (_, b)) in s.iter().zip(fresh.iter()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode_checkpoint(&store());
        bytes[20] ^= 1;
        assert!(matches!(decode_checkpoint(&bytes), Err(NnError::Checkpoint(_))));
        assert!(decode_checkpoint(&bytes[..10]).is_err());
    }

    #[test]
    fn shape_mismatch_on_assign() {
        let back = decode_checkpoint(&encode_checkpoint(&store())).unwrap();
        let mut other = ParamStore::new();
        other.add("enc.w", Tensor::zeros(&[3, 2]));
        other.add("enc.b", Tensor::zeros(&[2]));
        let e = other.assign(&back).unwrap_err();
        assert!(e.to_string().contains("enc.w"));
    }
}

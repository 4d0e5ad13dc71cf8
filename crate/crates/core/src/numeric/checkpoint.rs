//! Binary parameter checkpoints.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic        5 bytes   "NSER\x01"
//! kind         4 bytes   manifest tag, e.g. "MODL" or "TCHR"
//! count        u32       number of records
//! record × count:
//!   name_len   u32
//!   name       name_len bytes, UTF-8
//!   rank       u32
//!   dims       rank × u32
//!   offset     u64       byte offset of the tensor inside the payload
//! payload_len  u64       bytes
//! payload      row-major f32 values, records back to back
//! crc32        u32       CRC-32 (IEEE) of the payload bytes
//! ```

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"NSER\x01";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointKind(pub [u8; 4]);

impl CheckpointKind {
    pub const MODEL: CheckpointKind = CheckpointKind(*b"MODL");
    pub const TEACHER: CheckpointKind = CheckpointKind(*b"TCHR");
}

pub fn encode<'a>(
    kind: CheckpointKind,
    records: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
) -> Vec<u8> {
    let records: Vec<_> = records.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&kind.0);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in &records {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 4 * t.len() as u64;
    }
    let mut payload = Vec::with_capacity(offset as usize);
    for (_, t) in &records {
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a checkpoint into its kind and `(name, tensor)` records.
pub fn decode(bytes: &[u8]) -> Result<(CheckpointKind, Vec<(String, Tensor)>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(5)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let kind = CheckpointKind(r.take(4)?.try_into().unwrap());
    let count = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let offset = r.u64()? as usize;
        manifest.push((name, dims, offset));
    }
    let payload_len = r.u64()? as usize;
    let payload = r.take(payload_len)?;
    let crc = r.u32()?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    if crc32fast::hash(payload) != crc {
        return Err(Error::Checkpoint("payload CRC mismatch".into()));
    }
    let mut out = Vec::with_capacity(manifest.len());
    for (name, dims, offset) in manifest {
        let n: usize = dims.iter().product();
        let bytes = payload
            .get(offset..offset + 4 * n)
            .ok_or_else(|| Error::Checkpoint(format!("record `{name}` out of bounds")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::new(dims, data)?));
    }
    Ok((kind, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_exact() {
        let t = Tensor::vector(vec![1.0, -2.0]);
        let bytes = encode(CheckpointKind::MODEL, [("ab", &t)]);
        let mut expect = Vec::new();
        expect.extend_from_slice(b"NSER\x01MODL");
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(b"ab");
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&0u64.to_le_bytes());
        expect.extend_from_slice(&8u64.to_le_bytes());
        let payload = [1.0f32.to_le_bytes(), (-2.0f32).to_le_bytes()].concat();
        expect.extend_from_slice(&payload);
        expect.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn corruption_is_detected() {
        let t = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let mut bytes = encode(CheckpointKind::TEACHER, [("x", &t)]);
        let n = bytes.len();
        bytes[n - 6] ^= 1;
        assert!(decode(&bytes).is_err());
        assert!(decode(b"NOPE").is_err());
        assert!(decode(&encode(CheckpointKind::MODEL, [("x", &t)])[..20]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(shapes in proptest::collection::vec(proptest::collection::vec(1usize..4, 0..3), 0..4),
                     seed in any::<u32>()) {
            let tensors: Vec<(String, Tensor)> = shapes
                .into_iter()
                .enumerate()
                .map(|(i, s)| {
                    let n: usize = s.iter().product();
                    let data = (0..n).map(|k| (k as f32 + seed as f32) * 0.25 - 3.0).collect();
                    (format!("p{i}"), Tensor::new(s, data).unwrap())
                })
                .collect();
            let bytes = encode(CheckpointKind::MODEL, tensors.iter().map(|(n, t)| (n.as_str(), t)));
            let (kind, back) = decode(&bytes).unwrap();
            prop_assert_eq!(kind, CheckpointKind::MODEL);
            prop_assert_eq!(back, tensors);
        }
    }
}

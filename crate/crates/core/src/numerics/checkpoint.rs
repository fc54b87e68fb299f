//! Binary named-tensor container.
//!
//! Layout (all integers little-endian `u32` unless noted):
//!
//! ```text
//! magic "DVCKPT\0\0" | version | precision tag (u8: 4 = fp32, 8 = fp64)
//! meta count    | { key, value }*            strings are u32 length + UTF-8
//! array count   | { name, len, u32 values }*
//! tensor count  | { name, rows, cols, trainable (u8), values }*
//! ```
//!
//! Meta and arrays are written in key order and tensors in store order, so the
//! encoding is byte-stable for identical inputs.

use std::collections::BTreeMap;
use std::path::Path;

use super::{ParamStore, Precision, Real};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"DVCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub meta: BTreeMap<String, String>,
    pub arrays: BTreeMap<String, Vec<u32>>,
    pub store: ParamStore<T>,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(store: ParamStore<T>) -> Self {
        Self {
            meta: BTreeMap::new(),
            arrays: BTreeMap::new(),
            store,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.store.num_values() * T::BYTES);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        out.push(T::PRECISION.tag());
        put_u32(&mut out, self.meta.len() as u32);
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.arrays.len() as u32);
        for (k, v) in &self.arrays {
            put_str(&mut out, k);
            put_u32(&mut out, v.len() as u32);
            for &x in v {
                put_u32(&mut out, x);
            }
        }
        put_u32(&mut out, self.store.len() as u32);
        for t in self.store.iter() {
            put_str(&mut out, t.name());
            put_u32(&mut out, t.rows() as u32);
            put_u32(&mut out, t.cols() as u32);
            out.push(u8::from(t.trainable));
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    /// Decodes a checkpoint of either precision, converting values to `T`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported version {version}"),
            ));
        }
        let precision = Precision::from_tag(r.take(1)?[0])
            .ok_or_else(|| Error::format("checkpoint", "unknown precision tag"))?;
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            meta.insert(k, v);
        }
        let mut arrays = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let n = r.u32()? as usize;
            let v = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            arrays.insert(k, v);
        }
        let store = match precision {
            Precision::Fp32 => read_store::<f32>(&mut r)?.cast::<T>(),
            Precision::Fp64 => read_store::<f64>(&mut r)?.cast::<T>(),
        };
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Self { meta, arrays, store })
    }

    /// Storage precision of an encoded checkpoint, without decoding it.
    pub fn stored_precision(bytes: &[u8]) -> Result<Precision> {
        if bytes.len() < 13 || &bytes[..8] != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        Precision::from_tag(bytes[12]).ok_or_else(|| Error::format("checkpoint", "unknown precision tag"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format("checkpoint", format!("missing or invalid meta `{key}`")))
    }
}

fn read_store<U: Real>(r: &mut Reader<'_>) -> Result<ParamStore<U>> {
    let mut store = ParamStore::<U>::new();
    for _ in 0..r.u32()? {
        let name = r.string()?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let trainable = r.take(1)?[0] != 0;
        let raw = r.take(rows * cols * U::BYTES)?;
        let data = raw.chunks_exact(U::BYTES).map(U::read_le).collect();
        let idx = store
            .insert(&name, rows, cols, data)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        store.tensor_mut(idx).trainable = trainable;
    }
    Ok(store)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::format("checkpoint", "invalid utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint<f32> {
        let mut store = ParamStore::<f32>::new();
        store.insert("H", 2, 2, vec![1.0, 2.0, 3.0, 4.5]).unwrap();
        store.insert("b", 3, 1, vec![-1.0, 0.0, 0.25]).unwrap();
        store.get_mut("b").unwrap().trainable = false;
        let mut ck = Checkpoint::new(store);
        ck.meta.insert("kind".into(), "rnn".into());
        ck.arrays.insert("class_of".into(), vec![0, 1, 1]);
        ck
    }

    #[test]
    fn encoding_is_byte_stable_and_round_trips() {
        let a = sample().to_bytes();
        assert_eq!(a, sample().to_bytes());
        let back = Checkpoint::<f32>::from_bytes(&a).unwrap();
        assert_eq!(back, sample());
        assert_eq!(back.to_bytes(), a);
    }

    #[test]
    fn precision_is_converted_on_load() {
        let bytes = sample().to_bytes();
        let wide = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(wide.store.get("H").unwrap().data(), &[1.0, 2.0, 3.0, 4.5]);
        assert!(!wide.store.get("b").unwrap().trainable);
        assert_eq!(Checkpoint::<f64>::stored_precision(&bytes).unwrap(), Precision::Fp32);
        assert_eq!(Checkpoint::<f32>::stored_precision(&wide.to_bytes()).unwrap(), Precision::Fp64);
    }

    #[test]
    fn truncated_and_corrupt_inputs_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::<f32>::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::<f32>::from_bytes(&extra).is_err());
    }
}

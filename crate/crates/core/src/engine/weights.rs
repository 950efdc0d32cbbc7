//! `DBW1` weight container.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic    b"DBW1"
//! count    u32
//! record*  count times, sorted by name:
//!   name_len u16, name (utf-8, "<node_id>/<param>")
//!   dtype    u8   (1 = f32)
//!   rank     u8
//!   dims     rank x u32
//!   data     product(dims) x f32
//! crc32    u32  (IEEE, over every preceding byte)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::graph::GraphSpec;
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"DBW1";
const DTYPE_F32: u8 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

fn key(node: &str, param: &str) -> String {
    format!("{node}/{param}")
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: &str, param: &str, tensor: Tensor) {
        self.tensors.insert(key(node, param), tensor);
    }

    pub fn get(&self, node: &str, param: &str) -> Option<&Tensor> {
        self.tensors.get(&key(node, param))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// All-zero weights for every parameter the graph needs.
    pub fn zeros_for(graph: &GraphSpec) -> Self {
        let mut store = Self::new();
        for spec in graph.parameter_specs() {
            let t = Tensor::zeros(spec.shape).expect("inferred shapes are non-empty");
            store.insert(&spec.node, spec.name, t);
        }
        store
    }

    /// Seeded uniform initialization scaled by `sqrt(3 / fan_in)`; biases
    /// draw from `[-0.05, 0.05)`.
    pub fn random_for(graph: &GraphSpec, seed: u64) -> Self {
        let mut rng = SeedStream::new(seed);
        let mut store = Self::new();
        for spec in graph.parameter_specs() {
            let bound = if spec.name.ends_with("bias") {
                0.05
            } else {
                (3.0 / spec.fan_in.max(1) as f64).sqrt()
            };
            let t = Tensor::from_fn(spec.shape, |_| rng.uniform_f64(-bound, bound) as f32)
                .expect("inferred shapes are non-empty");
            store.insert(&spec.node, spec.name, t);
        }
        store
    }

    /// Checks that the store holds exactly the graph's parameters with the
    /// expected shapes. Errors name the offending node.
    pub fn validate_for(&self, graph: &GraphSpec) -> Result<()> {
        let specs = graph.parameter_specs();
        for spec in &specs {
            match self.get(&spec.node, spec.name) {
                None => return Err(Error::graph(&spec.node, format!("missing weight `{}`", spec.name))),
                Some(t) if t.shape() != spec.shape.as_slice() => {
                    return Err(Error::graph(
                        &spec.node,
                        format!(
                            "weight `{}` has shape {:?}, expected {:?}",
                            spec.name,
                            t.shape(),
                            spec.shape
                        ),
                    ))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = self
            .tensors
            .keys()
            .find(|k| !specs.iter().any(|s| key(&s.node, s.name) == **k))
        {
            let node = extra.split('/').next().unwrap_or(extra);
            return Err(Error::graph(node, format!("unexpected weight `{extra}`")));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F32);
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Weights(m);
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("not a DBW1 file (bad magic or truncated)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(bad(format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}")));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| bad("record name is not utf-8".into()))?
                .to_owned();
            let dtype = r.u8()?;
            if dtype != DTYPE_F32 {
                return Err(bad(format!("record `{name}` has unsupported dtype {dtype}")));
            }
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| bad(format!("record `{name}` size overflows")))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| bad("record too large".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| bad(format!("record `{name}`: {e}")))?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(bad(format!("duplicate record `{name}`")));
            }
        }
        if r.pos != body.len() {
            return Err(bad(format!("{} trailing bytes after last record", body.len() - r.pos)));
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Weights(m) => Error::Weights(format!("{}: {m}", path.display())),
            other => other,
        })
    }
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
            .ok_or_else(|| Error::Weights("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

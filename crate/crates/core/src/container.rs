//! Single-file model container.
//!
//! Layout:
//!
//! ```text
//! magic        4 bytes   "GSBQ"
//! header_len   u32 LE
//! header       header_len bytes of UTF-8 JSON:
//!              { "format_version", "kind", "meta": {...}, "segments": [...] }
//! payload      concatenated little-endian segments
//! ```
//!
//! Segments are `f32` arrays, `u32` arrays, or tree-node arrays stored as
//! 16-byte records `(feature: u32, threshold: f32, left: u32, right: u32)`.
//! Every segment entry in the header records its name, type, byte offset
//! into the payload and element count. Scalars and configuration live in
//! `meta` as JSON.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gbrt::{Node, Tree, TreeEnsemble};
use crate::selection::RftSelection;
use crate::transforms::{PcaBasis, SaabKernelSet};

pub const MAGIC: &[u8; 4] = b"GSBQ";
pub const FORMAT_VERSION: u32 = 1;
const NODE_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentType {
    F32,
    U32,
    Node,
}

impl SegmentType {
    fn width(self) -> usize {
        match self {
            SegmentType::F32 | SegmentType::U32 => 4,
            SegmentType::Node => NODE_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: SegmentType,
    pub offset: u64,
    pub count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    meta: BTreeMap<String, Value>,
    segments: Vec<SegmentEntry>,
}

pub struct ModelWriter {
    header: Header,
    payload: Vec<u8>,
}

impl ModelWriter {
    pub fn new(kind: &str) -> Self {
        Self {
            header: Header {
                format_version: FORMAT_VERSION,
                kind: kind.to_string(),
                meta: BTreeMap::new(),
                segments: Vec::new(),
            },
            payload: Vec::new(),
        }
    }

    pub fn meta<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        self.header.meta.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    fn begin(&mut self, name: &str, ty: SegmentType, count: usize) {
        self.header.segments.push(SegmentEntry {
            name: name.to_string(),
            ty,
            offset: self.payload.len() as u64,
            count: count as u64,
        });
    }

    pub fn put_f32(&mut self, name: &str, values: &[f64]) {
        self.begin(name, SegmentType::F32, values.len());
        for &v in values {
            self.payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }

    pub fn put_u32(&mut self, name: &str, values: &[u32]) {
        self.begin(name, SegmentType::U32, values.len());
        for &v in values {
            self.payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn put_nodes(&mut self, name: &str, nodes: &[Node]) {
        self.begin(name, SegmentType::Node, nodes.len());
        for n in nodes {
            self.payload.extend_from_slice(&n.feature.to_le_bytes());
            self.payload.extend_from_slice(&n.threshold.to_le_bytes());
            self.payload.extend_from_slice(&n.left.to_le_bytes());
            self.payload.extend_from_slice(&n.right.to_le_bytes());
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(8 + header.len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}

pub struct ModelReader {
    header: Header,
    index: BTreeMap<String, SegmentEntry>,
    payload: Vec<u8>,
}

impl ModelReader {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing GSBQ magic".into()));
        }
        let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let header_bytes = bytes
            .get(8..8 + len)
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        let header: Header = serde_json::from_slice(header_bytes)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let payload = bytes[8 + len..].to_vec();
        let mut index = BTreeMap::new();
        for s in &header.segments {
            let end = s.offset as usize + s.count as usize * s.ty.width();
            if end > payload.len() {
                return Err(Error::Format(format!("segment {} overruns payload", s.name)));
            }
            index.insert(s.name.clone(), s.clone());
        }
        Ok(Self {
            header,
            index,
            payload,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn kind(&self) -> &str {
        &self.header.kind
    }

    pub fn segments(&self) -> &[SegmentEntry] {
        &self.header.segments
    }

    pub fn meta<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .header
            .meta
            .get(key)
            .ok_or_else(|| Error::Format(format!("missing header field {key}")))?;
        Ok(T::deserialize(v)?)
    }

    pub fn has_meta(&self, key: &str) -> bool {
        self.header.meta.contains_key(key)
    }

    fn segment(&self, name: &str, ty: SegmentType) -> Result<&[u8]> {
        let s = self
            .index
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing segment {name}")))?;
        if s.ty != ty {
            return Err(Error::Format(format!("segment {name} has type {:?}", s.ty)));
        }
        let start = s.offset as usize;
        Ok(&self.payload[start..start + s.count as usize * ty.width()])
    }

    pub fn f32s(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self
            .segment(name, SegmentType::F32)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect())
    }

    pub fn u32s(&self, name: &str) -> Result<Vec<u32>> {
        Ok(self
            .segment(name, SegmentType::U32)?
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    pub fn nodes(&self, name: &str) -> Result<Vec<Node>> {
        Ok(self
            .segment(name, SegmentType::Node)?
            .chunks_exact(NODE_BYTES)
            .map(|b| Node {
                feature: u32::from_le_bytes(b[0..4].try_into().unwrap()),
                threshold: f32::from_le_bytes(b[4..8].try_into().unwrap()),
                left: u32::from_le_bytes(b[8..12].try_into().unwrap()),
                right: u32::from_le_bytes(b[12..16].try_into().unwrap()),
            })
            .collect())
    }
}

/// Components that serialise themselves under a name prefix.
pub trait Persist: Sized {
    fn store(&self, w: &mut ModelWriter, prefix: &str) -> Result<()>;
    fn load(r: &ModelReader, prefix: &str) -> Result<Self>;
}

impl Persist for SaabKernelSet {
    fn store(&self, w: &mut ModelWriter, prefix: &str) -> Result<()> {
        w.meta(&format!("{prefix}.patch_shape"), &self.patch_shape)?;
        w.put_f32(&format!("{prefix}.dc"), &self.dc_kernel);
        w.put_f32(&format!("{prefix}.ac"), &self.ac_kernels);
        w.put_f32(&format!("{prefix}.energies"), &self.energies);
        Ok(())
    }

    fn load(r: &ModelReader, prefix: &str) -> Result<Self> {
        let k = SaabKernelSet {
            patch_shape: r.meta(&format!("{prefix}.patch_shape"))?,
            dc_kernel: r.f32s(&format!("{prefix}.dc"))?,
            ac_kernels: r.f32s(&format!("{prefix}.ac"))?,
            energies: r.f32s(&format!("{prefix}.energies"))?,
        };
        let d: usize = k.patch_shape.iter().product();
        if k.dc_kernel.len() != d || k.ac_kernels.len() != d * (d - 1) || k.energies.len() != d - 1 {
            return Err(Error::Format(format!("{prefix}: Saab kernel sizes disagree")));
        }
        Ok(k)
    }
}

impl Persist for PcaBasis {
    fn store(&self, w: &mut ModelWriter, prefix: &str) -> Result<()> {
        w.meta(&format!("{prefix}.dim"), &self.dim)?;
        w.put_f32(&format!("{prefix}.mean"), &self.mean);
        w.put_f32(&format!("{prefix}.components"), &self.components);
        w.put_f32(&format!("{prefix}.variances"), &self.variances);
        Ok(())
    }

    fn load(r: &ModelReader, prefix: &str) -> Result<Self> {
        let b = PcaBasis {
            dim: r.meta(&format!("{prefix}.dim"))?,
            mean: r.f32s(&format!("{prefix}.mean"))?,
            components: r.f32s(&format!("{prefix}.components"))?,
            variances: r.f32s(&format!("{prefix}.variances"))?,
        };
        if b.mean.len() != b.dim || b.components.len() != b.dim * b.variances.len() {
            return Err(Error::Format(format!("{prefix}: PCA sizes disagree")));
        }
        Ok(b)
    }
}

impl Persist for RftSelection {
    fn store(&self, w: &mut ModelWriter, prefix: &str) -> Result<()> {
        w.meta(&format!("{prefix}.kept"), &self.kept)?;
        let idx: Vec<u32> = self.ranked_indices.iter().map(|&i| i as u32).collect();
        w.put_u32(&format!("{prefix}.indices"), &idx);
        w.put_f32(&format!("{prefix}.losses"), &self.losses);
        Ok(())
    }

    fn load(r: &ModelReader, prefix: &str) -> Result<Self> {
        let sel = RftSelection {
            ranked_indices: r
                .u32s(&format!("{prefix}.indices"))?
                .into_iter()
                .map(|i| i as usize)
                .collect(),
            losses: r.f32s(&format!("{prefix}.losses"))?,
            kept: r.meta(&format!("{prefix}.kept"))?,
        };
        if sel.kept > sel.ranked_indices.len() || sel.losses.len() != sel.ranked_indices.len() {
            return Err(Error::Format(format!("{prefix}: selection sizes disagree")));
        }
        Ok(sel)
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleMeta {
    base_score: f64,
    shrinkage: f64,
    max_depth: usize,
    n_features: usize,
    tree_sizes: Vec<u32>,
}

impl Persist for TreeEnsemble {
    fn store(&self, w: &mut ModelWriter, prefix: &str) -> Result<()> {
        w.meta(
            prefix,
            &EnsembleMeta {
                base_score: self.base_score,
                shrinkage: self.shrinkage,
                max_depth: self.max_depth,
                n_features: self.n_features,
                tree_sizes: self.trees.iter().map(|t| t.nodes.len() as u32).collect(),
            },
        )?;
        let nodes: Vec<Node> = self.trees.iter().flat_map(|t| t.nodes.iter().copied()).collect();
        w.put_nodes(&format!("{prefix}.nodes"), &nodes);
        Ok(())
    }

    fn load(r: &ModelReader, prefix: &str) -> Result<Self> {
        let meta: EnsembleMeta = r.meta(prefix)?;
        let nodes = r.nodes(&format!("{prefix}.nodes"))?;
        let total: usize = meta.tree_sizes.iter().map(|&s| s as usize).sum();
        if total != nodes.len() {
            return Err(Error::Format(format!("{prefix}: tree sizes disagree with node count")));
        }
        let mut trees = Vec::with_capacity(meta.tree_sizes.len());
        let mut at = 0;
        for &size in &meta.tree_sizes {
            let t = Tree {
                nodes: nodes[at..at + size as usize].to_vec(),
            };
            for n in &t.nodes {
                let bad_child = !n.is_leaf() && (n.left as usize >= t.nodes.len() || n.right as usize >= t.nodes.len());
                if bad_child || (!n.is_leaf() && n.feature as usize >= meta.n_features) {
                    return Err(Error::Format(format!("{prefix}: corrupt tree node")));
                }
            }
            at += size as usize;
            trees.push(t);
        }
        Ok(TreeEnsemble {
            base_score: meta.base_score,
            shrinkage: meta.shrinkage,
            max_depth: meta.max_depth,
            n_features: meta.n_features,
            trees,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbrt::{gbrt_fit, gbrt_predict, GbrtParams};
    use crate::matrix::Matrix;

    #[test]
    fn ensemble_round_trip_is_bit_exact() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64).sin(), (i * i % 13) as f64 / 3.0]).collect();
        let y: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).cos() * 2.0 + 0.1).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = gbrt_fit(&x, &y, &GbrtParams { rounds: 30, min_samples_leaf: 2.0, ..Default::default() }).unwrap();
        let mut w = ModelWriter::new("test");
        m.store(&mut w, "ens").unwrap();
        let bytes = w.to_bytes().unwrap();
        let r = ModelReader::from_bytes(&bytes).unwrap();
        let back = TreeEnsemble::load(&r, "ens").unwrap();
        assert_eq!(back, m);
        let a = gbrt_predict(&m, &x).unwrap();
        let b = gbrt_predict(&back, &x).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
        let mut w2 = ModelWriter::new("test");
        back.store(&mut w2, "ens").unwrap();
        assert_eq!(w2.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(ModelReader::from_bytes(b"nope"), Err(Error::Format(_))));
        let mut bytes = ModelWriter::new("x").to_bytes().unwrap();
        bytes[8] = b'!';
        assert!(ModelReader::from_bytes(&bytes).is_err());
    }

    #[test]
    fn segment_types_are_checked() {
        let mut w = ModelWriter::new("x");
        w.put_u32("a", &[1, 2, 3]);
        let r = ModelReader::from_bytes(&w.to_bytes().unwrap()).unwrap();
        assert_eq!(r.u32s("a").unwrap(), vec![1, 2, 3]);
        assert!(r.f32s("a").is_err());
        assert!(r.u32s("b").is_err());
    }
}

//! Binary weight container.
//!
//! Layout: the 4 magic bytes `NFWC`, a `u32` format version, a `u32` header
//! length, the JSON header `{config, tensors: [{name, shape, offset}]}` and
//! then the f32 payload. Every integer and float is little endian; tensor
//! offsets are byte offsets into the payload.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::rng::SeededRng;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"NFWC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightContainer {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor>,
    /// Free-form string annotations stored in the header.
    pub metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

/// Tensor names and shapes the model expects, in container order.
/// Matrices are stored input-major: `[d_in, d_out]`, row-major.
pub fn expected_layout(c: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (v, d, f) = (c.vocab_size, c.d_model, c.d_ff);
    let mut out = vec![("tok_embeddings".to_string(), vec![v, d])];
    for i in 0..c.n_layers {
        let p = format!("layers.{i}.");
        out.push((format!("{p}attn_norm"), vec![d]));
        out.push((format!("{p}wq"), vec![d, d]));
        out.push((format!("{p}wk"), vec![d, d]));
        out.push((format!("{p}wv"), vec![d, d]));
        out.push((format!("{p}wo"), vec![d, d]));
        out.push((format!("{p}ffn_norm"), vec![d]));
        out.push((format!("{p}w1"), vec![d, f]));
        out.push((format!("{p}w3"), vec![d, f]));
        out.push((format!("{p}w2"), vec![f, d]));
    }
    out.push(("final_norm".to_string(), vec![d]));
    out.push(("output".to_string(), vec![d, v]));
    out
}

/// Seeded scaled-normal initialisation.
///
/// Tensors are filled in layout order, row-major, from one [`SeededRng`]
/// stream. Norm gains are 1, embeddings are N(0, 1) and every matrix is
/// N(0, 1/d_in).
pub fn init_random(config: &ModelConfig, seed: u64) -> Result<WeightContainer> {
    config.validate()?;
    let mut rng = SeededRng::new(seed);
    let tensors = expected_layout(config)
        .into_iter()
        .map(|(name, shape)| {
            let n: usize = shape.iter().product();
            let data = if name.ends_with("norm") {
                vec![1.0f32; n]
            } else {
                let std = if name == "tok_embeddings" {
                    1.0
                } else {
                    1.0 / (shape[0] as f64).sqrt()
                };
                (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng.inner_mut());
                        (z * std) as f32
                    })
                    .collect()
            };
            Tensor { name, shape, data }
        })
        .collect();
    Ok(WeightContainer {
        config: config.clone(),
        tensors,
        metadata: BTreeMap::new(),
    })
}

impl WeightContainer {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    /// Checks tensor names and shapes against the config.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let layout = expected_layout(&self.config);
        if layout.len() != self.tensors.len() {
            return Err(Error::Container(format!(
                "expected {} tensors, found {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&self.tensors) {
            if &t.name != name || &t.shape != shape {
                return Err(Error::Container(format!(
                    "tensor `{}` {:?} where `{name}` {shape:?} was expected",
                    t.name, t.shape
                )));
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Container(format!("tensor `{name}` has wrong element count")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let entries = self
            .tensors
            .iter()
            .map(|t| {
                let e = TensorEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    offset,
                };
                offset += t.data.len() * 4;
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            tensors: entries,
            metadata: self.metadata.clone(),
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Container(m.to_owned());
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("not a weight container (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let header_end = 12usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("header runs past end of file"))?;
        let header: Header = serde_json::from_slice(&bytes[12..header_end])
            .map_err(|e| Error::Container(format!("header: {e}")))?;
        let payload = &bytes[header_end..];

        let mut spans: Vec<(usize, usize)> = Vec::new();
        let mut tensors = Vec::new();
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let end = e.offset + n * 4;
            if e.offset % 4 != 0 || end > payload.len() {
                return Err(Error::Container(format!(
                    "tensor `{}` lies outside the payload",
                    e.name
                )));
            }
            spans.push((e.offset, end));
            let data = payload[e.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push(Tensor {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        spans.sort();
        if spans.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err(bad("tensor byte ranges overlap"));
        }
        let used: usize = spans.iter().map(|(a, b)| b - a).sum();
        if used != payload.len() {
            return Err(Error::Container(format!(
                "payload is {} bytes but the header accounts for {used}",
                payload.len()
            )));
        }
        let c = WeightContainer {
            config: header.config,
            tensors,
            metadata: header.metadata,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

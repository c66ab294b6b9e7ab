//! Portable weight container.
//!
//! Byte layout (all integers little-endian `u32`, all floats little-endian
//! `f64`):
//!
//! ```text
//! magic    4 bytes  "VPTW"
//! version  u32      (1)
//! config   7 x u32  frames, joints, blocks, dim, heads, ffn_ratio, knn_k
//! count    u32      number of tensor records
//! records  count x:
//!   name_len  u32
//!   name      name_len bytes, UTF-8
//!   ndims     u32
//!   dims      ndims x u32
//!   data      (product of dims) x f64
//! ```
//!
//! Records appear in the canonical order of
//! [`ModelWeights::named_tensors`](crate::model::ModelWeights::named_tensors),
//! but readers accept any order. Cross-attention recovery tensors live under
//! the reserved `tra.` prefix; their presence marks a file with recovery
//! parameters.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::Matrix;
use crate::model::{AttentionWeights, BlockWeights, ModelConfig, ModelWeights, NormWeights};
use crate::recover::TraWeights;

const MAGIC: &[u8; 4] = b"VPTW";
const VERSION: u32 = 1;

pub fn save_weights(path: &Path, w: &ModelWeights) -> Result<()> {
    let tensors = w.named_tensors();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    for field in [
        w.config.frames,
        w.config.joints,
        w.config.blocks,
        w.config.dim,
        w.config.heads,
        w.config.ffn_ratio,
        w.config.knn_k,
    ] {
        bytes.extend_from_slice(&(field as u32).to_le_bytes());
    }
    bytes.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, dims, data) in tensors {
        bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
        bytes.extend_from_slice(name.as_bytes());
        bytes.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            bytes.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn err(&self, detail: String) -> Error {
        Error::Parse {
            location: format!("{}: byte {}", self.path, self.pos),
            detail,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!(
                "expected {n} more bytes, {} remain",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

type TensorMap = HashMap<String, (Vec<usize>, Vec<f64>)>;

fn take_matrix(map: &mut TensorMap, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
    let (dims, data) = map
        .remove(name)
        .ok_or_else(|| Error::Parse {
            location: "tensor table".into(),
            detail: format!("missing tensor '{name}'"),
        })?;
    if dims != [rows, cols] {
        return Err(Error::Parse {
            location: "tensor table".into(),
            detail: format!("tensor '{name}' has dims {dims:?}, expected [{rows}, {cols}]"),
        });
    }
    Matrix::from_vec(rows, cols, data)
}

fn take_vector(map: &mut TensorMap, name: &str, len: usize) -> Result<Vec<f64>> {
    let (dims, data) = map
        .remove(name)
        .ok_or_else(|| Error::Parse {
            location: "tensor table".into(),
            detail: format!("missing tensor '{name}'"),
        })?;
    if dims != [len] {
        return Err(Error::Parse {
            location: "tensor table".into(),
            detail: format!("tensor '{name}' has dims {dims:?}, expected [{len}]"),
        });
    }
    Ok(data)
}

fn take_attention(map: &mut TensorMap, prefix: &str, dim: usize) -> Result<AttentionWeights> {
    Ok(AttentionWeights {
        wq: take_matrix(map, &format!("{prefix}.wq"), dim, dim)?,
        wk: take_matrix(map, &format!("{prefix}.wk"), dim, dim)?,
        wv: take_matrix(map, &format!("{prefix}.wv"), dim, dim)?,
        wo: take_matrix(map, &format!("{prefix}.wo"), dim, dim)?,
        bq: take_vector(map, &format!("{prefix}.bq"), dim)?,
        bk: take_vector(map, &format!("{prefix}.bk"), dim)?,
        bv: take_vector(map, &format!("{prefix}.bv"), dim)?,
        bo: take_vector(map, &format!("{prefix}.bo"), dim)?,
    })
}

pub fn load_weights(path: &Path) -> Result<ModelWeights> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path: path.display().to_string(),
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Parse {
            location: format!("{}: byte 0", path.display()),
            detail: "bad magic (expected VPTW)".into(),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let config = ModelConfig {
        frames: r.u32()? as usize,
        joints: r.u32()? as usize,
        blocks: r.u32()? as usize,
        dim: r.u32()? as usize,
        heads: r.u32()? as usize,
        ffn_ratio: r.u32()? as usize,
        knn_k: r.u32()? as usize,
    };
    config.validate()?;
    let count = r.u32()? as usize;
    let mut map: TensorMap = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| r.err("tensor name is not UTF-8".into()))?;
        let ndims = r.u32()? as usize;
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            dims.push(r.u32()? as usize);
        }
        let len: usize = dims.iter().product();
        let data = r.f64s(len)?;
        if map.insert(name.clone(), (dims, data)).is_some() {
            return Err(r.err(format!("duplicate tensor '{name}'")));
        }
    }
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let c = config.dim;
    let hidden = config.ffn_ratio * c;
    let has_tra = map.keys().any(|k| k.starts_with("tra."));
    let mut blocks = Vec::with_capacity(config.blocks);
    for i in 0..config.blocks {
        blocks.push(BlockWeights {
            spatial_norm: NormWeights {
                gain: take_vector(&mut map, &format!("block{i}.norm1.gain"), c)?,
                bias: take_vector(&mut map, &format!("block{i}.norm1.bias"), c)?,
            },
            spatial_attn: take_attention(&mut map, &format!("block{i}.spatial_attn"), c)?,
            temporal_norm: NormWeights {
                gain: take_vector(&mut map, &format!("block{i}.norm2.gain"), c)?,
                bias: take_vector(&mut map, &format!("block{i}.norm2.bias"), c)?,
            },
            temporal_attn: take_attention(&mut map, &format!("block{i}.temporal_attn"), c)?,
            ffn_norm: NormWeights {
                gain: take_vector(&mut map, &format!("block{i}.norm3.gain"), c)?,
                bias: take_vector(&mut map, &format!("block{i}.norm3.bias"), c)?,
            },
            ffn_w1: take_matrix(&mut map, &format!("block{i}.ffn.w1"), c, hidden)?,
            ffn_b1: take_vector(&mut map, &format!("block{i}.ffn.b1"), hidden)?,
            ffn_w2: take_matrix(&mut map, &format!("block{i}.ffn.w2"), hidden, c)?,
            ffn_b2: take_vector(&mut map, &format!("block{i}.ffn.b2"), c)?,
        });
    }
    let weights = ModelWeights {
        embed_weight: take_matrix(&mut map, "embed.weight", 2, c)?,
        embed_bias: take_vector(&mut map, "embed.bias", c)?,
        spatial_pos: take_matrix(&mut map, "pos.spatial", config.joints, c)?,
        temporal_pos: take_matrix(&mut map, "pos.temporal", config.frames, c)?,
        blocks,
        head_weight: take_matrix(&mut map, "head.weight", c, 3)?,
        head_bias: take_vector(&mut map, "head.bias", 3)?,
        tra: if has_tra {
            Some(TraWeights {
                queries: take_matrix(&mut map, "tra.queries", config.frames, c)?,
                attn: take_attention(&mut map, "tra.attn", c)?,
            })
        } else {
            None
        },
        config,
    };
    if let Some(name) = map.keys().next() {
        return Err(Error::Parse {
            location: "tensor table".into(),
            detail: format!("unexpected tensor '{name}'"),
        });
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_weights;
    use crate::rng::Rng;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("vpt-w-{}-{name}", std::process::id()));
        p
    }

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            frames: 5,
            joints: 2,
            blocks: 2,
            dim: 4,
            heads: 2,
            ffn_ratio: 2,
            knn_k: 2,
        }
    }

    #[test]
    fn round_trip_bitwise_with_and_without_tra() {
        for with_tra in [false, true] {
            let cfg = tiny_cfg();
            let mut rng = Rng::new(9);
            let w = init_weights(&cfg, &mut rng, with_tra).unwrap();
            let path = tmp(if with_tra { "tra.vptw" } else { "plain.vptw" });
            save_weights(&path, &w).unwrap();
            let back = load_weights(&path).unwrap();
            assert_eq!(back, w);
            fs::remove_file(&path).ok();
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let path = tmp("magic.vptw");
        fs::write(&path, b"NOPE....").unwrap();
        assert!(matches!(load_weights(&path), Err(Error::Parse { .. })));
        fs::remove_file(&path).ok();
    }

    #[test]
    fn truncation_reports_offset() {
        let cfg = tiny_cfg();
        let mut rng = Rng::new(2);
        let w = init_weights(&cfg, &mut rng, false).unwrap();
        let path = tmp("trunc.vptw");
        save_weights(&path, &w).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, bytes).unwrap();
        match load_weights(&path) {
            Err(Error::Parse { location, .. }) => assert!(location.contains("byte")),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::remove_file(&path).ok();
    }
}

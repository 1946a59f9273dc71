//! Model file format: magic, `u32` version, `u32` header length, JSON header,
//! little-endian `f32` tensors in header order, then a CRC32 of everything before it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, TcnModel};
use crate::cbp::{CompactBilinear, SketchParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BSEPTCN\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: Architecture,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    len: usize,
}

fn tensor_list(model: &TcnModel<f32>) -> Vec<(String, Vec<f32>)> {
    let mut out: Vec<(String, Vec<f32>)> = model
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    for (i, b) in model.buffers().into_iter().enumerate() {
        let kind = if i % 2 == 0 { "running_mean" } else { "running_var" };
        out.push((format!("bn{}.{kind}", i / 2), b.clone()));
    }
    let (pu, pw) = model.sketch_params();
    for (tag, p) in [("sketch_b0", pu), ("sketch_b1", pw)] {
        out.push((format!("{tag}.hash"), p.hash.iter().map(|&h| h as f32).collect()));
        out.push((format!("{tag}.sign"), p.sign.iter().map(|&s| s as f32).collect()));
    }
    out
}

pub fn model_to_bytes(model: &TcnModel<f32>) -> Result<Vec<u8>> {
    let tensors = tensor_list(model);
    let header = Header {
        architecture: model.arch.clone(),
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                len: t.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &tensors {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TcnModel<f32>> {
    let bad = |m: &str| Error::ModelFormat(m.to_string());
    if bytes.len() < MAGIC.len() + 12 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("not a model file"));
    }
    let version = u32_at(bytes, 8);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32_at(tail, 0) {
        return Err(bad("checksum mismatch (file corrupted or truncated)"));
    }
    let header_len = u32_at(body, 12) as usize;
    let start = 16;
    if body.len() < start + header_len {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[start..start + header_len])?;
    let mut model = TcnModel::<f32>::new(header.architecture, 0)?;
    let expected = tensor_list(&model);
    if expected.len() != header.tensors.len()
        || expected
            .iter()
            .zip(&header.tensors)
            .any(|((n, t), e)| *n != e.name || t.len() != e.len)
    {
        return Err(bad("tensor table does not match the architecture"));
    }
    let mut data = &body[start + header_len..];
    let total: usize = header.tensors.iter().map(|e| e.len).sum();
    if data.len() != total * 4 {
        return Err(bad("tensor data length does not match the header"));
    }
    let mut values = header.tensors.iter().map(|e| {
        let (chunk, rest) = data.split_at(e.len * 4);
        data = rest;
        chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("four bytes")))
            .collect::<Vec<f32>>()
    });
    for dst in model.params_mut() {
        *dst = values.next().expect("counted");
    }
    for dst in model.buffers_mut() {
        *dst = values.next().expect("counted");
    }
    let d_out = model.arch.sketch_dim;
    let mut sketch = || -> Result<SketchParams> {
        let hash = values.next().expect("counted").into_iter().map(|h| h as u32).collect();
        let sign = values.next().expect("counted").into_iter().map(|s| s as i8).collect();
        SketchParams::new(hash, sign, d_out)
    };
    let pu = sketch()?;
    let pw = sketch()?;
    model.pool = CompactBilinear::new(pu, pw)?;
    Ok(model)
}

pub fn save_model(model: &TcnModel<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TcnModel<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

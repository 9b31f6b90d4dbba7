//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes  "JPCK"
//! version      u32      currently 1
//! header_len   u64
//! header       JSON: {"config": .., "words": [..], "labels": [..], "rels": [..]}
//! count        u32      number of tensors
//! per tensor:
//!   name_len   u32, then UTF-8 name
//!   ndim       u32, then ndim x u64 dims
//!   data       product(dims) x f64, row-major
//! ```
//!
//! Tensors appear in [`Params::tensors`] order and are matched by name on
//! load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Params, Vocab};

pub const MAGIC: &[u8; 4] = b"JPCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    words: Vocab,
    labels: Vocab,
    rels: Vocab,
}

pub fn write_model<W: Write>(model: &Model, mut out: W) -> Result<()> {
    let header = Header {
        config: model.config.clone(),
        words: model.words.clone(),
        labels: model.labels.clone(),
        rels: model.rels.clone(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    let tensors = model.params().tensors();
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.ndim() as u32).to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn bounded(len: u64, what: &str) -> Result<usize> {
    const LIMIT: u64 = 1 << 32;
    if len > LIMIT {
        return Err(Error::Checkpoint(format!("{what} length {len} is implausible")));
    }
    Ok(len as usize)
}

pub fn read_model<R: Read>(mut input: R) -> Result<Model> {
    let mut magic = [0; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let len = bounded(read_u64(&mut input)?, "header")?;
    let mut header = vec![0; len];
    input.read_exact(&mut header)?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut params = Params::zeros(
        &header.config,
        header.words.len(),
        header.labels.len(),
        header.rels.len(),
    );
    let count = read_u32(&mut input)? as usize;
    let mut seen = 0;
    for _ in 0..count {
        let name_len = bounded(read_u32(&mut input)? as u64, "name")?;
        let mut name = vec![0; name_len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let ndim = read_u32(&mut input)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(bounded(read_u64(&mut input)?, "dimension")?);
        }
        let mut tensors = params.tensors_mut();
        let Some((_, target)) = tensors.iter_mut().find(|(n, _)| *n == name) else {
            return Err(Error::Checkpoint(format!("unknown tensor {name}")));
        };
        if target.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {shape:?}, expected {:?}",
                target.shape()
            )));
        }
        let mut buf = [0; 8];
        for v in target.iter_mut() {
            input.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        seen += 1;
    }
    if seen != params.tensors().len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {seen}",
            params.tensors().len()
        )));
    }
    Model::from_params(header.config, header.words, header.labels, header.rels, params)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    read_model(BufReader::new(File::open(path)?))
}

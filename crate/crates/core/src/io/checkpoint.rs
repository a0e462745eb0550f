//! Self-describing model container.
//!
//! Layout: the magic bytes `BWBCKPT\n`, a little-endian `u64` header length,
//! a JSON header, the parameter buffers as little-endian `f64`, and a trailing
//! SHA-256 of everything before it.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{CdmModel, DenoiserModel, CONDITION_ORDER};
use crate::error::{Error, Result};
use crate::nn::{ParamStore, Tensor2};
use crate::surrogate::{FieldSurrogate, FilmModel, LdSurrogate, FILM_CONDITION_ORDER, LD_INPUT_ORDER};

pub const MAGIC: &[u8; 8] = b"BWBCKPT\n";
pub const FORMAT_VERSION: u32 = 1;

/// A model that can be stored in a checkpoint.
pub trait Checkpoint: Serialize + DeserializeOwned + Clone {
    const KIND: &'static str;
    fn conditioning_order() -> Vec<String>;
    fn seed(&self) -> u64;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Freshly built parameter store with the architecture's names and shapes.
    fn architecture(&self) -> ParamStore;
}

impl Checkpoint for LdSurrogate {
    const KIND: &'static str = "ld_surrogate";
    fn conditioning_order() -> Vec<String> {
        LD_INPUT_ORDER.map(String::from).to_vec()
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
    fn architecture(&self) -> ParamStore {
        LdSurrogate::new(self.config, self.seed).params
    }
}

impl Checkpoint for FieldSurrogate {
    const KIND: &'static str = "field_surrogate";
    fn conditioning_order() -> Vec<String> {
        FILM_CONDITION_ORDER.map(String::from).to_vec()
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.model.params
    }
    fn architecture(&self) -> ParamStore {
        FilmModel::new(self.model.config, 0).params
    }
}

impl Checkpoint for CdmModel {
    const KIND: &'static str = "cdm";
    fn conditioning_order() -> Vec<String> {
        CONDITION_ORDER.map(String::from).to_vec()
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.denoiser.params
    }
    fn architecture(&self) -> ParamStore {
        DenoiserModel::new(self.denoiser.config, 0).params
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub kind: String,
    pub byte_order: String,
    pub seed: u64,
    pub conditioning_order: Vec<String>,
    pub buffers: Vec<BufferEntry>,
    /// Model descriptor (configuration, scalers) with parameter buffers removed.
    pub descriptor: serde_json::Value,
}

pub fn encode_checkpoint<M: Checkpoint>(model: &M) -> Result<Vec<u8>> {
    let mut shell = model.clone();
    let store = std::mem::take(shell.params_mut());
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        kind: M::KIND.into(),
        byte_order: "little".into(),
        seed: model.seed(),
        conditioning_order: M::conditioning_order(),
        buffers: store
            .names
            .iter()
            .zip(&store.tensors)
            .map(|(n, t)| BufferEntry {
                name: n.clone(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
        descriptor: serde_json::to_value(&shell)?,
    };
    let h = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + h.len() + 8 * store.n_scalars() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(h.len() as u64).to_le_bytes());
    out.extend_from_slice(&h);
    for t in &store.tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Splits a checkpoint into its header and raw buffer bytes after checking
/// the magic bytes and the digest.
pub fn decode_header(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    if bytes.len() < MAGIC.len() + 8 + 32 || &bytes[..8] != MAGIC {
        return Err(Error::Integrity("not a checkpoint file (bad magic or too short)".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Integrity("checkpoint digest mismatch: file is corrupt or truncated".into()));
    }
    let hlen = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes")) as usize;
    let data_start = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| Error::Integrity("checkpoint header length exceeds file size".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&body[16..data_start])
        .map_err(|e| Error::Integrity(format!("checkpoint header: {e}")))?;
    Ok((header, &body[data_start..]))
}

pub fn decode_checkpoint<M: Checkpoint>(bytes: &[u8]) -> Result<M> {
    let (header, data) = decode_header(bytes)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Integrity(format!(
            "checkpoint format version {} is not supported (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    if header.kind != M::KIND {
        return Err(Error::Integrity(format!(
            "checkpoint holds a {} model, expected {}",
            header.kind,
            M::KIND
        )));
    }
    if header.byte_order != "little" {
        return Err(Error::Integrity(format!("unsupported byte order {:?}", header.byte_order)));
    }
    if header.conditioning_order != M::conditioning_order() {
        return Err(Error::Integrity(format!(
            "conditioning order {:?} differs from {:?}",
            header.conditioning_order,
            M::conditioning_order()
        )));
    }
    let total: usize = header.buffers.iter().map(|b| b.rows.saturating_mul(b.cols)).sum();
    if total.checked_mul(8) != Some(data.len()) {
        return Err(Error::Integrity(format!(
            "buffer table declares {total} values but the file holds {} bytes of data",
            data.len()
        )));
    }
    let mut loaded = ParamStore::new();
    let mut at = 0;
    for b in &header.buffers {
        let n = b.rows * b.cols;
        let v: Vec<f64> = data[at..at + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        at += 8 * n;
        loaded.add(b.name.clone(), Tensor2::from_vec(b.rows, b.cols, v)?);
    }
    let mut model: M = serde_json::from_value(header.descriptor)
        .map_err(|e| Error::Integrity(format!("checkpoint descriptor: {e}")))?;
    let mut store = model.architecture();
    store.load_from(&loaded)?;
    *model.params_mut() = store;
    Ok(model)
}

pub fn save_checkpoint<M: Checkpoint>(path: &Path, model: &M) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<M: Checkpoint>(path: &Path) -> Result<M> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::State(format!(
            "checkpoint {} not found; run the matching training command first",
            path.display()
        )),
        _ => Error::io(path, e),
    })?;
    decode_checkpoint(&bytes)
}

/// Re-seals a modified checkpoint body with a fresh digest. Only useful for
/// building corrupted fixtures.
pub fn reseal(header: &CheckpointHeader, data: &[u8]) -> Result<Vec<u8>> {
    let h = serde_json::to_vec(header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(h.len() as u64).to_le_bytes());
    out.extend_from_slice(&h);
    out.extend_from_slice(data);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

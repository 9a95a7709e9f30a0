//! Binary checkpoints: magic, version, a JSON header, then little-endian `f32` values.
//!
//! ```text
//! b"DPGCKPT\0" | u32 version | u64 header length | header JSON | payload
//! ```
//! The header carries the model and training configuration, the vocabulary
//! and a manifest of `(name, shape, offset, len)` entries in payload order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Seq2Seq};
use crate::tensor::Tensor;
use crate::trainer::TrainingConfig;
use crate::vocab::Vocabulary;

pub const MAGIC: &[u8; 8] = b"DPGCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
    /// Number of values.
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub model: ModelConfig,
    pub training: Option<TrainingConfig>,
    pub vocab: Vocabulary,
    pub tensors: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Seq2Seq,
    pub vocab: Vocabulary,
    pub training: Option<TrainingConfig>,
}

pub fn to_bytes(model: &Seq2Seq, vocab: &Vocabulary, training: Option<&TrainingConfig>) -> Result<Vec<u8>> {
    if vocab.len() != model.config().vocab_size {
        return Err(Error::Contract(format!(
            "vocabulary has {} tokens, model expects {}",
            vocab.len(),
            model.config().vocab_size
        )));
    }
    let mut tensors = Vec::with_capacity(model.params().len());
    let mut payload = Vec::with_capacity(model.params().num_values() * 4);
    for p in model.params().iter() {
        tensors.push(ManifestEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            offset: payload.len(),
            len: p.value.numel(),
        });
        for &v in p.value.data() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let header = Header {
        model: model.config().clone(),
        training: training.cloned(),
        vocab: vocab.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Data(format!("checkpoint truncated in {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn read_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let mut rest = bytes;
    if take(&mut rest, 8, "magic")? != MAGIC {
        return Err(Error::Data("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut rest, 4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Data(format!(
            "checkpoint version {version} is not supported (expected {VERSION})"
        )));
    }
    let len = u64::from_le_bytes(take(&mut rest, 8, "header length")?.try_into().expect("8 bytes"));
    let json = take(&mut rest, len as usize, "header")?;
    let header: Header = serde_json::from_slice(json)?;
    Ok((header, rest))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let (header, payload) = read_header(bytes)?;
    let mut expected = 0usize;
    for e in &header.tensors {
        if e.shape.iter().product::<usize>() != e.len || e.offset != expected {
            return Err(Error::Data(format!("manifest entry `{}` is inconsistent", e.name)));
        }
        expected += e.len * 4;
    }
    if payload.len() != expected {
        return Err(Error::Data(format!(
            "payload length mismatch: manifest needs {expected} bytes, file has {}",
            payload.len()
        )));
    }
    let values = header
        .tensors
        .iter()
        .map(|e| {
            let data = payload[e.offset..e.offset + e.len * 4]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect();
            Ok((e.name.clone(), Tensor::new(e.shape.clone(), data)?))
        })
        .collect::<Result<Vec<_>>>()?;
    if header.vocab.len() != header.model.vocab_size {
        return Err(Error::Data("checkpoint vocabulary does not match its model".into()));
    }
    let model = Seq2Seq::from_params(header.model, values)?;
    Ok(Checkpoint {
        model,
        vocab: header.vocab,
        training: header.training,
    })
}

pub fn save_checkpoint(path: &Path, model: &Seq2Seq, vocab: &Vocabulary, training: Option<&TrainingConfig>) -> Result<()> {
    let bytes = to_bytes(model, vocab, training)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

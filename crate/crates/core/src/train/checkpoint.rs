//! Self-describing checkpoint container.
//!
//! Layout: the magic `DVGRCKPT`, a little-endian `u32` format version, a
//! little-endian `u64` header length, a JSON header, then raw little-endian
//! `f64` arrays at the offsets listed in the header. The header echoes the
//! full model config, both vocabularies, the initialization scheme, the
//! optimizer settings and the metric history.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::model::{Model, EMBEDDING_INIT};
use crate::params::ParamId;
use crate::tensor::Tensor;
use crate::train::optim::{Adam, AdamSettings};
use crate::train::trainer::EpochRecord;

pub const MAGIC: &[u8; 8] = b"DVGRCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Adam,
    /// Epochs completed when the snapshot was taken.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TensorKind {
    Param,
    AdamM,
    AdamV,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    kind: TensorKind,
    rows: usize,
    cols: usize,
    dtype: String,
    offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Initialization {
    linear: String,
    lstm_forget_bias: f64,
    embedding: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    initialization: Initialization,
    question_vocab: Vec<String>,
    answer_vocab: Vec<String>,
    epoch: usize,
    history: Vec<EpochRecord>,
    optimizer: AdamSettings,
    optimizer_step: u64,
    tensors: Vec<TensorEntry>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidCheckpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut blob = Vec::new();
        let mut tensors = Vec::new();
        let store = &self.model.params;
        for (kind, source) in [(TensorKind::Param, None), (TensorKind::AdamM, Some(&self.optimizer.m)), (TensorKind::AdamV, Some(&self.optimizer.v))] {
            for (id, name, value) in store.iter() {
                let t = source.map_or(value, |s| &s[id.0]);
                tensors.push(TensorEntry {
                    name: name.to_string(),
                    kind,
                    rows: t.rows(),
                    cols: t.cols(),
                    dtype: "f64le".into(),
                    offset: blob.len() as u64,
                });
                for x in t.data() {
                    blob.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        let header = Header {
            config: self.model.config.clone(),
            initialization: Initialization {
                linear: "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))".into(),
                lstm_forget_bias: 1.0,
                embedding: format!("uniform(-{EMBEDDING_INIT}, {EMBEDDING_INIT})"),
            },
            question_vocab: self.model.question_vocab.tokens().to_vec(),
            answer_vocab: self.model.answer_vocab.tokens().to_vec(),
            epoch: self.epoch,
            history: self.history.clone(),
            optimizer: self.optimizer.settings,
            optimizer_step: self.optimizer.step,
            tensors,
        };
        let json = serde_json::to_vec(&header).map_err(|source| Error::Json { context: "checkpoint header".into(), source })?;
        let mut out = Vec::with_capacity(20 + json.len() + blob.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing checkpoint magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let header_end = 20usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..header_end]).map_err(|e| bad(format!("header: {e}")))?;
        let blob = &bytes[header_end..];

        let model = Model::new(header.config.clone(), Vocab::from_tokens(header.question_vocab), Vocab::from_tokens(header.answer_vocab))?;
        let mut model = model;
        let mut optimizer = Adam::new(&model.params, header.optimizer);
        optimizer.step = header.optimizer_step;
        let expected = 3 * model.params.len();
        if header.tensors.len() != expected {
            return Err(bad(format!("expected {expected} tensors, found {}", header.tensors.len())));
        }
        for entry in &header.tensors {
            if entry.dtype != "f64le" {
                return Err(bad(format!("{}: unsupported dtype {}", entry.name, entry.dtype)));
            }
            let id: ParamId = model.params.id(&entry.name).ok_or_else(|| bad(format!("unknown tensor {}", entry.name)))?;
            let shape = model.params.get(id).shape();
            if shape != (entry.rows, entry.cols) {
                return Err(bad(format!("{}: shape {:?} does not match model {:?}", entry.name, (entry.rows, entry.cols), shape)));
            }
            let start = entry.offset as usize;
            let end = start + 8 * entry.rows * entry.cols;
            if end > blob.len() {
                return Err(bad(format!("{}: data truncated", entry.name)));
            }
            let data = blob[start..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::from_vec(entry.rows, entry.cols, data);
            match entry.kind {
                TensorKind::Param => *model.params.get_mut(id) = t,
                TensorKind::AdamM => optimizer.m[id.0] = t,
                TensorKind::AdamV => optimizer.v[id.0] = t,
            }
        }
        Ok(Self { model, optimizer, epoch: header.epoch, history: header.history })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkpoint() -> Checkpoint {
        let v = |n: usize| Vocab::from_tokens((0..n).map(|i| format!("w{i}")).collect());
        let model = Model::new(ModelConfig::micro(), v(5), v(3)).unwrap();
        let mut optimizer = Adam::new(&model.params, AdamSettings::new(1e-3));
        optimizer.step = 7;
        optimizer.m[0].data_mut()[0] = 0.25;
        Checkpoint { model, optimizer, epoch: 3, history: Vec::new() }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = checkpoint();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back.optimizer, c.optimizer);
        assert_eq!(back.epoch, 3);
        for ((_, n1, t1), (_, n2, t2)) in back.model.params.iter().zip(c.model.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1, t2);
        }
        assert_eq!(back.model.layout, c.model.layout);
    }

    #[test]
    fn damaged_bytes_rejected() {
        let bytes = checkpoint().to_bytes().unwrap();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::InvalidCheckpoint(_))));
        assert!(matches!(Checkpoint::from_bytes(b"not a checkpoint at all"), Err(Error::InvalidCheckpoint(_))));
    }
}

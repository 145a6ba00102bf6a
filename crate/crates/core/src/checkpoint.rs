//! Self-describing checkpoint files.
//!
//! Layout: the 8-byte magic `CONJCKPT`, a little-endian `u64` header
//! length, a JSON header (architecture, tag inventory, vocabularies and
//! tensor shapes), then every tensor as raw little-endian `f32` in header
//! order. Values round-trip bit for bit.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TaggerModel};
use crate::neural::{Param, ParamGroup, ParamSet, Vocab};
use crate::types::Tag;

const MAGIC: &[u8; 8] = b"CONJCKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    group: ParamGroup,
    trainable: bool,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: u32,
    model: ModelConfig,
    tags: Vec<Tag>,
    words: Vec<String>,
    chars: Vec<String>,
    tensors: Vec<TensorHeader>,
}

pub fn to_bytes(model: &TaggerModel<f32>) -> Result<Vec<u8>> {
    let header = Header {
        format: FORMAT_VERSION,
        model: model.config().clone(),
        tags: Tag::ALL.to_vec(),
        words: model.words().entries().to_vec(),
        chars: model.chars().entries().to_vec(),
        tensors: model
            .params()
            .iter()
            .map(|(_, p)| TensorHeader {
                name: p.name.clone(),
                group: p.group,
                trainable: p.trainable,
                rows: p.value.nrows(),
                cols: p.value.ncols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * model.params().scalar_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in model.params().iter() {
        for v in p.value.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<TaggerModel<f32>> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16usize.saturating_add(header_len))
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if header.format != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format
        )));
    }
    if header.tags != Tag::ALL {
        return Err(Error::Checkpoint(format!(
            "tag inventory {:?} does not match",
            header.tags
        )));
    }
    let mut data = &bytes[16 + header_len..];
    let mut params = ParamSet::new();
    for t in &header.tensors {
        let n = t.rows * t.cols;
        if data.len() < 4 * n {
            return Err(Error::Checkpoint(format!("tensor {} is truncated", t.name)));
        }
        let values: Vec<f32> = data[..4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        data = &data[4 * n..];
        let value = Array2::from_shape_vec((t.rows, t.cols), values).expect("shape matches length");
        let id = params.add(t.name.clone(), t.group, value);
        let Param { trainable, .. } = params.param_mut(id);
        *trainable = t.trainable;
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes after tensors"));
    }
    TaggerModel::from_parts(
        header.model,
        Vocab::from_tokens(header.words)?,
        Vocab::from_tokens(header.chars)?,
        params,
    )
}

pub fn save(model: &TaggerModel<f32>, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let bytes = to_bytes(model)?;
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len() as u64)
}

pub fn load(path: impl AsRef<Path>) -> Result<TaggerModel<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Serialized size in bytes.
pub fn model_size(model: &TaggerModel<f32>) -> Result<u64> {
    Ok(to_bytes(model)?.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Decoder;

    fn small(config: ModelConfig, words: &[&str]) -> TaggerModel<f32> {
        TaggerModel::new(config, Vocab::build(words), Vocab::build(["a", "b", "é"]), 3).unwrap()
    }

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            char_encoder: true,
            char_emb_dim: 3,
            char_hidden: 2,
            word_emb_dim: 4,
            word_hidden: 3,
            seq_layer: true,
            adversary: true,
            slot_labels: vec!["A".into(), "B".into()],
            crf_end_scores: true,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut model = small(tiny_config(), &["add", "jam"]);
        model.params_mut().iter_mut().next().unwrap().1.value[[2, 1]] = f32::from_bits(0x3f80_0001);
        let bytes = to_bytes(&model).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        for ((_, a), (_, b)) in back.params().iter().zip(model.params().iter()) {
            assert!(a
                .value
                .iter()
                .zip(b.value.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = to_bytes(&small(tiny_config(), &["x"])).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(from_bytes(b"garbage!garbage!").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
    }

    #[test]
    fn size_tracks_vocabulary() {
        let word = ModelConfig {
            word_emb_dim: 300,
            word_hidden: 8,
            decoder: Decoder::Softmax,
            ..ModelConfig::default()
        };
        let chars = ModelConfig {
            char_encoder: true,
            word_encoder: false,
            char_emb_dim: 100,
            char_hidden: 8,
            ..word.clone()
        };
        let vocab: Vec<String> = (0..200).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = vocab.iter().map(String::as_str).collect();
        let word_size = model_size(&small(word.clone(), &refs)).unwrap();
        let char_size = model_size(&small(chars.clone(), &refs)).unwrap();
        assert!(char_size < word_size);
        let smaller = model_size(&small(word.clone(), &refs[..100])).unwrap();
        assert!(smaller < word_size);

        // With no words beyond the reserved entries only the two reserved
        // rows remain from the embedding table.
        let empty = small(word.clone(), &[]);
        let table = empty.word_embedding_id().unwrap();
        assert_eq!(empty.params()[table].nrows(), 2);
        let no_words = model_size(&empty).unwrap();
        let with_char = model_size(&small(chars, &[])).unwrap();
        assert!(no_words > 0 && with_char > 0);
    }
}

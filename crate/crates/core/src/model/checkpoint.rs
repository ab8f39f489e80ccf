//! Binary checkpoint layout:
//!
//! ```text
//! "SSLM" | version: u32 LE | header_len: u32 LE | header JSON | f32 LE blob
//! ```
//!
//! The blob holds every parameter block in [`ModelParams::blocks`] order,
//! each row-major. The header lists the blocks with their shapes so a
//! truncated or padded blob is caught before any values are read.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{JointModel, ModelDims, ModelParams, TrainConfig};
use crate::corpus::{TagInventory, Vocabulary};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSLM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct BlockShape {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dims: ModelDims,
    seed: u64,
    training: TrainConfig,
    vocab: Vocabulary,
    tags: TagInventory,
    blocks: Vec<BlockShape>,
}

impl JointModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let blocks = self.params.blocks();
        let header = Header {
            dims: self.dims,
            seed: self.seed,
            training: self.config.clone(),
            vocab: self.vocab.clone(),
            tags: self.tags.clone(),
            blocks: blocks
                .iter()
                .map(|(name, b)| BlockShape {
                    name: name.clone(),
                    rows: b.rows(),
                    cols: b.cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let n: usize = blocks.iter().map(|(_, b)| b.data().len()).sum();
        let mut out = Vec::with_capacity(12 + json.len() + 4 * n);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, b) in &blocks {
            for &x in b.data() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a model checkpoint (bad magic bytes)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint format version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let blob_start = 12 + header_len;
        if bytes.len() < blob_start {
            return Err(Error::Format("checkpoint header is truncated".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[12..blob_start])?;
        let dims = header.dims;
        if header.vocab.len() != dims.vocab_size || header.tags.len() != dims.tag_count {
            return Err(Error::Format("checkpoint inventories disagree with its dimensions".into()));
        }
        let mut params = ModelParams::zeros(&dims);
        let expected: Vec<(String, usize, usize)> =
            params.blocks().into_iter().map(|(n, b)| (n, b.rows(), b.cols())).collect();
        let listed: Vec<(String, usize, usize)> =
            header.blocks.iter().map(|b| (b.name.clone(), b.rows, b.cols)).collect();
        if expected != listed {
            return Err(Error::Format("checkpoint block list does not match its dimensions".into()));
        }
        let n: usize = expected.iter().map(|(_, r, c)| r * c).sum();
        let blob = &bytes[blob_start..];
        if blob.len() != 4 * n {
            return Err(Error::Format(format!(
                "checkpoint parameter blob has {} bytes, expected {}",
                blob.len(),
                4 * n
            )));
        }
        let mut values = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
        for b in params.blocks_mut() {
            for x in b.data_mut() {
                *x = values.next().unwrap();
            }
        }
        if let Some(block) = params.first_non_finite() {
            return Err(Error::NonFinite { block });
        }
        Ok(JointModel {
            dims,
            params,
            vocab: header.vocab,
            tags: header.tags,
            seed: header.seed,
            config: header.training,
        })
    }
}

pub fn save_checkpoint(model: &JointModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<JointModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    JointModel::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> JointModel {
        let vocab = Vocabulary::from_sentences([&["x", "y", "z"][..]], 1);
        let tags = TagInventory::from(vec!["A".to_string(), "B".to_string()]);
        let cfg = TrainConfig {
            hidden: 5,
            embed: 3,
            seed: 21,
            ..TrainConfig::default()
        };
        JointModel::new(vocab, tags, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = m.to_bytes().unwrap();
        let back = JointModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = model().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(JointModel::from_bytes(&bytes), Err(Error::Format(m)) if m.contains("magic")));
    }

    #[test]
    fn wrong_version() {
        let mut bytes = model().to_bytes().unwrap();
        bytes[4] = 9;
        assert!(matches!(JointModel::from_bytes(&bytes), Err(Error::Format(m)) if m.contains("version")));
    }

    #[test]
    fn truncated_blob() {
        let bytes = model().to_bytes().unwrap();
        assert!(matches!(
            JointModel::from_bytes(&bytes[..bytes.len() - 4]),
            Err(Error::Format(m)) if m.contains("blob")
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sslm");
        let m = model();
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), m);
        assert!(matches!(load_checkpoint(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}

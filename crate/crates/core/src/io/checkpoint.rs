use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::{ParamStore, Tensor};
use crate::clustering::KeywordClusterMap;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::features::{FeatureStats, LayoutConfig, Vocabulary};

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Training stage that produced a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Init,
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointConfig {
    pub format_version: u32,
    pub stage: Stage,
    pub encoder: EncoderConfig,
    pub layout: LayoutConfig,
    pub vocab_id: String,
    /// Raw per-object feature width the visual projection expects.
    pub poster_dim: Option<usize>,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub shape: [usize; 2],
    pub sha256: String,
}

/// Everything needed to resume training or to predict: weights, the
/// configuration that produced them, and the feature artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: CheckpointConfig,
    pub params: ParamStore,
    pub vocab: Vocabulary,
    pub stats: FeatureStats,
    pub clusters: KeywordClusterMap,
}

/// Little-endian row-major bytes of a tensor.
pub fn tensor_bytes(t: &Tensor) -> Vec<u8> {
    t.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of a parameter's serialized blob.
pub fn param_digest(params: &ParamStore, name: &str) -> Result<String> {
    Ok(sha256_hex(&tensor_bytes(params.value(params.id(name)?))))
}

fn append(builder: &mut tar::Builder<Vec<u8>>, path: &str, data: &[u8]) -> Result<()> {
    let mut header = tar::Header::new_gnu();
    header.set_size(data.len() as u64);
    header.set_mode(0o644);
    header.set_mtime(0);
    header.set_uid(0);
    header.set_gid(0);
    header.set_cksum();
    builder
        .append_data(&mut header, path, data)
        .map_err(|e| Error::io(path, e))
}

impl ModelCheckpoint {
    /// Serialize to a deterministic tar archive.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut builder = tar::Builder::new(Vec::new());
        builder.mode(tar::HeaderMode::Deterministic);
        append(&mut builder, "config.json", serde_json::to_string_pretty(&self.config)?.as_bytes())?;
        let mut manifest = Vec::with_capacity(self.params.len());
        let mut blobs = Vec::with_capacity(self.params.len());
        for (_, p) in self.params.iter() {
            let bytes = tensor_bytes(&p.value);
            let file = format!("tensors/{}.f32", p.name);
            manifest.push(ManifestEntry {
                name: p.name.clone(),
                file: file.clone(),
                shape: [p.value.nrows(), p.value.ncols()],
                sha256: sha256_hex(&bytes),
            });
            blobs.push((file, bytes));
        }
        append(&mut builder, "manifest.json", serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        for (file, bytes) in &blobs {
            append(&mut builder, file, bytes)?;
        }
        append(&mut builder, "vocab.json", self.vocab.to_json().as_bytes())?;
        append(&mut builder, "stats.json", serde_json::to_string_pretty(&self.stats)?.as_bytes())?;
        append(&mut builder, "clusters.json", serde_json::to_string(&self.clusters)?.as_bytes())?;
        builder.into_inner().map_err(|e| Error::io("checkpoint", e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut files = std::collections::HashMap::new();
        let mut archive = tar::Archive::new(bytes);
        let entries = archive.entries().map_err(|e| Error::io("checkpoint", e))?;
        for entry in entries {
            let mut entry = entry.map_err(|e| Error::io("checkpoint", e))?;
            let path = entry
                .path()
                .map_err(|e| Error::io("checkpoint", e))?
                .to_string_lossy()
                .into_owned();
            let mut data = Vec::new();
            entry.read_to_end(&mut data).map_err(|e| Error::io(&path, e))?;
            files.insert(path, data);
        }
        let mut get = |name: &str| {
            files
                .remove(name)
                .ok_or_else(|| Error::Data(format!("checkpoint is missing {name}")))
        };
        let config: CheckpointConfig = serde_json::from_slice(&get("config.json")?)?;
        if config.format_version != CHECKPOINT_FORMAT {
            return Err(Error::Data(format!(
                "checkpoint format {} is not supported",
                config.format_version
            )));
        }
        let manifest: Vec<ManifestEntry> = serde_json::from_slice(&get("manifest.json")?)?;
        let mut params = ParamStore::new();
        for entry in manifest {
            let data = get(&entry.file)?;
            let [rows, cols] = entry.shape;
            if data.len() != rows * cols * 4 {
                return Err(Error::Data(format!(
                    "{} holds {} bytes, shape {rows}x{cols} needs {}",
                    entry.file,
                    data.len(),
                    rows * cols * 4
                )));
            }
            let digest = sha256_hex(&data);
            if digest != entry.sha256 {
                return Err(Error::Data(format!("checksum mismatch for {}", entry.name)));
            }
            let values = data
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            params.insert(entry.name, Array2::from_shape_vec((rows, cols), values).expect("checked size"));
        }
        let vocab = Vocabulary::from_json(std::str::from_utf8(&get("vocab.json")?).map_err(|e| Error::Data(e.to_string()))?)?;
        if vocab.fingerprint() != config.vocab_id {
            return Err(Error::Data("checkpoint vocabulary does not match its config".into()));
        }
        let stats = serde_json::from_slice(&get("stats.json")?)?;
        let clusters = serde_json::from_slice(&get("clusters.json")?)?;
        Ok(Self {
            config,
            params,
            vocab,
            stats,
            clusters,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("partial");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, HashMap};

    use super::*;
    use crate::autograd::init_rng;
    use crate::features::TokenGroup;

    fn checkpoint() -> ModelCheckpoint {
        let tables: BTreeMap<TokenGroup, Vec<String>> =
            TokenGroup::ALL.iter().map(|&g| (g, vec![format!("{g:?}")])).collect();
        let vocab = Vocabulary::from_tables(tables).unwrap();
        let mut params = ParamStore::new();
        let mut rng = init_rng(1);
        params.insert_normal("embeddings.token", (4, 3), 1.0, &mut rng);
        params.insert_normal("head.weight", (3, 1), 1.0, &mut rng);
        let freq: HashMap<String, usize> = [("love".to_string(), 3)].into_iter().collect();
        ModelCheckpoint {
            config: CheckpointConfig {
                format_version: CHECKPOINT_FORMAT,
                stage: Stage::Pretrain,
                encoder: EncoderConfig::default(),
                layout: LayoutConfig::default(),
                vocab_id: vocab.fingerprint(),
                poster_dim: Some(16),
                steps: 10,
            },
            params,
            vocab,
            stats: FeatureStats::with_bounds((5.0, 9.0), (10.0, 80.0)),
            clusters: KeywordClusterMap::from_groups(vec![vec!["love".into()]], &freq).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_exact_and_deterministic() {
        let ck = checkpoint();
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(bytes, ck.to_bytes().unwrap());
        assert_eq!(ModelCheckpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn manifest_digest_matches_blob() {
        let ck = checkpoint();
        let digest = param_digest(&ck.params, "head.weight").unwrap();
        let bytes = ck.to_bytes().unwrap();
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.contains(&digest));
    }

    #[test]
    fn corrupted_blob_is_detected() {
        let ck = checkpoint();
        let mut bytes = ck.to_bytes().unwrap();
        let blob = tensor_bytes(ck.params.value(ck.params.id("head.weight").unwrap()));
        let at = bytes.windows(blob.len()).position(|w| w == blob.as_slice()).unwrap();
        bytes[at] ^= 1;
        assert!(matches!(ModelCheckpoint::from_bytes(&bytes), Err(Error::Data(m)) if m.contains("checksum")));
    }
}

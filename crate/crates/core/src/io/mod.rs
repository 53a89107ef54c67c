//! On-disk formats: poster object features and model checkpoints.

mod checkpoint;
mod pobj;

pub use checkpoint::{
    param_digest, sha256_hex, tensor_bytes, CheckpointConfig, ManifestEntry, ModelCheckpoint, Stage, CHECKPOINT_FORMAT,
};
pub use pobj::{
    decode_pobj, encode_pobj, read_pobj, validate_pobj, write_pobj, PobjSummary, PosterObjectSet, POBJ_HEADER_LEN,
    POBJ_MAGIC, POBJ_VERSION,
};

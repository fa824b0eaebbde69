//! Raw text to pre-masked binary shards.

pub mod error;
pub mod mask;
pub mod pack;
pub mod pipeline;
pub mod shard;
pub mod split;
pub mod synthetic;
pub mod tokenize;
pub mod vocab;

pub use error::CorpusError;
pub use mask::{global_shuffle, mask_instances, CorruptionSplit, MaskConfig, MaskedInstance};
pub use pack::{pack_sequences, SequenceInstance};
pub use pipeline::{prepare_dataset, prepare_documents, PrepareConfig, PrepareSummary};
pub use shard::{load_shards, read_shards, write_shards, ShardFile, ShardHeader, ShardSpec};
pub use split::split_validation;
pub use tokenize::{tokenize, WordPiece};
pub use vocab::{SpecialIds, SpecialTokens, Vocab};

//! End-to-end orchestration: synthetic corpus generation, preprocessing into
//! record shards, corpus statistics and toy training.

mod config;
mod generate;
mod prep;
mod record;
mod shards;
mod stats;
mod train;

pub use config::{env_seed, PipelineConfig, SEED_ENV};
pub use generate::{
    generate_corpus, generate_page, CorpusSpec, PageBundle, BOXES_FILE, CORPUS_FILE, HTML_FILE, PNG_FILE, PPM_FILE,
};
pub use prep::{build_vocab, list_bundles, page_records, prep, ParsedPage, PrepSummary};
pub use record::{PretrainRecord, Provenance, RasterRef};
pub use shards::{
    sha256_hex, write_shards, FileDigest, IndexEntry, Manifest, ShardInfo, ShardSet, INDEX_FILE, MANIFEST_FILE,
    RASTER_DIR, SHARD_MAGIC, SHARD_VERSION, TAGS_FILE, VOCAB_FILE,
};
pub use stats::{compute_stats, format_record, StatsReport};
pub use train::{
    batch_indices, crop_patch_stats, gradcheck_from_config, model_config_for, train_toy, training_examples,
    MetricsLine, TrainOptions, TrainSummary,
};

//! Generate synthetic page bundles, pre-process them into verified shards and
//! print corpus statistics.
//!
//! cargo run --example generate_corpus -- [OUT_DIR]

use std::path::PathBuf;

use weblm::pipeline::{compute_stats, generate_corpus, prep, CorpusSpec, PipelineConfig, ShardSet};

fn main() -> weblm::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("weblm-corpus"));
    let spec = CorpusSpec {
        pages: 8,
        seed: 3,
        ..CorpusSpec::default()
    };
    let pages = generate_corpus(&spec, &out.join("pages"))?;
    println!("{} page bundles in {}", pages.len(), out.join("pages").display());

    let summary = prep(&out.join("pages"), &out.join("shards"), &PipelineConfig::default())?;
    println!(
        "{} records from {} pages",
        summary.manifest.record_count, summary.pages_used
    );

    let shards = ShardSet::open(&out.join("shards"))?;
    print!("{}", compute_stats(&shards.records, &shards.tags).to_text());
    Ok(())
}

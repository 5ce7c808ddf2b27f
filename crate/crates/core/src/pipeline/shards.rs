use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineConfig, PretrainRecord};
use crate::codec::{ByteReader, ByteWriter};
use crate::dom::TagVocab;
use crate::error::{Error, Result};
use crate::tokenizer::WordTokenizer;

pub const SHARD_MAGIC: [u8; 8] = *b"WLMSHARD";
pub const SHARD_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_FILE: &str = "index.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const TAGS_FILE: &str = "tags.txt";
pub const RASTER_DIR: &str = "rasters";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub records: usize,
    pub sha256: String,
}

/// Summary written next to the shards; enough to regenerate and verify them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub corpus_seed: u64,
    pub config: PipelineConfig,
    pub record_count: usize,
    pub shards: Vec<ShardInfo>,
    /// Vocabulary, tag list, index and raster checksums.
    pub files: Vec<FileDigest>,
}

/// One line of `index.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: u64,
    pub shard: String,
    pub offset: u64,
    pub length: u64,
    pub page_id: String,
    pub tokens: usize,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(bytes))
}

/// Writes records into length-prefixed binary shards plus the index,
/// vocabulary files, raster copies and manifest.
pub fn write_shards(
    out: &Path,
    records: &[PretrainRecord],
    config: &PipelineConfig,
    vocab: &WordTokenizer,
    tags: &TagVocab,
    rasters: &[(String, Vec<u8>)],
) -> Result<Manifest> {
    fs::create_dir_all(out.join(RASTER_DIR)).map_err(|e| Error::io(out, e))?;
    let mut files = vec![
        FileDigest {
            file: VOCAB_FILE.into(),
            sha256: write_file(&out.join(VOCAB_FILE), vocab.to_text().as_bytes())?,
        },
        FileDigest {
            file: TAGS_FILE.into(),
            sha256: write_file(&out.join(TAGS_FILE), tags.to_text().as_bytes())?,
        },
    ];
    for (name, bytes) in rasters {
        let rel = format!("{RASTER_DIR}/{name}");
        files.push(FileDigest {
            sha256: write_file(&out.join(&rel), bytes)?,
            file: rel,
        });
    }

    let mut shards = Vec::new();
    let mut index = String::new();
    for (k, chunk) in records.chunks(config.records_per_shard).enumerate() {
        let file = format!("shard_{k:05}.bin");
        let mut w = ByteWriter::default();
        w.bytes(&SHARD_MAGIC);
        w.u32(SHARD_VERSION);
        w.u64(chunk.len() as u64);
        for rec in chunk {
            let block = rec.encode();
            w.u64(block.len() as u64);
            let entry = IndexEntry {
                id: rec.id,
                shard: file.clone(),
                offset: w.buf.len() as u64,
                length: block.len() as u64,
                page_id: rec.provenance.page_id.clone(),
                tokens: rec.len(),
            };
            index.push_str(&serde_json::to_string(&entry).expect("index entry serializes"));
            index.push('\n');
            w.bytes(&block);
        }
        let sha256 = write_file(&out.join(&file), &w.buf)?;
        shards.push(ShardInfo {
            file,
            records: chunk.len(),
            sha256,
        });
    }
    files.push(FileDigest {
        file: INDEX_FILE.into(),
        sha256: write_file(&out.join(INDEX_FILE), index.as_bytes())?,
    });

    let manifest = Manifest {
        version: SHARD_VERSION,
        corpus_seed: config.seed,
        config: config.clone(),
        record_count: records.len(),
        shards,
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&out.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

fn read_checked(dir: &Path, file: &str, sha256: &str) -> Result<Vec<u8>> {
    let path = dir.join(file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if sha256_hex(&bytes) != sha256 {
        return Err(Error::Checksum(file.to_string()));
    }
    Ok(bytes)
}

fn decode_shard(bytes: &[u8]) -> Result<Vec<PretrainRecord>> {
    let mut r = ByteReader::new(bytes, "shard");
    if r.take(8)? != SHARD_MAGIC {
        return Err(Error::Format("not a shard (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != SHARD_VERSION {
        return Err(Error::Format(format!("unsupported shard version {version}")));
    }
    let n = r.len()?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.len()?;
        out.push(PretrainRecord::decode(r.take(len)?)?);
    }
    r.finish()?;
    Ok(out)
}

/// A verified, fully loaded shard directory.
#[derive(Clone, Debug)]
pub struct ShardSet {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub records: Vec<PretrainRecord>,
    pub vocab: WordTokenizer,
    pub tags: TagVocab,
}

impl ShardSet {
    /// Loads the manifest, checks every checksum and re-validates each record.
    pub fn open(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", mpath.display())))?;
        let mut vocab = None;
        let mut tags = None;
        for f in &manifest.files {
            let bytes = read_checked(dir, &f.file, &f.sha256)?;
            let text = || String::from_utf8(bytes.clone()).map_err(|e| Error::Format(format!("{}: {e}", f.file)));
            match f.file.as_str() {
                VOCAB_FILE => vocab = Some(WordTokenizer::parse(&text()?)?),
                TAGS_FILE => tags = Some(TagVocab::parse(&text()?)?),
                _ => {}
            }
        }
        let vocab = vocab.ok_or_else(|| Error::Format(format!("manifest lists no {VOCAB_FILE}")))?;
        let tags = tags.ok_or_else(|| Error::Format(format!("manifest lists no {TAGS_FILE}")))?;
        let mut records = Vec::with_capacity(manifest.record_count);
        for s in &manifest.shards {
            let bytes = read_checked(dir, &s.file, &s.sha256)?;
            let recs = decode_shard(&bytes).map_err(|e| Error::Format(format!("{}: {e}", s.file)))?;
            if recs.len() != s.records {
                return Err(Error::Format(format!(
                    "{} holds {} records, manifest says {}",
                    s.file,
                    recs.len(),
                    s.records
                )));
            }
            records.extend(recs);
        }
        if records.len() != manifest.record_count {
            return Err(Error::Format(format!(
                "{} records found, manifest says {}",
                records.len(),
                manifest.record_count
            )));
        }
        for r in &records {
            r.validate()?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            records,
            vocab,
            tags,
        })
    }

    pub fn record(&self, id: u64) -> Option<&PretrainRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn raster_path(&self, record: &PretrainRecord) -> PathBuf {
        self.dir.join(&record.raster.path)
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};

use super::shards::{write_shards, Manifest, RASTER_DIR};
use super::{PageBundle, PipelineConfig, PretrainRecord, Provenance, RasterRef, HTML_FILE};
use crate::dom::{parse_html, simplify_tree, BoundingBox, DomTree, TagVocab};
use crate::error::{Error, Result};
use crate::input::{extract_segments, structural_separate, SegmentRoot};
use crate::objectives::{derive_seed, sample_objectives};
use crate::tokenizer::{Tokenizer, WordTokenizer};
use crate::visual::{normalize_in_frame, NormalizedBox};

/// A bundle after parsing, box attachment and simplification.
#[derive(Clone, Debug)]
pub struct ParsedPage {
    pub page_id: String,
    pub tree: DomTree,
    pub width: i64,
    pub height: i64,
    pub raster: PathBuf,
}

impl ParsedPage {
    pub fn from_bundle(page_id: &str, bundle: &PageBundle, raster: PathBuf, tags: &TagVocab) -> Result<Self> {
        let mut tree = parse_html(&bundle.html, tags)?;
        tree.apply_boxes(&bundle.boxes)?;
        Ok(Self {
            page_id: page_id.to_string(),
            tree: simplify_tree(&tree),
            width: bundle.screenshot.width() as i64,
            height: bundle.screenshot.height() as i64,
            raster,
        })
    }

    pub fn read(dir: &Path, tags: &TagVocab) -> Result<Self> {
        let bundle = PageBundle::read(dir)?;
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_bundle(&id, &bundle, PageBundle::raster_path(dir), tags)
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.tree
            .nodes()
            .iter()
            .flat_map(|n| n.text_runs.iter().map(|r| r.text.as_str()))
    }

    /// Pixel rectangle covered by a segment, clipped to the page.
    pub fn segment_frame(&self, root: &SegmentRoot) -> BoundingBox {
        let page = BoundingBox {
            x0: 0,
            y0: 0,
            w: self.width,
            h: self.height,
        };
        let frame = root
            .tops(&self.tree)
            .into_iter()
            .filter_map(|t| self.tree.effective_box(t))
            .reduce(|a, b| a.union(&b))
            .unwrap_or(page);
        let x0 = frame.x0.clamp(0, self.width - 1);
        let y0 = frame.y0.clamp(0, self.height - 1);
        let x1 = frame.x1().clamp(x0 + 1, self.width);
        let y1 = frame.y1().clamp(y0 + 1, self.height);
        BoundingBox {
            x0,
            y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }
}

/// Vocabulary over every text run of the given pages.
pub fn build_vocab(pages: &[ParsedPage], config: &PipelineConfig) -> WordTokenizer {
    WordTokenizer::build(
        pages.iter().flat_map(|p| p.texts()),
        config.vocab_min_freq,
        config.vocab_max_words,
    )
}

/// Records for one page; ids start at `first_id`.
pub fn page_records(
    page: &ParsedPage,
    page_index: u64,
    raster_path: &str,
    tokenizer: &WordTokenizer,
    config: &PipelineConfig,
    first_id: u64,
) -> Result<Vec<PretrainRecord>> {
    let input = config.input();
    let objectives = config.objectives();
    let tree = &page.tree;
    let roots = extract_segments(tree, tokenizer, config.seg_min, config.seg_max);
    let page_seed = derive_seed(config.seed, page_index);
    let mut out = Vec::with_capacity(roots.len());
    for (k, root) in roots.into_iter().enumerate() {
        let sequence = structural_separate(tree, root, tokenizer, &input)?;
        let frame = page.segment_frame(&root);
        let boxes: Vec<NormalizedBox> = sequence
            .tokens
            .iter()
            .map(|t| normalize_in_frame(&tree.effective_box(t.node).unwrap_or(frame), &frame))
            .collect();
        let seed = derive_seed(page_seed, k as u64);
        let sample = sample_objectives(&sequence, tree, &boxes, tokenizer.vocab_size(), &objectives, seed)?;
        out.push(PretrainRecord {
            id: first_id + k as u64,
            provenance: Provenance {
                page_id: page.page_id.clone(),
                page_index,
                segment_index: k as u64,
                root_path: tree.path_of(root.anchor()),
                seed,
            },
            sequence,
            boxes,
            raster: RasterRef {
                path: raster_path.to_string(),
                crop: frame,
            },
            sample,
        });
    }
    Ok(out)
}

/// Outcome of a `prep` run.
#[derive(Clone, Debug)]
pub struct PrepSummary {
    pub pages_seen: usize,
    pub pages_used: usize,
    /// `(page id, reason)` for bundles that could not be read.
    pub skipped: Vec<(String, String)>,
    pub manifest: Manifest,
}

/// Bundle directories under `input`, sorted by name.
pub fn list_bundles(input: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(input).map_err(|e| Error::io(input, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(HTML_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Turns a directory of page bundles into verified record shards.
pub fn prep(input: &Path, out: &Path, config: &PipelineConfig) -> Result<PrepSummary> {
    config.validate()?;
    let tags = TagVocab::default();
    let dirs = list_bundles(input)?;
    let mut pages = Vec::new();
    let mut skipped = Vec::new();
    for dir in &dirs {
        match ParsedPage::read(dir, &tags) {
            Ok(p) => pages.push(p),
            Err(e) => {
                let id = dir.display().to_string();
                warn!("skipping bundle {id}: {e}");
                skipped.push((id, e.to_string()));
            }
        }
    }
    let tokenizer = build_vocab(&pages, config);

    let mut records = Vec::new();
    let mut rasters = Vec::new();
    let mut used = 0;
    for (i, page) in pages.iter().enumerate() {
        let ext = page.raster.extension().and_then(|e| e.to_str()).unwrap_or("png");
        let name = format!("{}.{ext}", page.page_id);
        let rel = format!("{RASTER_DIR}/{name}");
        let recs = page_records(page, i as u64, &rel, &tokenizer, config, records.len() as u64)?;
        if recs.is_empty() {
            info!("page {} yields no segments", page.page_id);
            continue;
        }
        let bytes = fs::read(&page.raster).map_err(|e| Error::io(&page.raster, e))?;
        rasters.push((name, bytes));
        records.extend(recs);
        used += 1;
    }
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let manifest = write_shards(out, &records, config, &tokenizer, &tags, &rasters)?;
    Ok(PrepSummary {
        pages_seen: dirs.len(),
        pages_used: used,
        skipped,
        manifest,
    })
}

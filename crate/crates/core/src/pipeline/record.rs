use serde::{Deserialize, Serialize};

use crate::codec::{ByteReader, ByteWriter};
use crate::dom::{BoundingBox, NodeId, Relation, TagId};
use crate::error::{Error, Result};
use crate::input::{Segment, SegmentRoot, StructureKind, Token, TokenKind, TokenSequence};
use crate::objectives::{MlmTarget, ObjectiveSample, TspPair, VmdTarget};
use crate::visual::{NormalizedBox, PerturbDirection};

/// Raster file (relative to the shard directory) and the crop a record sees.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterRef {
    pub path: String,
    pub crop: BoundingBox,
}

/// Where a record came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub page_id: String,
    pub page_index: u64,
    /// Index of the segment within its page.
    pub segment_index: u64,
    /// Path of the segment anchor in the simplified tree.
    pub root_path: Vec<usize>,
    pub seed: u64,
}

/// One pre-training example: sequence, per-token boxes, raster reference
/// and sampled objective targets.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainRecord {
    pub id: u64,
    pub sequence: TokenSequence,
    /// Clean per-token boxes in the crop frame.
    pub boxes: Vec<NormalizedBox>,
    pub raster: RasterRef,
    pub sample: ObjectiveSample,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    id: u64,
    root: SegmentRoot,
    raster: RasterRef,
    provenance: Provenance,
}

fn kind_code(k: TokenKind) -> u8 {
    match k {
        TokenKind::Special => 0,
        TokenKind::Structure(StructureKind::StartTag) => 1,
        TokenKind::Structure(StructureKind::EndTag) => 2,
        TokenKind::Structure(StructureKind::LeafTag) => 3,
        TokenKind::Content => 4,
    }
}

fn kind_from(c: u8) -> Result<TokenKind> {
    Ok(match c {
        0 => TokenKind::Special,
        1 => TokenKind::Structure(StructureKind::StartTag),
        2 => TokenKind::Structure(StructureKind::EndTag),
        3 => TokenKind::Structure(StructureKind::LeafTag),
        4 => TokenKind::Content,
        _ => return Err(Error::Format(format!("unknown token kind {c}"))),
    })
}

fn put_box(w: &mut ByteWriter, b: &NormalizedBox) {
    for v in [b.x0, b.x1, b.y0, b.y1] {
        w.u16(v);
    }
}

fn get_box(r: &mut ByteReader<'_>) -> Result<NormalizedBox> {
    let (x0, x1, y0, y1) = (r.u16()?, r.u16()?, r.u16()?, r.u16()?);
    NormalizedBox::new(x0, x1, y0, y1)
}

const NO_LABEL: u32 = u32::MAX;

impl PretrainRecord {
    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// Layout, balance and per-position alignment of every stored array.
    pub fn validate(&self) -> Result<()> {
        self.sequence.validate_layout()?;
        if !self.sequence.is_balanced() {
            return Err(Error::Alignment(format!(
                "record {} has unbalanced structure tokens",
                self.id
            )));
        }
        let n = self.len();
        let lens = [
            ("boxes", self.boxes.len()),
            ("mlm ids", self.sample.mlm.input_ids.len()),
            ("mlm labels", self.sample.mlm.labels.len()),
            ("vmd directions", self.sample.vmd.directions.len()),
            ("vmd boxes", self.sample.vmd.boxes.len()),
        ];
        for (name, len) in lens {
            if len != n {
                return Err(Error::Alignment(format!(
                    "record {}: {len} {name} for {n} tokens",
                    self.id
                )));
            }
        }
        let tokens = &self.sequence.tokens;
        for p in &self.sample.tsp {
            let (s, c) = (p.structure_pos as usize, p.content_pos as usize);
            if s >= n || c >= n || !tokens[s].is_structure() || !tokens[c].is_content() {
                return Err(Error::Alignment(format!("record {}: bad TSP pair ({s}, {c})", self.id)));
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        let meta = Meta {
            id: self.id,
            root: self.sequence.root,
            raster: self.raster.clone(),
            provenance: self.provenance.clone(),
        };
        w.str(&serde_json::to_string(&meta).expect("record metadata serializes"));
        w.u64(self.len() as u64);
        for t in &self.sequence.tokens {
            w.u32(t.id);
            w.u8(kind_code(t.kind));
            w.u32(t.node.0);
            w.u16(t.tag.0);
            w.u8(t.segment.index() as u8);
        }
        for b in &self.boxes {
            put_box(&mut w, b);
        }
        let s = &self.sample;
        w.u64(s.seed);
        for &id in &s.mlm.input_ids {
            w.u32(id);
        }
        for l in &s.mlm.labels {
            w.u32(l.unwrap_or(NO_LABEL));
        }
        w.u64(s.tsp.len() as u64);
        for p in &s.tsp {
            w.u32(p.structure_pos);
            w.u32(p.content_pos);
            w.u8(p.label.index() as u8);
        }
        for d in &s.vmd.directions {
            w.u8(match d {
                None => 0,
                Some(PerturbDirection::Enlarge) => 1,
                Some(PerturbDirection::Reduce) => 2,
            });
        }
        for b in &s.vmd.boxes {
            put_box(&mut w, b);
        }
        w.buf
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf, "record");
        let meta: Meta = serde_json::from_str(&r.str()?).map_err(|e| Error::Format(format!("record metadata: {e}")))?;
        let n = r.len()?;
        let mut tokens = Vec::with_capacity(n);
        for i in 0..n {
            let id = r.u32()?;
            let kind = kind_from(r.u8()?)?;
            let node = NodeId(r.u32()?);
            let tag = TagId(r.u16()?);
            let segment = match r.u8()? {
                0 => Segment::Structure,
                1 => Segment::Content,
                s => return Err(Error::Format(format!("unknown segment {s}"))),
            };
            tokens.push(Token {
                id,
                kind,
                node,
                tag,
                segment,
                pos: i as u32,
            });
        }
        let boxes = (0..n).map(|_| get_box(&mut r)).collect::<Result<Vec<_>>>()?;
        let seed = r.u64()?;
        let input_ids = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let labels = (0..n)
            .map(|_| r.u32().map(|v| (v != NO_LABEL).then_some(v)))
            .collect::<Result<Vec<_>>>()?;
        let pairs = r.len()?;
        let mut tsp = Vec::with_capacity(pairs);
        for _ in 0..pairs {
            let structure_pos = r.u32()?;
            let content_pos = r.u32()?;
            let code = r.u8()?;
            let label =
                Relation::from_index(code as usize).ok_or_else(|| Error::Format(format!("unknown relation {code}")))?;
            tsp.push(TspPair {
                structure_pos,
                content_pos,
                label,
            });
        }
        let directions = (0..n)
            .map(|_| match r.u8()? {
                0 => Ok(None),
                1 => Ok(Some(PerturbDirection::Enlarge)),
                2 => Ok(Some(PerturbDirection::Reduce)),
                d => Err(Error::Format(format!("unknown perturbation {d}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let vmd_boxes = (0..n).map(|_| get_box(&mut r)).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            id: meta.id,
            sequence: TokenSequence {
                tokens,
                root: meta.root,
            },
            boxes,
            raster: meta.raster,
            sample: ObjectiveSample {
                mlm: MlmTarget { input_ids, labels },
                tsp,
                vmd: VmdTarget {
                    directions,
                    boxes: vmd_boxes,
                },
                seed,
            },
            provenance: meta.provenance,
        })
    }
}

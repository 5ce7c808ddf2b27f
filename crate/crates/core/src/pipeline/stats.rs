use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::{PretrainRecord, ShardSet};
use crate::dom::{Relation, TagVocab};
use crate::input::{StructureKind, TokenKind};
use crate::tokenizer::{Tokenizer, PAD_ID};
use crate::visual::PerturbDirection;

const BIN: usize = 64;

/// Corpus-level counts over a set of records.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StatsReport {
    pub records: usize,
    pub positions: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Sequence lengths in bins of 64 tokens, keyed `lo-hi`.
    pub length_histogram: BTreeMap<String, usize>,
    /// Elements per tag name, counted once per start or leaf tag token.
    pub tag_frequency: BTreeMap<String, usize>,
    pub tsp_pairs: usize,
    pub tsp_labels: BTreeMap<String, usize>,
    /// Largest per-record share of Other pairs.
    pub max_other_fraction: f64,
    pub mlm_candidates: usize,
    pub mlm_selected: usize,
    pub mlm_rate: f64,
    pub vmd_candidates: usize,
    pub vmd_selected: usize,
    pub vmd_rate: f64,
    pub vmd_enlarge: usize,
    pub vmd_reduce: usize,
}

fn relation_name(r: Relation) -> &'static str {
    match r {
        Relation::ParentChild => "parent_child",
        Relation::AncestorDescendant => "ancestor_descendant",
        Relation::Other => "other",
    }
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_stats(records: &[PretrainRecord], tags: &TagVocab) -> StatsReport {
    let mut s = StatsReport {
        records: records.len(),
        min_len: records.iter().map(|r| r.len()).min().unwrap_or(0),
        ..StatsReport::default()
    };
    for r in Relation::ALL {
        s.tsp_labels.insert(relation_name(r).into(), 0);
    }
    for rec in records {
        let n = rec.len();
        s.positions += n;
        s.max_len = s.max_len.max(n);
        let lo = n / BIN * BIN;
        *s.length_histogram
            .entry(format!("{lo:04}-{:04}", lo + BIN - 1))
            .or_default() += 1;
        for t in &rec.sequence.tokens {
            if matches!(
                t.kind,
                TokenKind::Structure(StructureKind::StartTag) | TokenKind::Structure(StructureKind::LeafTag)
            ) {
                *s.tag_frequency.entry(tags.name(t.tag).to_string()).or_default() += 1;
            }
            if t.is_content() {
                s.mlm_candidates += 1;
            }
        }
        s.mlm_selected += rec.sample.mlm.selected_count();
        let mut others = 0;
        for p in &rec.sample.tsp {
            *s.tsp_labels.entry(relation_name(p.label).into()).or_default() += 1;
            others += usize::from(p.label == Relation::Other);
        }
        s.tsp_pairs += rec.sample.tsp.len();
        if !rec.sample.tsp.is_empty() {
            s.max_other_fraction = s.max_other_fraction.max(rate(others, rec.sample.tsp.len()));
        }
        for (id, d) in rec.sample.mlm.input_ids.iter().zip(&rec.sample.vmd.directions) {
            if *id == PAD_ID {
                continue;
            }
            s.vmd_candidates += 1;
            match d {
                Some(PerturbDirection::Enlarge) => s.vmd_enlarge += 1,
                Some(PerturbDirection::Reduce) => s.vmd_reduce += 1,
                None => {}
            }
        }
    }
    s.vmd_selected = s.vmd_enlarge + s.vmd_reduce;
    s.mlm_rate = rate(s.mlm_selected, s.mlm_candidates);
    s.vmd_rate = rate(s.vmd_selected, s.vmd_candidates);
    s
}

impl StatsReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "records        {}", self.records);
        let _ = writeln!(out, "positions      {}", self.positions);
        let _ = writeln!(out, "length         min {} max {}", self.min_len, self.max_len);
        let _ = writeln!(
            out,
            "mlm selected   {} / {} ({:.4})",
            self.mlm_selected, self.mlm_candidates, self.mlm_rate
        );
        let _ = writeln!(
            out,
            "vmd selected   {} / {} ({:.4}), enlarge {} reduce {}",
            self.vmd_selected, self.vmd_candidates, self.vmd_rate, self.vmd_enlarge, self.vmd_reduce
        );
        let _ = writeln!(
            out,
            "tsp pairs      {} (max other share {:.3})",
            self.tsp_pairs, self.max_other_fraction
        );
        for (k, v) in &self.tsp_labels {
            let _ = writeln!(out, "  {k:<20} {v}");
        }
        let _ = writeln!(out, "length histogram");
        for (k, v) in &self.length_histogram {
            let _ = writeln!(out, "  {k}  {v}");
        }
        let _ = writeln!(out, "tag frequency");
        let mut tags: Vec<_> = self.tag_frequency.iter().collect();
        tags.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        for (k, v) in tags {
            let _ = writeln!(out, "  {k:<12} {v}");
        }
        out
    }
}

/// Human-readable dump of one record.
pub fn format_record(rec: &PretrainRecord, shards: &ShardSet) -> String {
    let mut out = String::new();
    let p = &rec.provenance;
    let _ = writeln!(
        out,
        "record {} from {} (segment {}, seed {})",
        rec.id, p.page_id, p.segment_index, p.seed
    );
    let _ = writeln!(out, "root {:?} at path {:?}", rec.sequence.root, p.root_path);
    let c = &rec.raster.crop;
    let _ = writeln!(
        out,
        "raster {} crop ({}, {}) {}x{}",
        rec.raster.path, c.x0, c.y0, c.w, c.h
    );
    let _ = writeln!(
        out,
        "{:>4} {:>6} {:<10} {:<8} {:<3} {:>5} {:<20} {:<22} targets",
        "pos", "id", "token", "tag", "seg", "node", "box", "vmd box"
    );
    let s = &rec.sample;
    for (i, t) in rec.sequence.tokens.iter().enumerate() {
        let text = match t.kind {
            TokenKind::Structure(k) => format!("{k:?}"),
            _ => shards.vocab.token(t.id).unwrap_or("?").to_string(),
        };
        let b = rec.boxes[i];
        let v = s.vmd.boxes[i];
        let mut targets = String::new();
        if let Some(l) = s.mlm.labels[i] {
            let shown = shards.vocab.token(s.mlm.input_ids[i]).unwrap_or("?");
            let _ = write!(targets, "mlm {shown}->{} ", shards.vocab.token(l).unwrap_or("?"));
        }
        if let Some(d) = s.vmd.directions[i] {
            let _ = write!(targets, "vmd {d:?} ");
        }
        let _ = writeln!(
            out,
            "{i:>4} {:>6} {text:<10} {:<8} {:<3} {:>5} {:<20} {:<22} {targets}",
            t.id,
            shards.tags.name(t.tag),
            if t.segment.index() == 0 { "S" } else { "C" },
            t.node.0,
            format!("{},{},{},{}", b.x0, b.x1, b.y0, b.y1),
            format!("{},{},{},{}", v.x0, v.x1, v.y0, v.y1),
        );
    }
    let _ = writeln!(out, "tsp pairs ({})", s.tsp.len());
    for pair in &s.tsp {
        let _ = writeln!(
            out,
            "  {} -> {} {}",
            pair.structure_pos,
            pair.content_pos,
            relation_name(pair.label)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_gives_zeroed_report() {
        let r = compute_stats(&[], &TagVocab::default());
        assert_eq!(r.records, 0);
        assert_eq!(r.positions, 0);
        assert_eq!(r.mlm_rate, 0.0);
        assert_eq!(r.vmd_rate, 0.0);
        assert!(r.tsp_labels.values().all(|&v| v == 0));
    }
}

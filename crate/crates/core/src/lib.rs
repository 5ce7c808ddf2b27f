//! # weblm
//!
//! Webpage-understanding pre-training at desk scale: DOM-aware input
//! construction with structure/content separation, region-of-structure
//! visual pooling, the three pre-training objectives (masked language
//! modeling, tree structure prediction, visual misalignment detection)
//! and a small transformer encoder with hand-written gradients.
//!
//! ```text
//! page.html ──parse──▶ DomTree ──simplify──▶ rendering tree ──segments──▶ TokenSequence
//! boxes.jsonl ─────────────┘                                                  │
//! screenshot ──resize──▶ FeatureGrid ──RoS pool──▶ per-token visual features ─┤
//!                                                                             ▼
//!                               objectives (MLM / TSP / VMD) ──▶ encoder ──▶ losses
//! ```

mod codec;
pub mod dom;
pub mod encoder;
pub mod error;
pub mod input;
pub mod objectives;
pub mod pipeline;
pub mod tokenizer;
pub mod visual;

pub use error::{Error, Result};

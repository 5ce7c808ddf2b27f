use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_vocab, generate_page, page_records, CorpusSpec, ParsedPage, PipelineConfig, PretrainRecord, ShardSet,
};
use crate::dom::TagVocab;
use crate::encoder::{
    grad_check, train_step, EncoderInput, GradCheckReport, LinearSchedule, ModelConfig, ModelParams, OptimizerState,
    StepReport, Targets, TrainingState,
};
use crate::error::{Error, Result};
use crate::objectives::derive_seed;
use crate::tokenizer::Tokenizer;
use crate::visual::{patch_statistics, resize_image, Screenshot};

const BATCH_STREAM: u64 = 0xba7c_4e5d;

/// Options for a training run.
#[derive(Clone, Debug)]
pub struct TrainOptions {
    /// Optimizer steps to run in this invocation.
    pub steps: u64,
    /// Where the final (or last good) checkpoint is written.
    pub checkpoint: PathBuf,
    /// Per-step loss log; truncated on a fresh run, appended on resume.
    pub metrics: Option<PathBuf>,
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
}

/// One line of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub step: u64,
    pub lr: f64,
    pub mlm: f64,
    pub tsp: f64,
    pub vmd: f64,
    pub total: f64,
}

impl From<&StepReport> for MetricsLine {
    fn from(r: &StepReport) -> Self {
        Self {
            step: r.step,
            lr: r.lr,
            mlm: r.losses.mlm,
            tsp: r.losses.tsp,
            vmd: r.losses.vmd,
            total: r.losses.total,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub reports: Vec<StepReport>,
    pub state: TrainingState,
}

/// Patch statistics of a record's crop, resized to the model's image side.
pub fn crop_patch_stats(raster: &Screenshot, record: &PretrainRecord, config: &PipelineConfig) -> Result<Array2<f64>> {
    let c = &record.raster.crop;
    let crop = raster.crop(c.x0, c.y0, c.w, c.h)?;
    let resized = resize_image(&crop, config.image_side)?;
    Ok(patch_statistics(&resized, config.grid_side))
}

/// Encoder inputs and targets for every record, loading each raster once.
pub fn training_examples(shards: &ShardSet, config: &PipelineConfig) -> Result<Vec<(EncoderInput, Targets)>> {
    let mut rasters: HashMap<PathBuf, Screenshot> = HashMap::new();
    let mut out = Vec::with_capacity(shards.records.len());
    for rec in &shards.records {
        let path = shards.raster_path(rec);
        if !rasters.contains_key(&path) {
            rasters.insert(path.clone(), Screenshot::load(&path)?);
        }
        let stats = crop_patch_stats(&rasters[&path], rec, config)?;
        out.push((
            EncoderInput::from_sample(&rec.sequence, &rec.sample, stats)?,
            Targets::from_sample(&rec.sample),
        ));
    }
    Ok(out)
}

/// Model shape for a shard set: sizes from `config`, vocabularies from the shards.
pub fn model_config_for(shards: &ShardSet, config: &PipelineConfig) -> ModelConfig {
    let rows = shards
        .manifest
        .config
        .structure_vocab
        .embedding_rows(shards.vocab.vocab_size(), shards.tags.len());
    config.model(rows, shards.tags.len())
}

/// Record indices for a step, drawn without replacement.
pub fn batch_indices(seed: u64, step: u64, records: usize, batch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ BATCH_STREAM, step));
    rand::seq::index::sample(&mut rng, records, batch.min(records)).into_vec()
}

#[derive(Serialize, Deserialize)]
struct RunExtra {
    batch_size: usize,
    seed: u64,
}

fn open_metrics(path: &Path, append: bool) -> Result<BufWriter<File>> {
    let file = if append {
        OpenOptions::new().create(true).append(true).open(path)
    } else {
        File::create(path)
    };
    Ok(BufWriter::new(file.map_err(|e| Error::io(path, e))?))
}

/// Trains on a shard set, writing a checkpoint at the end. On a numerical
/// failure the last good state is saved before the error is returned.
pub fn train_toy(shards: &ShardSet, config: &PipelineConfig, opts: &TrainOptions) -> Result<TrainSummary> {
    config.validate()?;
    let model = model_config_for(shards, config);
    model.validate()?;
    let extra = RunExtra {
        batch_size: config.batch_size,
        seed: config.seed,
    };
    let mut state = match &opts.resume {
        Some(path) => {
            let state = TrainingState::load(path)?;
            if state.config != model {
                return Err(Error::Config(format!(
                    "{} was trained with a different model configuration",
                    path.display()
                )));
            }
            let prev: RunExtra = serde_json::from_value(state.extra.clone())
                .map_err(|e| Error::Format(format!("{}: run settings: {e}", path.display())))?;
            if prev.batch_size != extra.batch_size || prev.seed != extra.seed {
                return Err(Error::Config(format!(
                    "{} used batch size {} and seed {}",
                    path.display(),
                    prev.batch_size,
                    prev.seed
                )));
            }
            info!("resuming from {} at step {}", path.display(), state.opt.step);
            state
        }
        None => {
            let params = ModelParams::init(&model, &shards.tags, None)?;
            let horizon = config.total_steps.unwrap_or(opts.steps).max(1);
            let adam = config.adam();
            TrainingState {
                schedule: LinearSchedule::new(adam.lr, adam.warmup_ratio, horizon),
                opt: OptimizerState::new(&params),
                config: model,
                adam,
                params,
                extra: serde_json::to_value(&extra).map_err(|e| Error::Format(e.to_string()))?,
            }
        }
    };
    let examples = training_examples(shards, config)?;
    if examples.is_empty() {
        return Err(Error::NoRecords);
    }
    let mut metrics = opts
        .metrics
        .as_deref()
        .map(|p| open_metrics(p, opts.resume.is_some()))
        .transpose()?;
    let mut reports = Vec::with_capacity(opts.steps as usize);
    for _ in 0..opts.steps {
        let step = state.opt.step + 1;
        let batch: Vec<_> = batch_indices(config.seed, step, examples.len(), config.batch_size)
            .into_iter()
            .map(|i| (&examples[i].0, &examples[i].1))
            .collect();
        let good = (state.params.clone(), state.opt.clone());
        match train_step(
            &mut state.params,
            &mut state.opt,
            &batch,
            &state.config,
            &state.adam,
            &state.schedule,
        ) {
            Ok(report) => {
                if let Some(w) = metrics.as_mut() {
                    let line =
                        serde_json::to_string(&MetricsLine::from(&report)).map_err(|e| Error::Format(e.to_string()))?;
                    writeln!(w, "{line}")
                        .map_err(|e| Error::io(opts.metrics.as_deref().unwrap_or(Path::new("")), e))?;
                }
                info!(
                    "step {} lr {:.3e} loss {:.4}",
                    report.step, report.lr, report.losses.total
                );
                reports.push(report);
            }
            Err(e) => {
                (state.params, state.opt) = good;
                warn!("{e}; saving last good state at step {}", state.opt.step);
                state.save(&opts.checkpoint, config.checkpoint_dtype)?;
                return Err(e);
            }
        }
    }
    if let Some(mut w) = metrics {
        w.flush()
            .map_err(|e| Error::io(opts.metrics.as_deref().unwrap_or(Path::new("")), e))?;
    }
    if let Some(dir) = opts.checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    state.save(&opts.checkpoint, config.checkpoint_dtype)?;
    Ok(TrainSummary { reports, state })
}

/// Gradient check on a freshly generated page at random initialization,
/// using the `gradcheck_*` sizes from `config`.
pub fn gradcheck_from_config(config: &PipelineConfig) -> Result<GradCheckReport> {
    config.validate()?;
    let tags = TagVocab::default();
    let spec = CorpusSpec {
        pages: 1,
        seed: config.seed,
        ..CorpusSpec::default()
    };
    for attempt in 0..32 {
        let bundle = generate_page(&spec, spec.page_seed(attempt))?;
        let page = ParsedPage::from_bundle("gradcheck", &bundle, PathBuf::new(), &tags)?;
        let vocab = build_vocab(std::slice::from_ref(&page), config);
        let records = page_records(&page, attempt as u64, "", &vocab, config, 0)?;
        let Some(rec) = records.first() else { continue };
        let stats = crop_patch_stats(&bundle.screenshot, rec, config)?;
        let input = EncoderInput::from_sample(&rec.sequence, &rec.sample, stats)?;
        let targets = Targets::from_sample(&rec.sample);
        let rows = config.structure_vocab.embedding_rows(vocab.vocab_size(), tags.len());
        let model = ModelConfig {
            dropout: 0.0,
            ..ModelConfig::sized(
                config.gradcheck_hidden,
                config.gradcheck_layers,
                config.gradcheck_heads,
                rows,
                tags.len(),
            )
        };
        let model = ModelConfig {
            max_positions: config.max_positions,
            grid_side: config.grid_side,
            seed: config.seed,
            ..model
        };
        let params = ModelParams::init(&model, &tags, None)?;
        return grad_check(
            &params,
            &model,
            &input,
            &targets,
            config.gradcheck_epsilon,
            config.gradcheck_samples,
            config.seed,
        );
    }
    Err(Error::NoRecords)
}

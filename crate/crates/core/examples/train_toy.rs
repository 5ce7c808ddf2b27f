//! Train a small encoder on a synthetic corpus, then resume from the
//! checkpoint and confirm the result matches an uninterrupted run.

use std::fs;

use weblm::pipeline::{generate_corpus, prep, train_toy, CorpusSpec, PipelineConfig, ShardSet, TrainOptions};

fn main() -> weblm::Result<()> {
    let dir = std::env::temp_dir().join("weblm-train-toy");
    let _ = fs::remove_dir_all(&dir);
    generate_corpus(
        &CorpusSpec {
            pages: 6,
            seed: 1,
            ..CorpusSpec::default()
        },
        &dir.join("pages"),
    )?;
    let cfg = PipelineConfig {
        hidden: 24,
        layers: 1,
        heads: 2,
        ff: 96,
        lr: 1e-3,
        batch_size: 4,
        total_steps: Some(40),
        ..PipelineConfig::default()
    };
    prep(&dir.join("pages"), &dir.join("shards"), &cfg)?;
    let shards = ShardSet::open(&dir.join("shards"))?;

    let run = |name: &str, steps, resume| {
        let opts = TrainOptions {
            steps,
            checkpoint: dir.join(name),
            metrics: Some(dir.join("metrics.jsonl")),
            resume,
        };
        train_toy(&shards, &cfg, &opts)
    };
    let full = run("full.bin", 40, None)?;
    for r in full.reports.iter().step_by(8) {
        println!(
            "step {:>3} lr {:.1e} mlm {:.3} tsp {:.3} vmd {:.3}",
            r.step, r.lr, r.losses.mlm, r.losses.tsp, r.losses.vmd
        );
    }

    run("half.bin", 20, None)?;
    run("half.bin", 20, Some(dir.join("half.bin")))?;
    let same = fs::read(dir.join("full.bin")).ok() == fs::read(dir.join("half.bin")).ok();
    println!("resumed checkpoint identical to uninterrupted run: {same}");
    Ok(())
}

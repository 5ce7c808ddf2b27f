//! Compare backpropagated gradients with finite differences on a generated
//! page, at random initialization.

use weblm::pipeline::{gradcheck_from_config, PipelineConfig};

fn main() -> weblm::Result<()> {
    let cfg = PipelineConfig::default();
    let report = gradcheck_from_config(&cfg)?;
    println!(
        "C={} L={}: {} entries across {} tensors, max relative error {:.2e} ({})",
        cfg.gradcheck_hidden, cfg.gradcheck_layers, report.checked, report.tensors, report.max_rel_error, report.worst
    );
    Ok(())
}

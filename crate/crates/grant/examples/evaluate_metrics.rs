//! Train briefly on an imbalanced classification dataset, checkpoint, reload,
//! and report loss / ROC-AUC / AP; also shows the metric primitives on a
//! hand-checkable case.
//!
//! ```bash
//! cargo run --release --example evaluate_metrics
//! ```

use grant::flexgcn::{load_checkpoint, save_checkpoint, LayerSpec, LossKind, Pooling};
use grant::graph::{Dataset, Level};
use grant::metrics::{average_precision, mae, roc_auc};
use grant::synth::{generate_dataset, SynthConfig, SynthTask};
use grant::teaching::SelectionPolicy;
use grant::trainer::{evaluate, train, MetricKind, TrainerConfig};

fn main() -> grant::Result<()> {
    // Hand-checkable primitives first.
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [false, false, true, true];
    println!("roc_auc({scores:?}) = {}", roc_auc(&scores, &labels)?);
    let scores = [0.9, 0.8, 0.7];
    let labels = [true, false, true];
    println!("ap({scores:?})      = {:.6}", average_precision(&scores, &labels)?);
    println!("mae                 = {}", mae(&[1.0, 3.0], &[0.0, 1.0])?);

    // End to end: generate, train, checkpoint, reload, evaluate.
    let out = std::env::temp_dir().join("grant-example-eval");
    let cfg = SynthConfig {
        resolution: 200,
        nodes_mean: 20,
        num_graphs: 500,
        feature_dim: 8,
        task: SynthTask::Cls,
        threshold_pct: 80.0,
        split: (400, 0, 100),
        ..SynthConfig::default()
    };
    let files = generate_dataset(&cfg, &out)?;
    let train_ds = Dataset::load(&files.train)?;
    let test_ds = Dataset::load(&files.test)?;

    let spec = LayerSpec::new(vec![8, 32, 1], vec![2, 2], Pooling::None)?;
    let trainer = TrainerConfig::new(0.05, 50, 40, LossKind::BceWithLogits, 2);
    let policy = SelectionPolicy::none(Level::Node);
    let (params, _) = train(&trainer, &spec, &train_ds, None, &policy, &mut ())?;

    let ckpt = out.join("model.json");
    save_checkpoint(&params, &spec, &ckpt)?;
    let (spec2, params2) = load_checkpoint(&ckpt)?;
    let report = evaluate(
        &params2,
        &spec2,
        &test_ds,
        LossKind::BceWithLogits,
        &[MetricKind::RocAuc, MetricKind::Ap],
    )?;
    println!("test report: {}", serde_json::to_string_pretty(&report.values).unwrap());
    Ok(())
}

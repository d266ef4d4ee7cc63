//! Train a flexible GCN on a synthetic node-regression dataset, no
//! selection, and print the last few log rows.
//!
//! ```bash
//! cargo run --release --example train_baseline
//! ```

use grant::flexgcn::{LayerSpec, LossKind, Pooling};
use grant::graph::{Dataset, Level};
use grant::synth::{generate_dataset, SynthConfig, SynthTask};
use grant::teaching::SelectionPolicy;
use grant::trainer::{train, TrainerConfig};

fn main() -> grant::Result<()> {
    let out = std::env::temp_dir().join("grant-example-baseline");
    let cfg = SynthConfig {
        resolution: 200,
        nodes_mean: 20,
        num_graphs: 400,
        feature_dim: 8,
        task: SynthTask::Reg,
        split: (300, 100, 0),
        ..SynthConfig::default()
    };
    let files = generate_dataset(&cfg, &out)?;
    let train_ds = Dataset::load(&files.train)?;
    let val_ds = Dataset::load(&files.val)?;

    let spec = LayerSpec::new(vec![8, 32, 1], vec![3, 2], Pooling::None)?;
    let trainer = TrainerConfig::new(0.02, 50, 30, LossKind::Mse, 1);
    let policy = SelectionPolicy::none(Level::Node);
    let (_, log) = train(&trainer, &spec, &train_ds, Some(&val_ds), &policy, &mut ())?;

    println!("epoch  train_loss    val_loss      val_mae");
    for rec in log.records.iter().rev().take(5).rev() {
        println!(
            "{:>5}  {:<12.6e}  {:<12.6e}  {:.6e}",
            rec.epoch, rec.train_loss, rec.val_loss, rec.metric
        );
    }
    println!("{}", serde_json::to_string_pretty(&log.summary_json()).unwrap());
    Ok(())
}

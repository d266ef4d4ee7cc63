//! Estimate the kernel-based safe learning rate and verify that full-batch
//! descent at that rate never increases the loss.
//!
//! ```bash
//! cargo run --release --example descent_bound
//! ```

use grant::flexgcn::{loss_grad, GcnParams, LayerSpec, LossKind, Pooling};
use grant::graph::{Dataset, Graph};
use grant::synth::{generate_dataset, SynthConfig, SynthTask};
use grant::trainer::{estimate_descent_bound, sgd_step};

fn main() -> grant::Result<()> {
    let out = std::env::temp_dir().join("grant-example-bound");
    let cfg = SynthConfig {
        resolution: 200,
        nodes_mean: 20,
        num_graphs: 32,
        feature_dim: 8,
        task: SynthTask::Reg,
        split: (32, 0, 0),
        teacher_scale: 0.1,
        ..SynthConfig::default()
    };
    let files = generate_dataset(&cfg, &out)?;
    let train_ds = Dataset::load(&files.train)?.pooled_to_graph_level()?;
    let refs: Vec<&Graph> = train_ds.graphs().iter().collect();

    let spec = LayerSpec::new(vec![8, 16, 1], vec![2, 2], Pooling::Sum)?;
    let mut params = GcnParams::init(&spec, 9, 0.1)?;

    let probe = estimate_descent_bound(&spec, &params, &refs)?;
    println!(
        "tau = {}, gamma = {:.6e}, lr bound = {:.6e}",
        probe.tau, probe.gamma, probe.lr_bound
    );

    let mut last = f64::INFINITY;
    let mut increases = 0;
    for step in 0..200 {
        let (loss, grad) = loss_grad(&params, &spec, &refs, LossKind::Mse)?;
        if loss > last {
            increases += 1;
        }
        last = loss;
        sgd_step(&mut params, &grad, probe.lr_bound)?;
        if step % 40 == 0 {
            println!("step {step:>3}: loss {loss:.9e}");
        }
    }
    println!("loss increases over 200 steps at the bound: {increases}");
    Ok(())
}

//! Track the tangent kernel along a training run: the kernel moves a lot
//! early and settles as the loss flattens.
//!
//! ```bash
//! cargo run --release --example kernel_drift
//! ```

use grant::flexgcn::{loss_grad, GcnParams, LayerSpec, LossKind, Pooling};
use grant::gntk::{gntk_matrix, kernel_drift};
use grant::graph::{Dataset, Graph};
use grant::synth::{generate_dataset, SynthConfig, SynthTask};
use grant::trainer::sgd_step;

fn main() -> grant::Result<()> {
    let out = std::env::temp_dir().join("grant-example-drift");
    let cfg = SynthConfig {
        resolution: 200,
        nodes_mean: 20,
        num_graphs: 64,
        feature_dim: 8,
        task: SynthTask::Reg,
        split: (64, 0, 0),
        teacher_scale: 0.05,
        ..SynthConfig::default()
    };
    let files = generate_dataset(&cfg, &out)?;
    // Kernel probes need scalar graph-level outputs; sum the node targets.
    let train_ds = Dataset::load(&files.train)?.pooled_to_graph_level()?;
    let refs: Vec<&Graph> = train_ds.graphs().iter().collect();
    let probe: Vec<&Graph> = refs[..16].to_vec();

    let spec = LayerSpec::new(vec![8, 16, 1], vec![2, 2], Pooling::Sum)?;
    let mut params = GcnParams::init(&spec, 3, 0.05)?;

    let mut kernels = vec![gntk_matrix(&params, &spec, &probe, None, "step0")?];
    let lr = 2e-3;
    for step in 1..=400 {
        let (loss, grad) = loss_grad(&params, &spec, &refs, LossKind::Mse)?;
        sgd_step(&mut params, &grad, lr)?;
        if step % 50 == 0 {
            kernels.push(gntk_matrix(&params, &spec, &probe, None, format!("step{step}"))?);
            println!("step {step:>4}: loss {loss:.6e}");
        }
    }
    println!("\ninterval            drift");
    for (i, pair) in kernels.windows(2).enumerate() {
        let d = kernel_drift(&pair[0], &pair[1])?;
        println!("[{:>4}, {:>4})   {d:.6e}", i * 50, (i + 1) * 50);
    }
    Ok(())
}

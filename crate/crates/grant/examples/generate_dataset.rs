//! Generate a small synthetic graphon dataset and inspect what was written.
//!
//! ```bash
//! cargo run --release --example generate_dataset
//! ```

use grant::graph::Dataset;
use grant::synth::{generate_dataset, GraphonKind, SynthConfig, SynthTask};

fn main() -> grant::Result<()> {
    let out = std::env::temp_dir().join("grant-example-dataset");
    let cfg = SynthConfig {
        graphon: GraphonKind::Gradient,
        resolution: 200,
        nodes_mean: 30,
        num_graphs: 300,
        feature_dim: 8,
        task: SynthTask::Reg,
        split: (200, 50, 50),
        ..SynthConfig::default()
    };
    let files = generate_dataset(&cfg, &out)?;
    println!("wrote {}", out.display());

    let train = Dataset::load(&files.train)?;
    println!(
        "train: {} graphs, d={}, task={}",
        train.len(),
        train.d(),
        train.task()
    );
    let nodes: Vec<usize> = train.graphs().iter().map(|g| g.n()).collect();
    let edges: Vec<usize> = train.graphs().iter().map(|g| g.edge_count()).collect();
    println!(
        "nodes: min {} max {}; mean edges {:.1}",
        nodes.iter().min().unwrap(),
        nodes.iter().max().unwrap(),
        edges.iter().sum::<usize>() as f64 / edges.len() as f64
    );
    println!("metadata: {}", std::fs::read_to_string(&files.metadata)?.trim_end());
    Ok(())
}

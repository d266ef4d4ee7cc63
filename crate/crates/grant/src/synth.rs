//! Graphon-based synthetic datasets: sample graphs from a gridded graphon,
//! align nodes by sorted degree, draw standard-normal features, and label
//! every node with a fixed teacher network. Regression keeps the teacher's
//! outputs; classification thresholds them at a dataset-wide percentile so
//! the labels come out imbalanced.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flexgcn::{self, GcnParams, LayerSpec, Output, Pooling};
use crate::graph::{Dataset, Graph, Target, TaskKind};

pub const DEFAULT_RESOLUTION: usize = 1000;

/// Functional form of the graphon, evaluated on an R x R grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphonKind {
    /// W(u, v) = p.
    Constant { p: f64 },
    /// W(u, v) = u * v; degree-sortable and nondegenerate.
    Gradient,
    /// Two equal blocks split at 1/2 with within/between probabilities.
    StochasticBlock { p_in: f64, p_out: f64 },
}

impl std::fmt::Display for GraphonKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GraphonKind::Constant { p } => write!(f, "constant(p={p})"),
            GraphonKind::Gradient => write!(f, "gradient"),
            GraphonKind::StochasticBlock { p_in, p_out } => {
                write!(f, "stochastic-block(p_in={p_in},p_out={p_out})")
            }
        }
    }
}

/// Edge-probability limit object on a symmetric grid of resolution R x R.
#[derive(Debug, Clone)]
pub struct Graphon {
    grid: Array2<f64>,
    kind: GraphonKind,
}

impl Graphon {
    pub fn new(kind: GraphonKind, resolution: usize) -> Result<Graphon> {
        if resolution == 0 {
            return Err(Error::InvalidArgument("graphon resolution must be positive".into()));
        }
        let check = |p: f64, what: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{what} must lie in [0, 1], got {p}"
                )))
            }
        };
        match kind {
            GraphonKind::Constant { p } => check(p, "constant graphon p")?,
            GraphonKind::Gradient => {}
            GraphonKind::StochasticBlock { p_in, p_out } => {
                check(p_in, "p_in")?;
                check(p_out, "p_out")?;
            }
        }
        let r = resolution;
        let cell = |i: usize| (i as f64 + 0.5) / r as f64;
        let grid = Array2::from_shape_fn((r, r), |(i, j)| match kind {
            GraphonKind::Constant { p } => p,
            GraphonKind::Gradient => cell(i) * cell(j),
            GraphonKind::StochasticBlock { p_in, p_out } => {
                let same = (cell(i) < 0.5) == (cell(j) < 0.5);
                if same {
                    p_in
                } else {
                    p_out
                }
            }
        });
        Ok(Graphon { grid, kind })
    }

    pub fn kind(&self) -> GraphonKind {
        self.kind
    }

    pub fn resolution(&self) -> usize {
        self.grid.nrows()
    }

    /// Edge probability by nearest-grid lookup of the latent coordinates.
    pub fn value(&self, u: f64, v: f64) -> f64 {
        let r = self.grid.nrows();
        let idx = |t: f64| (((t * r as f64) as usize).min(r - 1)).max(0);
        self.grid[(idx(u), idx(v))]
    }
}

/// Sampled structure and features, not yet labeled.
#[derive(Debug, Clone)]
pub struct UnlabeledGraph {
    pub x: Array2<f64>,
    pub adj: Array2<f64>,
}

/// Samples one graph: latent positions uniform on [0, 1], independent edges
/// with graphon probability, nodes relabeled so degrees are nondecreasing
/// (ties broken by latent position), and i.i.d. standard-normal features.
pub fn sample_graph(graphon: &Graphon, n: usize, feature_dim: usize, seed: u64) -> Result<UnlabeledGraph> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2 nodes, got {n}")));
    }
    if feature_dim == 0 {
        return Err(Error::InvalidArgument("feature_dim must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let latent: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let mut adj = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < graphon.value(latent[i], latent[j]) {
                adj[(i, j)] = 1.0;
                adj[(j, i)] = 1.0;
            }
        }
    }
    // Degree-aligned relabeling.
    let degrees: Vec<f64> = adj.rows().into_iter().map(|r| r.sum()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        degrees[a]
            .partial_cmp(&degrees[b])
            .unwrap()
            .then(latent[a].partial_cmp(&latent[b]).unwrap())
    });
    let mut sorted_adj = Array2::zeros((n, n));
    for (new_i, &old_i) in order.iter().enumerate() {
        for (new_j, &old_j) in order.iter().enumerate() {
            sorted_adj[(new_i, new_j)] = adj[(old_i, old_j)];
        }
    }
    let x = Array2::from_shape_fn((n, feature_dim), |_| StandardNormal.sample(&mut rng));
    Ok(UnlabeledGraph { x, adj: sorted_adj })
}

/// Node-level teacher outputs for a set of sampled graphs.
fn teacher_outputs(
    graphs: &[UnlabeledGraph],
    teacher: &GcnParams,
    teacher_spec: &LayerSpec,
) -> Result<Vec<Array2<f64>>> {
    if teacher_spec.pooling != Pooling::None || teacher_spec.output_dim() != 1 {
        return Err(Error::UnsupportedTask(
            "teacher must be node-level (no pooling) with output dimension 1".into(),
        ));
    }
    graphs
        .par_iter()
        .map(|ug| {
            let g = Graph::new(
                ug.x.clone(),
                ug.adj.clone(),
                Target::node(Array2::zeros((ug.x.nrows(), 1))),
            )?;
            match flexgcn::predict(teacher, teacher_spec, &g)? {
                Output::Node(m) => Ok(m),
                Output::Graph(_) => unreachable!("teacher pooling checked"),
            }
        })
        .collect()
}

/// Labels sampled graphs with a fixed teacher network. Regression keeps
/// each node's teacher output; classification thresholds outputs at the
/// dataset-wide percentile (`threshold_pct` in (0, 100)), labeling 1 above
/// it. Returns the targets and the threshold used (NaN for regression).
pub fn label_with_teacher(
    graphs: &[UnlabeledGraph],
    teacher: &GcnParams,
    teacher_spec: &LayerSpec,
    classification: bool,
    threshold_pct: f64,
) -> Result<(Vec<Target>, f64)> {
    let outputs = teacher_outputs(graphs, teacher, teacher_spec)?;
    if !classification {
        return Ok((outputs.into_iter().map(Target::node).collect(), f64::NAN));
    }
    if !(threshold_pct > 0.0 && threshold_pct < 100.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold percentile must lie in (0, 100), got {threshold_pct}"
        )));
    }
    let mut all: Vec<f64> = outputs.iter().flat_map(|m| m.iter().copied()).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let threshold = percentile_sorted(&all, threshold_pct);
    let targets = outputs
        .into_iter()
        .map(|m| Target::node(m.mapv(|v| if v > threshold { 1.0 } else { 0.0 })))
        .collect();
    Ok((targets, threshold))
}

/// Linear-interpolation percentile of an ascending-sorted slice.
fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthTask {
    Reg,
    Cls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub graphon: GraphonKind,
    pub resolution: usize,
    pub nodes_mean: usize,
    pub num_graphs: usize,
    pub feature_dim: usize,
    pub task: SynthTask,
    /// Hidden width of the fixed 2-layer teacher.
    pub teacher_hidden: usize,
    pub teacher_kappas: (usize, usize),
    pub teacher_seed: u64,
    pub teacher_scale: f64,
    pub dataset_seed: u64,
    pub split: (usize, usize, usize),
    pub split_seed: u64,
    /// Classification threshold percentile over all teacher outputs.
    pub threshold_pct: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            graphon: GraphonKind::Gradient,
            resolution: DEFAULT_RESOLUTION,
            nodes_mean: 100,
            num_graphs: 50_000,
            feature_dim: 40,
            task: SynthTask::Reg,
            teacher_hidden: 16,
            teacher_kappas: (2, 2),
            teacher_seed: 7,
            teacher_scale: 1.0,
            dataset_seed: 0,
            split: (30_000, 10_000, 10_000),
            split_seed: 0,
            threshold_pct: 80.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_mean < 2 {
            return Err(Error::Config("nodes_mean must be >= 2".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be >= 1".into()));
        }
        if self.num_graphs == 0 {
            return Err(Error::Config("num_graphs must be >= 1".into()));
        }
        let (tr, va, te) = self.split;
        if tr + va + te > self.num_graphs {
            return Err(Error::Config(format!(
                "split {tr}+{va}+{te} exceeds num_graphs {}",
                self.num_graphs
            )));
        }
        if self.teacher_hidden == 0 {
            return Err(Error::Config("teacher_hidden must be >= 1".into()));
        }
        Ok(())
    }

    pub fn teacher_spec(&self) -> Result<LayerSpec> {
        LayerSpec::new(
            vec![self.feature_dim, self.teacher_hidden, 1],
            vec![self.teacher_kappas.0, self.teacher_kappas.1],
            Pooling::None,
        )
    }
}

/// Files written by [`generate_dataset`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedFiles {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
    pub metadata: PathBuf,
    pub teacher_checkpoint: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    graphon: GraphonKind,
    resolution: usize,
    nodes_mean: usize,
    num_graphs: usize,
    feature_dim: usize,
    task: SynthTask,
    teacher_checkpoint: String,
    teacher_seed: u64,
    teacher_scale: f64,
    dataset_seed: u64,
    split: (usize, usize, usize),
    split_seed: u64,
    threshold_pct: f64,
    threshold_value: f64,
}

/// Generates, labels, splits, and writes a synthetic dataset.
///
/// Node counts are drawn uniformly from +/-10% of `nodes_mean`; every graph
/// gets its own seed derived from the dataset seed, so parallel sampling is
/// reproducible. Writes `train/val/test.jsonl`, the teacher checkpoint, and
/// a metadata sidecar sufficient to regenerate the files bit-identically.
pub fn generate_dataset(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<GeneratedFiles> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let graphon = Graphon::new(cfg.graphon, cfg.resolution)?;
    let lo = ((cfg.nodes_mean as f64) * 0.9).round() as usize;
    let hi = ((cfg.nodes_mean as f64) * 1.1).round() as usize;
    let (lo, hi) = (lo.max(2), hi.max(2));

    // Per-graph seeds and node counts come from one master stream so the
    // parallel sampling below cannot perturb them.
    let mut master = ChaCha20Rng::seed_from_u64(cfg.dataset_seed);
    let plans: Vec<(u64, usize)> = (0..cfg.num_graphs)
        .map(|_| (master.random::<u64>(), master.random_range(lo..=hi)))
        .collect();
    let sampled: Vec<UnlabeledGraph> = plans
        .par_iter()
        .map(|&(seed, n)| sample_graph(&graphon, n, cfg.feature_dim, seed))
        .collect::<Result<Vec<_>>>()?;

    let teacher_spec = cfg.teacher_spec()?;
    let teacher = GcnParams::init(&teacher_spec, cfg.teacher_seed, cfg.teacher_scale)?;
    let classification = cfg.task == SynthTask::Cls;
    let (targets, threshold) = label_with_teacher(
        &sampled,
        &teacher,
        &teacher_spec,
        classification,
        cfg.threshold_pct,
    )?;

    let task = if classification {
        TaskKind::NodeClassification
    } else {
        TaskKind::NodeRegression
    };
    let graphs: Vec<Graph> = sampled
        .into_iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (ug, t))| Graph::new_indexed(ug.x, ug.adj, t, i))
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(graphs, task)?;
    let (train, val, test) = dataset.split(cfg.split, cfg.split_seed)?;

    let files = GeneratedFiles {
        train: out_dir.join("train.jsonl"),
        val: out_dir.join("val.jsonl"),
        test: out_dir.join("test.jsonl"),
        metadata: out_dir.join("metadata.json"),
        teacher_checkpoint: out_dir.join("teacher.json"),
    };
    write_split(&train, &files.train)?;
    write_split(&val, &files.val)?;
    write_split(&test, &files.test)?;
    flexgcn::save_checkpoint(&teacher, &teacher_spec, &files.teacher_checkpoint)?;

    let meta = Metadata {
        graphon: cfg.graphon,
        resolution: cfg.resolution,
        nodes_mean: cfg.nodes_mean,
        num_graphs: cfg.num_graphs,
        feature_dim: cfg.feature_dim,
        task: cfg.task,
        teacher_checkpoint: "teacher.json".into(),
        teacher_seed: cfg.teacher_seed,
        teacher_scale: cfg.teacher_scale,
        dataset_seed: cfg.dataset_seed,
        split: cfg.split,
        split_seed: cfg.split_seed,
        threshold_pct: cfg.threshold_pct,
        threshold_value: threshold,
    };
    let text = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::json("metadata", e))?;
    std::fs::write(&files.metadata, text + "\n")
        .map_err(|e| Error::io(files.metadata.display().to_string(), e))?;
    Ok(files)
}

fn write_split(ds: &Dataset, path: &Path) -> Result<()> {
    if ds.is_empty() {
        // An empty split still produces a (zero-length) file.
        return std::fs::write(path, "").map_err(|e| Error::io(path.display().to_string(), e));
    }
    ds.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_graphon_extremes() {
        let empty = Graphon::new(GraphonKind::Constant { p: 0.0 }, 10).unwrap();
        let g = sample_graph(&empty, 12, 3, 1).unwrap();
        assert_eq!(g.adj.sum(), 0.0);

        let full = Graphon::new(GraphonKind::Constant { p: 1.0 }, 10).unwrap();
        let g = sample_graph(&full, 12, 3, 1).unwrap();
        let n = 12.0;
        assert_eq!(g.adj.sum(), n * (n - 1.0));
    }

    #[test]
    fn graphon_rejects_bad_probabilities() {
        assert!(Graphon::new(GraphonKind::Constant { p: 1.5 }, 10).is_err());
        assert!(Graphon::new(
            GraphonKind::StochasticBlock { p_in: 0.5, p_out: -0.1 },
            10
        )
        .is_err());
        assert!(Graphon::new(GraphonKind::Gradient, 0).is_err());
    }

    #[test]
    fn degrees_nondecreasing_after_alignment() {
        let graphon = Graphon::new(GraphonKind::Gradient, 100).unwrap();
        for seed in 0..20 {
            let g = sample_graph(&graphon, 30, 2, seed).unwrap();
            let degrees: Vec<f64> = g.adj.rows().into_iter().map(|r| r.sum()).collect();
            for w in degrees.windows(2) {
                assert!(w[1] >= w[0], "degrees not sorted: {degrees:?}");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let graphon = Graphon::new(GraphonKind::StochasticBlock { p_in: 0.8, p_out: 0.1 }, 50)
            .unwrap();
        let a = sample_graph(&graphon, 20, 4, 9).unwrap();
        let b = sample_graph(&graphon, 20, 4, 9).unwrap();
        assert_eq!(a.adj, b.adj);
        assert_eq!(a.x, b.x);
        let c = sample_graph(&graphon, 20, 4, 10).unwrap();
        assert_ne!(a.adj.sum() as i64 * 1000 + (a.x.sum() * 100.0) as i64,
                   c.adj.sum() as i64 * 1000 + (c.x.sum() * 100.0) as i64);
    }

    #[test]
    fn zero_teacher_gives_zero_regression_targets() {
        let spec = LayerSpec::new(vec![3, 4, 1], vec![2, 2], Pooling::None).unwrap();
        let zero = GcnParams::from_weights(
            &spec,
            vec![Array2::zeros((6, 4)), Array2::zeros((8, 1))],
        )
        .unwrap();
        let graphon = Graphon::new(GraphonKind::Gradient, 50).unwrap();
        let graphs: Vec<UnlabeledGraph> =
            (0..3).map(|s| sample_graph(&graphon, 8, 3, s).unwrap()).collect();
        let (targets, _) = label_with_teacher(&graphs, &zero, &spec, false, 80.0).unwrap();
        for t in targets {
            match t {
                Target::Node { y, .. } => assert!(y.iter().all(|&v| v == 0.0)),
                _ => panic!(),
            }
        }
    }

    #[test]
    fn labeling_is_deterministic() {
        let spec = LayerSpec::new(vec![3, 4, 1], vec![1, 1], Pooling::None).unwrap();
        let teacher = GcnParams::init(&spec, 42, 1.0).unwrap();
        let graphon = Graphon::new(GraphonKind::Gradient, 50).unwrap();
        let graphs: Vec<UnlabeledGraph> =
            (0..4).map(|s| sample_graph(&graphon, 10, 3, s).unwrap()).collect();
        let (t1, _) = label_with_teacher(&graphs, &teacher, &spec, false, 80.0).unwrap();
        let (t2, _) = label_with_teacher(&graphs, &teacher, &spec, false, 80.0).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn median_threshold_splits_known_pool() {
        // Percentile 50 of [1,2,3,4] is 2.5; labels are [0,0,1,1].
        let vals = [1.0, 2.0, 3.0, 4.0];
        let thr = percentile_sorted(&vals, 50.0);
        assert_eq!(thr, 2.5);
        let labels: Vec<f64> = vals.iter().map(|&v| if v > thr { 1.0 } else { 0.0 }).collect();
        assert_eq!(labels, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn generate_writes_three_files_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            num_graphs: 12,
            nodes_mean: 8,
            feature_dim: 3,
            split: (6, 3, 3),
            resolution: 50,
            ..SynthConfig::default()
        };
        let files = generate_dataset(&cfg, dir.path()).unwrap();
        let train = Dataset::load(&files.train).unwrap();
        assert_eq!(train.len(), 6);
        assert_eq!(Dataset::load(&files.val).unwrap().len(), 3);
        assert_eq!(Dataset::load(&files.test).unwrap().len(), 3);
        assert_eq!(train.task(), TaskKind::NodeRegression);
        assert!(files.metadata.exists());
        assert!(files.teacher_checkpoint.exists());
    }

    #[test]
    fn generate_is_byte_deterministic() {
        let cfg = SynthConfig {
            num_graphs: 8,
            nodes_mean: 6,
            feature_dim: 2,
            split: (4, 2, 2),
            resolution: 40,
            task: SynthTask::Cls,
            ..SynthConfig::default()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let f1 = generate_dataset(&cfg, d1.path()).unwrap();
        let f2 = generate_dataset(&cfg, d2.path()).unwrap();
        for (a, b) in [(&f1.train, &f2.train), (&f1.val, &f2.val), (&f1.test, &f2.test)] {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
    }

    #[test]
    fn classification_labels_are_imbalanced_binary() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            num_graphs: 20,
            nodes_mean: 10,
            feature_dim: 3,
            split: (20, 0, 0),
            resolution: 50,
            task: SynthTask::Cls,
            threshold_pct: 80.0,
            ..SynthConfig::default()
        };
        let files = generate_dataset(&cfg, dir.path()).unwrap();
        let ds = Dataset::load(&files.train).unwrap();
        assert_eq!(ds.task(), TaskKind::NodeClassification);
        let mut pos = 0usize;
        let mut total = 0usize;
        for g in ds.graphs() {
            if let Target::Node { y, .. } = g.target() {
                for &v in y.iter() {
                    assert!(v == 0.0 || v == 1.0);
                    pos += (v == 1.0) as usize;
                    total += 1;
                }
            }
        }
        let frac = pos as f64 / total as f64;
        assert!(frac > 0.1 && frac < 0.35, "positive fraction {frac}");
    }
}

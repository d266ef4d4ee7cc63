//! Graph and dataset representations, structural operators, and JSON-lines I/O.
//!
//! A graph is a dense node-feature matrix plus a dense symmetric adjacency
//! matrix with zero diagonal, carrying either a graph-level or a node-level
//! property target. Datasets are ordered collections of graphs sharing a
//! feature dimension and task kind.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether the property lives on the whole graph or on each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Graph,
    Node,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Graph => write!(f, "graph"),
            Level::Node => write!(f, "node"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    GraphRegression,
    GraphClassification,
    NodeRegression,
    NodeClassification,
}

impl TaskKind {
    pub fn level(&self) -> Level {
        match self {
            TaskKind::GraphRegression | TaskKind::GraphClassification => Level::Graph,
            TaskKind::NodeRegression | TaskKind::NodeClassification => Level::Node,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(
            self,
            TaskKind::GraphClassification | TaskKind::NodeClassification
        )
    }

    pub fn from_parts(level: Level, classification: bool) -> TaskKind {
        match (level, classification) {
            (Level::Graph, false) => TaskKind::GraphRegression,
            (Level::Graph, true) => TaskKind::GraphClassification,
            (Level::Node, false) => TaskKind::NodeRegression,
            (Level::Node, true) => TaskKind::NodeClassification,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskKind::GraphRegression => "graph-regression",
            TaskKind::GraphClassification => "graph-classification",
            TaskKind::NodeRegression => "node-regression",
            TaskKind::NodeClassification => "node-classification",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graph-regression" => Ok(TaskKind::GraphRegression),
            "graph-classification" => Ok(TaskKind::GraphClassification),
            "node-regression" => Ok(TaskKind::NodeRegression),
            "node-classification" => Ok(TaskKind::NodeClassification),
            other => Err(Error::Config(format!("unknown task kind `{other}`"))),
        }
    }
}

/// Property target of a single graph. Masks mark which labels are present
/// (`true` = labeled); an absent mask means fully labeled.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Graph {
        y: Array1<f64>,
        mask: Option<Array1<bool>>,
    },
    Node {
        y: Array2<f64>,
        mask: Option<Array2<bool>>,
    },
}

impl Target {
    pub fn level(&self) -> Level {
        match self {
            Target::Graph { .. } => Level::Graph,
            Target::Node { .. } => Level::Node,
        }
    }

    /// Number of target values per graph (graph level) or per node (node level).
    pub fn c(&self) -> usize {
        match self {
            Target::Graph { y, .. } => y.len(),
            Target::Node { y, .. } => y.ncols(),
        }
    }

    pub fn graph_scalar(scalar: f64) -> Target {
        Target::Graph {
            y: Array1::from_vec(vec![scalar]),
            mask: None,
        }
    }

    pub fn node(y: Array2<f64>) -> Target {
        Target::Node { y, mask: None }
    }

    fn validate(&self, n: usize) -> std::result::Result<(), String> {
        match self {
            Target::Graph { y, mask } => {
                if y.is_empty() {
                    return Err("graph-level target is empty".into());
                }
                if let Some(m) = mask {
                    if m.len() != y.len() {
                        return Err(format!(
                            "mask length {} != target length {}",
                            m.len(),
                            y.len()
                        ));
                    }
                }
            }
            Target::Node { y, mask } => {
                if y.nrows() != n {
                    return Err(format!(
                        "node-level target has {} rows for a {n}-node graph",
                        y.nrows()
                    ));
                }
                if y.ncols() == 0 {
                    return Err("node-level target has zero columns".into());
                }
                if let Some(m) = mask {
                    if m.dim() != y.dim() {
                        return Err("mask shape differs from target shape".into());
                    }
                }
            }
        }
        Ok(())
    }
}

/// A graph: dense features, dense symmetric adjacency, and a property target.
///
/// Immutable after construction; all invariants are checked by the
/// constructors.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    x: Array2<f64>,
    adj: Array2<f64>,
    target: Target,
}

impl Graph {
    /// Builds a graph from explicit matrices, validating every invariant.
    pub fn new(x: Array2<f64>, adj: Array2<f64>, target: Target) -> Result<Graph> {
        Self::new_indexed(x, adj, target, 0)
    }

    /// Like [`Graph::new`] but errors name the given dataset index.
    pub fn new_indexed(
        x: Array2<f64>,
        adj: Array2<f64>,
        target: Target,
        index: usize,
    ) -> Result<Graph> {
        let n = x.nrows();
        let fail = |reason: String| Error::InvalidGraph { index, reason };
        if n == 0 {
            return Err(fail("graph has zero nodes".into()));
        }
        if x.ncols() == 0 {
            return Err(fail("feature dimension is zero".into()));
        }
        if adj.nrows() != adj.ncols() {
            return Err(fail(format!(
                "adjacency is {}x{}, not square",
                adj.nrows(),
                adj.ncols()
            )));
        }
        if adj.nrows() != n {
            return Err(fail(format!(
                "adjacency is {}x{} but there are {n} feature rows",
                adj.nrows(),
                adj.ncols()
            )));
        }
        for i in 0..n {
            if adj[(i, i)] != 0.0 {
                return Err(fail(format!("nonzero diagonal (self-loop) at node {i}")));
            }
            for j in (i + 1)..n {
                if adj[(i, j)] != adj[(j, i)] {
                    return Err(fail(format!("adjacency asymmetric at ({i},{j})")));
                }
            }
        }
        target
            .validate(n)
            .map_err(|reason| Error::InvalidGraph { index, reason })?;
        Ok(Graph { x, adj, target })
    }

    /// Builds a graph from an undirected edge list (each pair stored once).
    pub fn from_edges(
        n: usize,
        x: Array2<f64>,
        edges: &[(usize, usize)],
        target: Target,
    ) -> Result<Graph> {
        let mut adj = Array2::zeros((n, n));
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph {
                    index: 0,
                    reason: format!("edge ({i},{j}) out of range for {n} nodes"),
                });
            }
            if i == j {
                return Err(Error::InvalidGraph {
                    index: 0,
                    reason: format!("self-edge at node {i}"),
                });
            }
            adj[(i, j)] = 1.0;
            adj[(j, i)] = 1.0;
        }
        Graph::new(x, adj, target)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn adj(&self) -> ArrayView2<'_, f64> {
        self.adj.view()
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    /// Replaces the target, revalidating shape against this graph.
    pub fn with_target(&self, target: Target) -> Result<Graph> {
        Graph::new(self.x.clone(), self.adj.clone(), target)
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        let n = self.n();
        let mut count = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adj[(i, j)] != 0.0 {
                    count += 1;
                }
            }
        }
        count
    }

    /// Degree sequence under the current node order (weighted row sums).
    pub fn degrees(&self) -> Vec<f64> {
        self.adj.rows().into_iter().map(|r| r.sum()).collect()
    }
}

/// Horizontal concatenation of adjacency powers `[I | A | A^2 | ... | A^(kappa-1)]`.
///
/// The result is `n x (kappa * n)`; block `b` is `A^b` with `A^0 = I`.
pub fn adjacency_concat(adj: ArrayView2<'_, f64>, kappa: usize) -> Result<Array2<f64>> {
    if adj.nrows() != adj.ncols() {
        return Err(Error::Shape(format!(
            "adjacency_concat needs a square matrix, got {}x{}",
            adj.nrows(),
            adj.ncols()
        )));
    }
    if kappa == 0 {
        return Err(Error::InvalidArgument("kappa must be >= 1".into()));
    }
    let n = adj.nrows();
    let mut out = Array2::zeros((n, kappa * n));
    let mut power = Array2::eye(n);
    for b in 0..kappa {
        out.slice_mut(ndarray::s![.., b * n..(b + 1) * n])
            .assign(&power);
        if b + 1 < kappa {
            power = power.dot(&adj);
        }
    }
    Ok(out)
}

/// Block-diagonal lifting `diag(x; kappa)`: `kappa` copies of `x` on the diagonal.
pub fn block_diag_features(x: ArrayView2<'_, f64>, kappa: usize) -> Result<Array2<f64>> {
    if kappa == 0 {
        return Err(Error::InvalidArgument("kappa must be >= 1".into()));
    }
    let (n, d) = x.dim();
    let mut out = Array2::zeros((kappa * n, kappa * d));
    for b in 0..kappa {
        out.slice_mut(ndarray::s![b * n..(b + 1) * n, b * d..(b + 1) * d])
            .assign(&x);
    }
    Ok(out)
}

/// An ordered collection of graphs sharing feature dimension and task kind.
#[derive(Debug, Clone)]
pub struct Dataset {
    graphs: Vec<Graph>,
    task: TaskKind,
    d: usize,
    c: usize,
}

impl Dataset {
    pub fn new(graphs: Vec<Graph>, task: TaskKind) -> Result<Dataset> {
        if graphs.is_empty() {
            return Err(Error::InvalidArgument("dataset has no graphs".into()));
        }
        let d = graphs[0].d();
        let c = graphs[0].target().c();
        for (i, g) in graphs.iter().enumerate() {
            if g.d() != d {
                return Err(Error::InvalidGraph {
                    index: i,
                    reason: format!("feature dimension {} != dataset dimension {d}", g.d()),
                });
            }
            if g.target().level() != task.level() {
                return Err(Error::InvalidGraph {
                    index: i,
                    reason: format!(
                        "{}-level target in a {}-level dataset",
                        g.target().level(),
                        task.level()
                    ),
                });
            }
            if g.target().c() != c {
                return Err(Error::InvalidGraph {
                    index: i,
                    reason: format!(
                        "target dimension {} != dataset dimension {c}",
                        g.target().c()
                    ),
                });
            }
        }
        Ok(Dataset { graphs, task, d, c })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn c(&self) -> usize {
        self.c
    }

    /// Loads a JSON-lines dataset, inferring the task kind from the targets:
    /// the level comes from the target shape, and the set is treated as
    /// classification when every labeled value is exactly 0 or 1.
    /// Use [`Dataset::load_as`] when the kind is known.
    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let graphs = read_jsonl(path.as_ref())?;
        let level = graphs[0].target().level();
        let classification = graphs.iter().all(|g| match g.target() {
            Target::Graph { y, mask } => binary_values(y.iter(), mask.as_ref().map(|m| m.iter())),
            Target::Node { y, mask } => binary_values(y.iter(), mask.as_ref().map(|m| m.iter())),
        });
        Dataset::new(graphs, TaskKind::from_parts(level, classification))
    }

    /// Loads a JSON-lines dataset with an explicit task kind.
    pub fn load_as(path: impl AsRef<Path>, task: TaskKind) -> Result<Dataset> {
        let graphs = read_jsonl(path.as_ref())?;
        if graphs[0].target().level() != task.level() {
            return Err(Error::UnsupportedTask(format!(
                "file holds {}-level targets but task `{task}` was requested",
                graphs[0].target().level()
            )));
        }
        Dataset::new(graphs, task)
    }

    /// Writes the dataset as JSON-lines, one graph per line, preserving order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        for (i, g) in self.graphs.iter().enumerate() {
            let rec = GraphRecord::from_graph(g, i)?;
            let line = serde_json::to_string(&rec)
                .map_err(|e| Error::json(format!("serializing graph {i}"), e))?;
            writeln!(w, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Deterministic seeded shuffle followed by a contiguous partition into
    /// train/val/test of the given sizes.
    pub fn split(&self, counts: (usize, usize, usize), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
        let (tr, va, te) = counts;
        let total = tr + va + te;
        if total > self.len() {
            return Err(Error::InvalidArgument(format!(
                "split counts {tr}+{va}+{te} exceed dataset size {}",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);

        let take = |range: std::ops::Range<usize>| -> Vec<Graph> {
            order[range].iter().map(|&i| self.graphs[i].clone()).collect()
        };
        let make = |graphs: Vec<Graph>| -> Dataset {
            // Subsets of a valid dataset stay valid; empty splits keep the metadata.
            Dataset {
                graphs,
                task: self.task,
                d: self.d,
                c: self.c,
            }
        };
        Ok((
            make(take(0..tr)),
            make(take(tr..tr + va)),
            make(take(tr + va..total)),
        ))
    }

    /// Collapses node-level targets to graph-level ones by summing target
    /// columns over nodes (the sum-pooled view of the same property).
    pub fn pooled_to_graph_level(&self) -> Result<Dataset> {
        if self.task.level() != Level::Node {
            return Err(Error::UnsupportedTask(
                "pooled_to_graph_level needs a node-level dataset".into(),
            ));
        }
        let task = TaskKind::from_parts(Level::Graph, self.task.is_classification());
        let graphs = self
            .graphs
            .iter()
            .map(|g| match g.target() {
                Target::Node { y, mask: None } => {
                    let pooled = y.sum_axis(ndarray::Axis(0));
                    g.with_target(Target::Graph {
                        y: pooled,
                        mask: None,
                    })
                }
                Target::Node { mask: Some(_), .. } => Err(Error::UnsupportedTask(
                    "cannot pool masked node targets".into(),
                )),
                Target::Graph { .. } => unreachable!("level checked above"),
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(graphs, task)
    }
}

fn binary_values<'a>(
    values: impl Iterator<Item = &'a f64>,
    mask: Option<impl Iterator<Item = &'a bool>>,
) -> bool {
    match mask {
        Some(m) => values
            .zip(m)
            .all(|(v, &keep)| !keep || *v == 0.0 || *v == 1.0),
        None => values.into_iter().all(|v| *v == 0.0 || *v == 1.0),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TargetRecord {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MaskRecord {
    Vector(Vec<bool>),
    Matrix(Vec<Vec<bool>>),
}

/// One JSON-lines record: `{"n":..,"x":[row-major],"edges":[[i,j],..],"y":..,"mask":..}`.
#[derive(Serialize, Deserialize)]
struct GraphRecord {
    n: usize,
    x: Vec<f64>,
    edges: Vec<(usize, usize)>,
    y: TargetRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask: Option<MaskRecord>,
}

impl GraphRecord {
    fn from_graph(g: &Graph, index: usize) -> Result<GraphRecord> {
        let n = g.n();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                match g.adj()[(i, j)] {
                    0.0 => {}
                    1.0 => edges.push((i, j)),
                    w => {
                        return Err(Error::InvalidGraph {
                            index,
                            reason: format!(
                                "edge ({i},{j}) has weight {w}; the file format stores unweighted edges"
                            ),
                        })
                    }
                }
            }
        }
        let (y, mask) = match g.target() {
            Target::Graph { y, mask } => {
                let y_rec = if y.len() == 1 {
                    TargetRecord::Scalar(y[0])
                } else {
                    TargetRecord::Vector(y.to_vec())
                };
                (y_rec, mask.as_ref().map(|m| MaskRecord::Vector(m.to_vec())))
            }
            Target::Node { y, mask } => (
                TargetRecord::Matrix(y.rows().into_iter().map(|r| r.to_vec()).collect()),
                mask.as_ref().map(|m| {
                    MaskRecord::Matrix(m.rows().into_iter().map(|r| r.to_vec()).collect())
                }),
            ),
        };
        Ok(GraphRecord {
            n,
            x: g.x().iter().copied().collect(),
            edges,
            y,
            mask,
        })
    }

    fn into_graph(self, index: usize) -> Result<Graph> {
        let n = self.n;
        if n == 0 {
            return Err(Error::InvalidGraph {
                index,
                reason: "graph has zero nodes".into(),
            });
        }
        if self.x.len() % n != 0 {
            return Err(Error::InvalidGraph {
                index,
                reason: format!("feature array of length {} not divisible by n={n}", self.x.len()),
            });
        }
        let d = self.x.len() / n;
        let x = Array2::from_shape_vec((n, d), self.x).expect("length checked");
        let target = match (self.y, self.mask) {
            (TargetRecord::Scalar(v), mask) => Target::Graph {
                y: Array1::from_vec(vec![v]),
                mask: match mask {
                    None => None,
                    Some(MaskRecord::Vector(m)) => Some(Array1::from_vec(m)),
                    Some(MaskRecord::Matrix(_)) => {
                        return Err(Error::InvalidGraph {
                            index,
                            reason: "matrix mask on a graph-level target".into(),
                        })
                    }
                },
            },
            (TargetRecord::Vector(v), mask) => Target::Graph {
                y: Array1::from_vec(v),
                mask: match mask {
                    None => None,
                    Some(MaskRecord::Vector(m)) => Some(Array1::from_vec(m)),
                    Some(MaskRecord::Matrix(_)) => {
                        return Err(Error::InvalidGraph {
                            index,
                            reason: "matrix mask on a graph-level target".into(),
                        })
                    }
                },
            },
            (TargetRecord::Matrix(rows), mask) => {
                let y = rows_to_array(rows, index, "target")?;
                let mask = match mask {
                    None => None,
                    Some(MaskRecord::Matrix(rows)) => Some(rows_to_array(rows, index, "mask")?),
                    Some(MaskRecord::Vector(_)) => {
                        return Err(Error::InvalidGraph {
                            index,
                            reason: "vector mask on a node-level target".into(),
                        })
                    }
                };
                Target::Node { y, mask }
            }
        };
        Graph::from_edges(n, x, &self.edges, target).map_err(|e| match e {
            Error::InvalidGraph { reason, .. } => Error::InvalidGraph { index, reason },
            other => other,
        })
    }
}

fn rows_to_array<T: Clone>(rows: Vec<Vec<T>>, index: usize, what: &str) -> Result<Array2<T>> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    if ncols == 0 {
        return Err(Error::InvalidGraph {
            index,
            reason: format!("empty node-level {what}"),
        });
    }
    let mut flat = Vec::with_capacity(nrows * ncols);
    for r in &rows {
        if r.len() != ncols {
            return Err(Error::InvalidGraph {
                index,
                reason: format!("ragged node-level {what}"),
            });
        }
        flat.extend_from_slice(r);
    }
    Ok(Array2::from_shape_vec((nrows, ncols), flat).expect("length checked"))
}

fn read_jsonl(path: &Path) -> Result<Vec<Graph>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut graphs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        graphs.push(rec.into_graph(graphs.len())?);
    }
    if graphs.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: "file holds no graphs".into(),
        });
    }
    Ok(graphs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn path2() -> Graph {
        Graph::new(
            array![[1.0], [2.0]],
            array![[0.0, 1.0], [1.0, 0.0]],
            Target::graph_scalar(1.5),
        )
        .unwrap()
    }

    // Naive repeated-multiplication oracle for matrix powers.
    fn matrix_power(a: ArrayView2<'_, f64>, p: usize) -> Array2<f64> {
        let mut out = Array2::eye(a.nrows());
        for _ in 0..p {
            out = out.dot(&a);
        }
        out
    }

    #[test]
    fn adjacency_concat_zero_matrix() {
        let adj = Array2::zeros((2, 2));
        let got = adjacency_concat(adj.view(), 2).unwrap();
        let mut want = Array2::zeros((2, 4));
        want.slice_mut(ndarray::s![.., 0..2]).assign(&Array2::<f64>::eye(2));
        assert_eq!(got, want);
    }

    #[test]
    fn adjacency_concat_kappa_one_is_identity() {
        let adj = array![[0.0, 3.0], [3.0, 0.0]];
        assert_eq!(adjacency_concat(adj.view(), 1).unwrap(), Array2::<f64>::eye(2));
    }

    #[test]
    fn adjacency_concat_two_path() {
        // A^2 = I for the 2-path, so blocks are [I | A | I].
        let adj = array![[0.0, 1.0], [1.0, 0.0]];
        let got = adjacency_concat(adj.view(), 3).unwrap();
        assert_eq!(got.slice(ndarray::s![.., 0..2]), Array2::<f64>::eye(2));
        assert_eq!(got.slice(ndarray::s![.., 2..4]), adj.view());
        assert_eq!(got.slice(ndarray::s![.., 4..6]), Array2::<f64>::eye(2));
    }

    #[test]
    fn adjacency_concat_rejects_non_square() {
        let adj = Array2::zeros((2, 3));
        assert!(matches!(
            adjacency_concat(adj.view(), 2),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn block_diag_places_copies() {
        let x = array![[1.0, 2.0]];
        let got = block_diag_features(x.view(), 2).unwrap();
        let want = array![[1.0, 2.0, 0.0, 0.0], [0.0, 0.0, 1.0, 2.0]];
        assert_eq!(got, want);

        let x3 = array![[1.0, -1.0], [0.5, 2.0], [3.0, 0.0]];
        let lifted = block_diag_features(x3.view(), 3).unwrap();
        assert_eq!(lifted.dim(), (9, 6));
        for b in 0..3 {
            assert_eq!(
                lifted.slice(ndarray::s![b * 3..(b + 1) * 3, b * 2..(b + 1) * 2]),
                x3.view()
            );
        }
    }

    #[test]
    fn block_diag_kappa_one_is_input() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(block_diag_features(x.view(), 1).unwrap(), x);
    }

    #[test]
    fn graph_rejects_asymmetry_and_self_loops() {
        let x = array![[1.0], [2.0]];
        let asym = array![[0.0, 1.0], [0.0, 0.0]];
        let err = Graph::new(x.clone(), asym, Target::graph_scalar(0.0)).unwrap_err();
        assert!(err.to_string().contains("asymmetric"));

        let selfloop = array![[1.0, 0.0], [0.0, 0.0]];
        let err = Graph::new(x, selfloop, Target::graph_scalar(0.0)).unwrap_err();
        assert!(err.to_string().contains("self-loop"));
    }

    #[test]
    fn node_target_row_count_must_match() {
        let x = array![[1.0], [2.0]];
        let adj = Array2::zeros((2, 2));
        let bad = Target::node(array![[1.0], [2.0], [3.0]]);
        assert!(Graph::new(x, adj, bad).is_err());
    }

    #[test]
    fn jsonl_roundtrip_single_graph() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.jsonl");
        let ds = Dataset::new(vec![path2()], TaskKind::GraphRegression).unwrap();
        ds.save(&path).unwrap();
        let loaded = Dataset::load(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded.graphs()[0], ds.graphs()[0]);
        assert_eq!(loaded.task(), TaskKind::GraphRegression);
    }

    #[test]
    fn load_rejects_self_edge_naming_graph_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"n\":2,\"x\":[1.0,2.0],\"edges\":[[0,0]],\"y\":1.0}\n",
        )
        .unwrap();
        let err = Dataset::load(&path).unwrap_err();
        assert!(err.to_string().contains("graph 0"), "{err}");
    }

    #[test]
    fn load_reports_parse_error_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"n\":2\n").unwrap();
        let err = Dataset::load(&path).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn load_infers_classification_from_binary_targets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cls.jsonl");
        std::fs::write(
            &path,
            "{\"n\":1,\"x\":[0.5],\"edges\":[],\"y\":[[1.0]]}\n{\"n\":1,\"x\":[0.2],\"edges\":[],\"y\":[[0.0]]}\n",
        )
        .unwrap();
        assert_eq!(Dataset::load(&path).unwrap().task(), TaskKind::NodeClassification);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let graphs: Vec<Graph> = (0..10)
            .map(|i| {
                Graph::new(
                    array![[i as f64]],
                    Array2::zeros((1, 1)),
                    Target::graph_scalar(i as f64),
                )
                .unwrap()
            })
            .collect();
        let ds = Dataset::new(graphs, TaskKind::GraphRegression).unwrap();

        let (tr, va, te) = ds.split((6, 2, 2), 7).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (6, 2, 2));

        let (tr2, _, _) = ds.split((6, 2, 2), 7).unwrap();
        assert_eq!(tr.graphs(), tr2.graphs());

        // Disjoint and exhaustive: the targets are unique ids.
        let mut ids: Vec<f64> = tr
            .graphs()
            .iter()
            .chain(va.graphs())
            .chain(te.graphs())
            .map(|g| match g.target() {
                Target::Graph { y, .. } => y[0],
                _ => unreachable!(),
            })
            .collect();
        ids.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(ids, (0..10).map(|i| i as f64).collect::<Vec<_>>());

        let (all, va, te) = ds.split((10, 0, 0), 3).unwrap();
        assert_eq!((all.len(), va.len(), te.len()), (10, 0, 0));

        assert!(ds.split((9, 2, 0), 3).is_err());
    }

    #[test]
    fn pooled_targets_sum_over_nodes() {
        let g = Graph::new(
            array![[1.0], [2.0]],
            array![[0.0, 1.0], [1.0, 0.0]],
            Target::node(array![[1.0], [2.5]]),
        )
        .unwrap();
        let ds = Dataset::new(vec![g], TaskKind::NodeRegression).unwrap();
        let pooled = ds.pooled_to_graph_level().unwrap();
        assert_eq!(pooled.task(), TaskKind::GraphRegression);
        match pooled.graphs()[0].target() {
            Target::Graph { y, .. } => assert_eq!(y[0], 3.5),
            _ => panic!("expected graph-level target"),
        }
    }

    proptest! {
        // Every block of the concatenation equals the corresponding naive power.
        #[test]
        fn adjacency_concat_blocks_are_powers(n in 1usize..8, kappa in 1usize..5, seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut adj = Array2::zeros((n, n));
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.5 {
                        adj[(i, j)] = 1.0;
                        adj[(j, i)] = 1.0;
                    }
                }
            }
            let cat = adjacency_concat(adj.view(), kappa).unwrap();
            for b in 0..kappa {
                let block = cat.slice(ndarray::s![.., b * n..(b + 1) * n]);
                let want = matrix_power(adj.view(), b);
                prop_assert!(block.iter().zip(want.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
            }
        }

        // Nonzero count of the lifted feature matrix is kappa * nnz(x).
        #[test]
        fn block_diag_nnz(n in 1usize..6, d in 1usize..5, kappa in 1usize..5, seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((n, d), |_| {
                if rng.random::<f64>() < 0.4 { rng.random::<f64>() + 0.1 } else { 0.0 }
            });
            let nnz = x.iter().filter(|v| **v != 0.0).count();
            let lifted = block_diag_features(x.view(), kappa).unwrap();
            prop_assert_eq!(lifted.iter().filter(|v| **v != 0.0).count(), kappa * nnz);
        }

        // save -> load reproduces targets bit-identically and structure exactly.
        #[test]
        fn jsonl_roundtrip_bits(n in 1usize..6, d in 1usize..4, seed in 0u64..500) {
            use rand::Rng;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0);
            let mut adj = Array2::zeros((n, n));
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.4 {
                        adj[(i, j)] = 1.0;
                        adj[(j, i)] = 1.0;
                    }
                }
            }
            let y = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>() * 10.0 - 5.0);
            let g = Graph::new(x, adj, Target::node(y)).unwrap();
            let ds = Dataset::new(vec![g], TaskKind::NodeRegression).unwrap();

            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.jsonl");
            ds.save(&path).unwrap();
            let back = Dataset::load(&path).unwrap();
            prop_assert_eq!(back.graphs(), ds.graphs());
        }
    }
}

//! Flexible GCN with independent per-order weights.
//!
//! Each layer lifts node features over several adjacency powers,
//! `[A^0 X | A^1 X | ... | A^(k-1) X]`, and applies one weight matrix of
//! shape `(kappa * h_in) x h_out`, so every convolutional order carries its
//! own weight block. Hidden layers use ReLU; the final layer is linear and
//! either sum-pooled to a graph-level vector or left per-node.
//!
//! The backward pass is explicit (no autodiff): gradients are assembled
//! layer by layer from the cached lifted inputs and pre-activations, and
//! flattened into a single parameter vector theta with a fixed layout
//! (last layer first, column-major within a layer) so vectors are
//! comparable across runs and checkpoints.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Level, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Column-wise sum over nodes; output is a c-vector per graph.
    Sum,
    /// No pooling; output is an n x c matrix (node-level property).
    None,
}

impl Pooling {
    pub fn level(&self) -> Level {
        match self {
            Pooling::Sum => Level::Graph,
            Pooling::None => Level::Node,
        }
    }
}

/// Architecture of a flexible GCN: layer widths `h_0..h_L`, per-layer
/// convolutional orders `kappa_1..kappa_L`, and the output pooling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub widths: Vec<usize>,
    pub kappas: Vec<usize>,
    pub pooling: Pooling,
}

impl LayerSpec {
    pub fn new(widths: Vec<usize>, kappas: Vec<usize>, pooling: Pooling) -> Result<LayerSpec> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(
                "spec needs at least an input and an output width".into(),
            ));
        }
        if kappas.len() != widths.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} widths imply {} layers but {} kappas were given",
                widths.len(),
                widths.len() - 1,
                kappas.len()
            )));
        }
        if widths.iter().any(|&w| w == 0) || kappas.iter().any(|&k| k == 0) {
            return Err(Error::InvalidArgument(
                "widths and kappas must be positive".into(),
            ));
        }
        Ok(LayerSpec {
            widths,
            kappas,
            pooling,
        })
    }

    /// Number of layers L.
    pub fn layers(&self) -> usize {
        self.kappas.len()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Weight shape of layer `l` (0-based): `(kappa_l * h_(l-1), h_l)`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.kappas[l] * self.widths[l], self.widths[l + 1])
    }

    /// Total parameter count `m = sum_l kappa_l * h_(l-1) * h_l`.
    pub fn param_count(&self) -> usize {
        (0..self.layers())
            .map(|l| {
                let (rows, cols) = self.layer_shape(l);
                rows * cols
            })
            .sum()
    }

    pub fn max_kappa(&self) -> usize {
        *self.kappas.iter().max().unwrap()
    }
}

/// Per-layer weight matrices; layer `l` has shape `(kappa_l * h_(l-1), h_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    weights: Vec<Array2<f64>>,
}

impl GcnParams {
    /// Zero-mean Gaussian initialization with std `scale / sqrt(kappa_l * h_(l-1))`,
    /// deterministic per seed.
    pub fn init(spec: &LayerSpec, seed: u64, scale: f64) -> Result<GcnParams> {
        if !(scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "init scale must be positive, got {scale}"
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(spec.layers());
        for l in 0..spec.layers() {
            let (rows, cols) = spec.layer_shape(l);
            let std = scale / (rows as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("std is finite and positive");
            weights.push(Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng)));
        }
        Ok(GcnParams { weights })
    }

    pub fn from_weights(spec: &LayerSpec, weights: Vec<Array2<f64>>) -> Result<GcnParams> {
        if weights.len() != spec.layers() {
            return Err(Error::Shape(format!(
                "{} weight matrices for a {}-layer spec",
                weights.len(),
                spec.layers()
            )));
        }
        for (l, w) in weights.iter().enumerate() {
            if w.dim() != spec.layer_shape(l) {
                return Err(Error::Shape(format!(
                    "layer {l} weights are {:?}, expected {:?}",
                    w.dim(),
                    spec.layer_shape(l)
                )));
            }
        }
        Ok(GcnParams { weights })
    }

    pub fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        self.weights[l].view()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    /// Flattens all weights into a single theta vector. Layout: last layer
    /// first, then column by column within a layer, rows within a column.
    pub fn flatten(&self) -> Array1<f64> {
        let mut theta = Vec::with_capacity(self.param_count());
        for w in self.weights.iter().rev() {
            for col in w.columns() {
                theta.extend(col.iter());
            }
        }
        Array1::from_vec(theta)
    }

    /// Inverse of [`GcnParams::flatten`].
    pub fn from_flat(spec: &LayerSpec, theta: &Array1<f64>) -> Result<GcnParams> {
        if theta.len() != spec.param_count() {
            return Err(Error::Shape(format!(
                "theta has {} entries, spec wants {}",
                theta.len(),
                spec.param_count()
            )));
        }
        let mut weights: Vec<Array2<f64>> = (0..spec.layers())
            .map(|l| Array2::zeros(spec.layer_shape(l)))
            .collect();
        let mut idx = 0;
        for w in weights.iter_mut().rev() {
            let (rows, cols) = w.dim();
            for j in 0..cols {
                for i in 0..rows {
                    w[(i, j)] = theta[idx];
                    idx += 1;
                }
            }
        }
        Ok(GcnParams { weights })
    }

    /// In-place descent step `theta <- theta - lr * grad` where `grad` uses
    /// the flattened layout.
    pub fn step(&mut self, grad: &Array1<f64>, lr: f64) -> Result<()> {
        if grad.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "gradient has {} entries, params have {}",
                grad.len(),
                self.param_count()
            )));
        }
        let mut idx = 0;
        for w in self.weights.iter_mut().rev() {
            let (rows, cols) = w.dim();
            for j in 0..cols {
                for i in 0..rows {
                    w[(i, j)] -= lr * grad[idx];
                    idx += 1;
                }
            }
        }
        Ok(())
    }
}

/// Network output for one graph.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Graph(Array1<f64>),
    Node(Array2<f64>),
}

impl Output {
    pub fn level(&self) -> Level {
        match self {
            Output::Graph(_) => Level::Graph,
            Output::Node(_) => Level::Node,
        }
    }

    /// View as a matrix: graph-level vectors become a single row.
    pub fn as_matrix(&self) -> Array2<f64> {
        match self {
            Output::Graph(v) => v.view().insert_axis(Axis(0)).to_owned(),
            Output::Node(m) => m.clone(),
        }
    }
}

/// Everything the backward pass needs, retained from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Adjacency powers A^0 .. A^(max_kappa - 1).
    powers: Vec<Array2<f64>>,
    /// Per layer: lifted input `[A^0 X | ... | A^(k-1) X]`, shape n x (kappa * h_in).
    lifted: Vec<Array2<f64>>,
    /// Per layer: pre-activation Z, shape n x h_out.
    pre: Vec<Array2<f64>>,
    n: usize,
}

impl ForwardCache {
    fn check(&self, spec: &LayerSpec, g: &Graph) -> Result<()> {
        let ok = self.n == g.n()
            && self.lifted.len() == spec.layers()
            && (0..spec.layers()).all(|l| {
                self.lifted[l].dim() == (self.n, spec.kappas[l] * spec.widths[l])
                    && self.pre[l].dim() == (self.n, spec.widths[l + 1])
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(
                "forward cache does not match this spec/graph".into(),
            ))
        }
    }

    /// Smallest |pre-activation| over all hidden units; used to detect
    /// proximity to a ReLU kink.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        let hidden = self.pre.len().saturating_sub(1);
        self.pre[..hidden]
            .iter()
            .flat_map(|z| z.iter())
            .fold(f64::INFINITY, |m, &z| m.min(z.abs()))
    }
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

/// Builds `[A^0 X | A^1 X | ... | A^(k-1) X]` from precomputed powers.
fn lift(powers: &[Array2<f64>], x: &Array2<f64>, kappa: usize) -> Array2<f64> {
    let (n, h) = x.dim();
    let mut out = Array2::zeros((n, kappa * h));
    for (b, power) in powers.iter().take(kappa).enumerate() {
        let block = if b == 0 { x.clone() } else { power.dot(x) };
        out.slice_mut(s![.., b * h..(b + 1) * h]).assign(&block);
    }
    out
}

fn forward_impl(
    params: &GcnParams,
    spec: &LayerSpec,
    g: &Graph,
    keep_cache: bool,
) -> Result<(Output, Option<ForwardCache>)> {
    if g.d() != spec.input_dim() {
        return Err(Error::Shape(format!(
            "graph features have dimension {}, spec expects {}",
            g.d(),
            spec.input_dim()
        )));
    }
    if params.weights.len() != spec.layers() {
        return Err(Error::Shape("params do not match spec".into()));
    }
    let n = g.n();
    let max_kappa = spec.max_kappa();
    let mut powers = Vec::with_capacity(max_kappa);
    powers.push(Array2::eye(n));
    for _ in 1..max_kappa {
        let next = powers.last().unwrap().dot(&g.adj());
        powers.push(next);
    }

    let layers = spec.layers();
    let mut lifted_all = Vec::with_capacity(if keep_cache { layers } else { 0 });
    let mut pre_all = Vec::with_capacity(if keep_cache { layers } else { 0 });
    let mut x = g.x().to_owned();
    let mut last_z = None;
    for l in 0..layers {
        let lifted = lift(&powers, &x, spec.kappas[l]);
        let z = lifted.dot(&params.weights[l]);
        if keep_cache {
            lifted_all.push(lifted);
            pre_all.push(z.clone());
        }
        if l + 1 < layers {
            x = relu(&z);
        } else {
            last_z = Some(z);
        }
    }
    let z_final = last_z.expect("at least one layer");
    let output = match spec.pooling {
        Pooling::Sum => Output::Graph(z_final.sum_axis(Axis(0))),
        Pooling::None => Output::Node(z_final),
    };
    let cache = keep_cache.then(|| ForwardCache {
        powers,
        lifted: lifted_all,
        pre: pre_all,
        n,
    });
    Ok((output, cache))
}

/// Forward pass retaining every intermediate needed by the backward pass.
pub fn forward(params: &GcnParams, spec: &LayerSpec, g: &Graph) -> Result<(Output, ForwardCache)> {
    let (out, cache) = forward_impl(params, spec, g, true)?;
    Ok((out, cache.expect("cache requested")))
}

/// Forward pass without retaining intermediates.
pub fn predict(params: &GcnParams, spec: &LayerSpec, g: &Graph) -> Result<Output> {
    forward_impl(params, spec, g, false).map(|(out, _)| out)
}

/// Core reverse pass: gradient of `sum(dz_final . Z_final)` w.r.t. theta,
/// with `dz_final` of shape n x h_L. Returns the flattened gradient.
fn backward_from(
    params: &GcnParams,
    spec: &LayerSpec,
    cache: &ForwardCache,
    dz_final: Array2<f64>,
) -> Array1<f64> {
    let layers = spec.layers();
    let mut layer_grads: Vec<Array2<f64>> = Vec::with_capacity(layers);
    layer_grads.resize(layers, Array2::zeros((0, 0)));
    let mut dz = dz_final;
    for l in (0..layers).rev() {
        layer_grads[l] = cache.lifted[l].t().dot(&dz);
        if l > 0 {
            let h_in = spec.widths[l];
            let d_lift = dz.dot(&params.weights[l].t());
            let mut dx = Array2::zeros((cache.n, h_in));
            for b in 0..spec.kappas[l] {
                let block = d_lift.slice(s![.., b * h_in..(b + 1) * h_in]);
                // A^b is symmetric, so (A^b)^T dL = A^b dL.
                if b == 0 {
                    dx += &block;
                } else {
                    dx += &cache.powers[b].dot(&block);
                }
            }
            // ReLU subgradient at the kink is 0.
            dz = dx * cache.pre[l - 1].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
        }
    }
    let mut grad = Vec::with_capacity(spec.param_count());
    for gw in layer_grads.iter().rev() {
        for col in gw.columns() {
            grad.extend(col.iter());
        }
    }
    Array1::from_vec(grad)
}

/// Jacobian of the network output w.r.t. theta: one flattened m-vector per
/// output coordinate. Graph-level outputs give `c` rows; node-level outputs
/// give `n * c` rows in row-major (node, coordinate) order.
pub fn output_jacobian(
    params: &GcnParams,
    spec: &LayerSpec,
    g: &Graph,
    cache: &ForwardCache,
) -> Result<Array2<f64>> {
    cache.check(spec, g)?;
    let n = g.n();
    let c = spec.output_dim();
    let m = spec.param_count();
    let rows = match spec.pooling {
        Pooling::Sum => c,
        Pooling::None => n * c,
    };
    let mut jac = Array2::zeros((rows, m));
    match spec.pooling {
        Pooling::Sum => {
            for j in 0..c {
                let mut dz = Array2::zeros((n, c));
                dz.column_mut(j).fill(1.0);
                jac.row_mut(j)
                    .assign(&backward_from(params, spec, cache, dz));
            }
        }
        Pooling::None => {
            for v in 0..n {
                for j in 0..c {
                    let mut dz = Array2::zeros((n, c));
                    dz[(v, j)] = 1.0;
                    jac.row_mut(v * c + j)
                        .assign(&backward_from(params, spec, cache, dz));
                }
            }
        }
    }
    Ok(jac)
}

/// Jacobian of a scalar graph-level output (the GNTK building block).
pub fn scalar_output_jacobian(
    params: &GcnParams,
    spec: &LayerSpec,
    g: &Graph,
) -> Result<Array1<f64>> {
    if spec.pooling != Pooling::Sum || spec.output_dim() != 1 {
        return Err(Error::UnsupportedTask(
            "scalar jacobian needs sum pooling and output dimension 1".into(),
        ));
    }
    let (_, cache) = forward(params, spec, g)?;
    let jac = output_jacobian(params, spec, g, &cache)?;
    Ok(jac.row(0).to_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Mse,
    BceWithLogits,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "bce-with-logits" | "bce" => Ok(LossKind::BceWithLogits),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn bce_with_logits(z: f64, y: f64) -> f64 {
    // max(z,0) - z*y + ln(1 + exp(-|z|)), the overflow-safe form.
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Per-graph loss and its derivative w.r.t. the network output matrix.
///
/// - mse, graph level: `1/2 * sum (p - y)^2` over unmasked outputs;
/// - mse, node level: the same divided by the node count;
/// - bce-with-logits: mean over unmasked labels of the stable binary
///   cross-entropy on logits.
pub(crate) fn loss_and_output_grad(
    output: &Output,
    target: &Target,
    loss: LossKind,
) -> Result<(f64, Array2<f64>)> {
    if output.level() != target.level() {
        return Err(Error::UnsupportedTask(format!(
            "{}-level output against a {}-level target",
            output.level(),
            target.level()
        )));
    }
    let p = output.as_matrix();
    let (y, mask) = target_matrix(target);
    if p.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "output is {:?} but target is {:?}",
            p.dim(),
            y.dim()
        )));
    }
    let masked = |i: usize, j: usize| mask.as_ref().map(|m| !m[(i, j)]).unwrap_or(false);
    let mut grad = Array2::zeros(p.dim());
    let mut total = 0.0;
    match loss {
        LossKind::Mse => {
            for ((i, j), &pij) in p.indexed_iter() {
                if masked(i, j) {
                    continue;
                }
                let r = pij - y[(i, j)];
                total += 0.5 * r * r;
                grad[(i, j)] = r;
            }
            if output.level() == Level::Node {
                let n = p.nrows() as f64;
                total /= n;
                grad /= n;
            }
        }
        LossKind::BceWithLogits => {
            let mut count = 0usize;
            for ((i, j), &zij) in p.indexed_iter() {
                if masked(i, j) {
                    continue;
                }
                total += bce_with_logits(zij, y[(i, j)]);
                grad[(i, j)] = sigmoid(zij) - y[(i, j)];
                count += 1;
            }
            if count > 0 {
                total /= count as f64;
                grad /= count as f64;
            }
        }
    }
    Ok((total, grad))
}

pub(crate) fn target_matrix(target: &Target) -> (Array2<f64>, Option<Array2<bool>>) {
    match target {
        Target::Graph { y, mask } => (
            y.view().insert_axis(Axis(0)).to_owned(),
            mask.as_ref().map(|m| m.view().insert_axis(Axis(0)).to_owned()),
        ),
        Target::Node { y, mask } => (y.clone(), mask.clone()),
    }
}

/// Batch loss and flattened gradient: the mean over the batch of per-graph
/// losses and of their theta-gradients, computed as one fused reverse pass
/// per graph. Batch members are processed in parallel; the reduction order
/// is fixed by index, so results do not depend on the thread count.
pub fn loss_grad(
    params: &GcnParams,
    spec: &LayerSpec,
    batch: &[&Graph],
    loss: LossKind,
) -> Result<(f64, Array1<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let per_graph: Vec<Result<(f64, Array1<f64>)>> = batch
        .par_iter()
        .map(|g| {
            let (out, cache) = forward(params, spec, g)?;
            let (l, dout) = loss_and_output_grad(&out, g.target(), loss)?;
            let dz = match spec.pooling {
                // d(pooled)/dZ broadcasts each output-column gradient to all rows.
                Pooling::Sum => {
                    let ones = Array2::ones((g.n(), 1));
                    ones.dot(&dout)
                }
                Pooling::None => dout,
            };
            Ok((l, backward_from(params, spec, &cache, dz)))
        })
        .collect();

    let mut total_loss = 0.0;
    let mut grad = Array1::zeros(spec.param_count());
    for item in per_graph {
        let (l, g) = item?;
        total_loss += l;
        grad += &g;
    }
    let b = batch.len() as f64;
    Ok((total_loss / b, grad / b))
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    spec: LayerSpec,
    /// Row-major entries per layer, first layer first.
    weights: Vec<Vec<f64>>,
}

const CHECKPOINT_VERSION: u32 = 1;

/// Writes spec and weights as versioned JSON; floats round-trip exactly.
pub fn save_checkpoint(params: &GcnParams, spec: &LayerSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        spec: spec.clone(),
        weights: params
            .weights
            .iter()
            .map(|w| w.iter().copied().collect())
            .collect(),
    };
    let f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, &file).map_err(|e| Error::json(path.display().to_string(), e))?;
    writeln!(w).map_err(|e| Error::io(path.display().to_string(), e))?;
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(LayerSpec, GcnParams)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: CheckpointFile = serde_json::from_reader(BufReader::new(f))
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidArgument(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    let spec = LayerSpec::new(file.spec.widths, file.spec.kappas, file.spec.pooling)?;
    if file.weights.len() != spec.layers() {
        return Err(Error::Shape("checkpoint weight count mismatch".into()));
    }
    let mut weights = Vec::with_capacity(spec.layers());
    for (l, flat) in file.weights.into_iter().enumerate() {
        let (rows, cols) = spec.layer_shape(l);
        if flat.len() != rows * cols {
            return Err(Error::Shape(format!(
                "checkpoint layer {l} has {} entries, expected {}",
                flat.len(),
                rows * cols
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "checkpoint layer {l} holds non-finite weights"
            )));
        }
        weights.push(Array2::from_shape_vec((rows, cols), flat).expect("length checked"));
    }
    let params = GcnParams::from_weights(&spec, weights)?;
    Ok((spec, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{adjacency_concat, block_diag_features};
    use ndarray::array;
    use rand::Rng;

    fn random_graph(n: usize, d: usize, seed: u64, target: Target) -> Graph {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0);
        let mut adj = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.5 {
                    adj[(i, j)] = 1.0;
                    adj[(j, i)] = 1.0;
                }
            }
        }
        Graph::new(x, adj, target).unwrap()
    }

    #[test]
    fn param_count_formula() {
        let spec = LayerSpec::new(vec![40, 16, 1], vec![3, 2], Pooling::Sum).unwrap();
        assert_eq!(spec.param_count(), 3 * 40 * 16 + 2 * 16 * 1);
        assert_eq!(spec.param_count(), 1952);

        let single = LayerSpec::new(vec![1, 1], vec![1], Pooling::Sum).unwrap();
        assert_eq!(single.param_count(), 1);
    }

    #[test]
    fn init_is_seeded_and_rejects_zero_scale() {
        let spec = LayerSpec::new(vec![3, 4, 2], vec![2, 1], Pooling::Sum).unwrap();
        let a = GcnParams::init(&spec, 9, 1.0).unwrap();
        let b = GcnParams::init(&spec, 9, 1.0).unwrap();
        assert_eq!(a, b);
        let c = GcnParams::init(&spec, 10, 1.0).unwrap();
        assert_ne!(a, c);
        assert!(GcnParams::init(&spec, 0, 0.0).is_err());
    }

    #[test]
    fn hand_worked_single_layer() {
        // n=2 path graph, kappa=2, W = [1,1]^T, sum pooling -> 6.
        let g = Graph::new(
            array![[1.0], [2.0]],
            array![[0.0, 1.0], [1.0, 0.0]],
            Target::graph_scalar(0.0),
        )
        .unwrap();
        let spec = LayerSpec::new(vec![1, 1], vec![2], Pooling::Sum).unwrap();
        let params = GcnParams::from_weights(&spec, vec![array![[1.0], [1.0]]]).unwrap();
        let (out, cache) = forward(&params, &spec, &g).unwrap();
        assert_eq!(cache.lifted[0], array![[1.0, 2.0], [2.0, 1.0]]);
        match out {
            Output::Graph(v) => assert_eq!(v[0], 6.0),
            _ => panic!("expected graph output"),
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let g = random_graph(5, 3, 1, Target::graph_scalar(0.0));
        let spec = LayerSpec::new(vec![3, 4, 2], vec![2, 3], Pooling::Sum).unwrap();
        let zeros = GcnParams::from_weights(
            &spec,
            vec![Array2::zeros((6, 4)), Array2::zeros((12, 2))],
        )
        .unwrap();
        match predict(&zeros, &spec, &g).unwrap() {
            Output::Graph(v) => assert!(v.iter().all(|&v| v == 0.0)),
            _ => panic!(),
        }
    }

    #[test]
    fn lift_matches_structural_operators() {
        // The fast lift equals A^[k] * diag(X; k) built from the public ops.
        let g = random_graph(6, 3, 4, Target::graph_scalar(0.0));
        for kappa in 1..=4 {
            let spec = LayerSpec::new(vec![3, 2], vec![kappa], Pooling::Sum).unwrap();
            let params = GcnParams::init(&spec, 2, 1.0).unwrap();
            let (_, cache) = forward(&params, &spec, &g).unwrap();
            let slow = adjacency_concat(g.adj(), kappa)
                .unwrap()
                .dot(&block_diag_features(g.x(), kappa).unwrap());
            let diff = (&cache.lifted[0] - &slow).mapv(f64::abs).sum();
            assert!(diff < 1e-12, "kappa={kappa} diff={diff}");
        }
    }

    #[test]
    fn flatten_roundtrip_and_layout() {
        let spec = LayerSpec::new(vec![2, 3, 2], vec![2, 1], Pooling::Sum).unwrap();
        let params = GcnParams::init(&spec, 3, 1.0).unwrap();
        let theta = params.flatten();
        assert_eq!(theta.len(), spec.param_count());
        // Last layer comes first: entry 0 is W2[(0,0)] (column-major).
        assert_eq!(theta[0], params.weight(1)[(0, 0)]);
        assert_eq!(theta[1], params.weight(1)[(1, 0)]);
        let back = GcnParams::from_flat(&spec, &theta).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn step_matches_flat_arithmetic() {
        let spec = LayerSpec::new(vec![2, 3, 1], vec![2, 2], Pooling::Sum).unwrap();
        let mut params = GcnParams::init(&spec, 5, 1.0).unwrap();
        let theta0 = params.flatten();
        let grad = Array1::from_shape_fn(spec.param_count(), |i| (i as f64 + 1.0) * 0.01);
        params.step(&grad, 0.5).unwrap();
        let expect = &theta0 - &(&grad * 0.5);
        let diff = (&params.flatten() - &expect).mapv(f64::abs).sum();
        assert!(diff < 1e-15);
    }

    /// Central finite differences of a scalar function of theta.
    fn fd_grad(
        spec: &LayerSpec,
        theta: &Array1<f64>,
        h: f64,
        f: impl Fn(&GcnParams) -> f64,
    ) -> Array1<f64> {
        let mut grad = Array1::zeros(theta.len());
        for i in 0..theta.len() {
            let mut plus = theta.clone();
            plus[i] += h;
            let mut minus = theta.clone();
            minus[i] -= h;
            let fp = f(&GcnParams::from_flat(spec, &plus).unwrap());
            let fm = f(&GcnParams::from_flat(spec, &minus).unwrap());
            grad[i] = (fp - fm) / (2.0 * h);
        }
        grad
    }

    fn max_rel_err(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
            .fold(0.0, f64::max)
    }

    #[test]
    fn output_jacobian_matches_finite_differences() {
        let g = random_graph(4, 3, 11, Target::graph_scalar(0.0));
        let spec = LayerSpec::new(vec![3, 5, 1], vec![3, 2], Pooling::Sum).unwrap();
        let params = GcnParams::init(&spec, 7, 1.0).unwrap();
        let (_, cache) = forward(&params, &spec, &g).unwrap();
        let jac = output_jacobian(&params, &spec, &g, &cache).unwrap();
        let fd = fd_grad(&spec, &params.flatten(), 1e-5, |p| {
            match predict(p, &spec, &g).unwrap() {
                Output::Graph(v) => v[0],
                _ => unreachable!(),
            }
        });
        let analytic = jac.row(0).to_owned();
        assert!(
            max_rel_err(&analytic, &fd) < 1e-6,
            "rel err {}",
            max_rel_err(&analytic, &fd)
        );
    }

    #[test]
    fn zero_features_zero_last_layer_jacobian_block() {
        let n = 4;
        let g = Graph::new(
            Array2::zeros((n, 3)),
            {
                let mut a = Array2::zeros((n, n));
                a[(0, 1)] = 1.0;
                a[(1, 0)] = 1.0;
                a
            },
            Target::graph_scalar(0.0),
        )
        .unwrap();
        let spec = LayerSpec::new(vec![3, 4, 1], vec![2, 2], Pooling::Sum).unwrap();
        let params = GcnParams::init(&spec, 1, 1.0).unwrap();
        let (_, cache) = forward(&params, &spec, &g).unwrap();
        let jac = output_jacobian(&params, &spec, &g, &cache).unwrap();
        // The last-layer block is linear in X^(1) = relu(lifted(0) W1) = 0.
        let last_block = spec.layer_shape(1).0 * spec.layer_shape(1).1;
        assert!(jac.row(0).iter().take(last_block).all(|&v| v == 0.0));
    }

    #[test]
    fn loss_grad_matches_finite_differences_on_batch() {
        let graphs: Vec<Graph> = (0..5)
            .map(|i| random_graph(4, 3, 20 + i, Target::graph_scalar(0.3 * i as f64)))
            .collect();
        let refs: Vec<&Graph> = graphs.iter().collect();
        let spec = LayerSpec::new(vec![3, 4, 1], vec![2, 2], Pooling::Sum).unwrap();
        let params = GcnParams::init(&spec, 2, 1.0).unwrap();
        let (_, grad) = loss_grad(&params, &spec, &refs, LossKind::Mse).unwrap();
        let fd = fd_grad(&spec, &params.flatten(), 1e-5, |p| {
            loss_grad(p, &spec, &refs, LossKind::Mse).unwrap().0
        });
        assert!(
            max_rel_err(&grad, &fd) < 1e-6,
            "rel err {}",
            max_rel_err(&grad, &fd)
        );
    }

    #[test]
    fn mse_zero_at_exact_fit() {
        let g = random_graph(3, 2, 31, Target::graph_scalar(0.0));
        let spec = LayerSpec::new(vec![2, 1], vec![1], Pooling::Sum).unwrap();
        // Zero weights produce output 0 = target.
        let params = GcnParams::from_weights(&spec, vec![Array2::zeros((2, 1))]).unwrap();
        let (loss, grad) = loss_grad(&params, &spec, &[&g], LossKind::Mse).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_residual_chain_rule() {
        // For L = 1/2 (p - y)^2, grad = (p - y) * output jacobian.
        let g = random_graph(4, 2, 33, Target::graph_scalar(1.25));
        let spec = LayerSpec::new(vec![2, 3, 1], vec![2, 1], Pooling::Sum).unwrap();
        let params = GcnParams::init(&spec, 4, 1.0).unwrap();
        let (out, cache) = forward(&params, &spec, &g).unwrap();
        let p = match out {
            Output::Graph(v) => v[0],
            _ => unreachable!(),
        };
        let jac = output_jacobian(&params, &spec, &g, &cache).unwrap();
        let (_, grad) = loss_grad(&params, &spec, &[&g], LossKind::Mse).unwrap();
        let expect = jac.row(0).mapv(|v| v * (p - 1.25));
        let diff = (&grad - &expect).mapv(f64::abs).sum();
        assert!(diff < 1e-12);
    }

    #[test]
    fn gradient_dimension_independent_of_graph_size() {
        let spec = LayerSpec::new(vec![3, 4, 1], vec![2, 2], Pooling::Sum).unwrap();
        let params = GcnParams::init(&spec, 6, 1.0).unwrap();
        let g5 = random_graph(5, 3, 40, Target::graph_scalar(0.0));
        let g50 = random_graph(50, 3, 41, Target::graph_scalar(0.0));
        let (_, grad5) = loss_grad(&params, &spec, &[&g5], LossKind::Mse).unwrap();
        let (_, grad50) = loss_grad(&params, &spec, &[&g50], LossKind::Mse).unwrap();
        assert_eq!(grad5.len(), spec.param_count());
        assert_eq!(grad50.len(), spec.param_count());
    }

    #[test]
    fn sum_pooling_is_column_sum_of_node_output() {
        let g = random_graph(6, 3, 50, Target::graph_scalar(0.0));
        let pooled_spec = LayerSpec::new(vec![3, 4, 2], vec![2, 3], Pooling::Sum).unwrap();
        let node_spec = LayerSpec::new(vec![3, 4, 2], vec![2, 3], Pooling::None).unwrap();
        let params = GcnParams::init(&pooled_spec, 8, 1.0).unwrap();
        let pooled = match predict(&params, &pooled_spec, &g).unwrap() {
            Output::Graph(v) => v,
            _ => unreachable!(),
        };
        let per_node = match predict(&params, &node_spec, &g).unwrap() {
            Output::Node(m) => m,
            _ => unreachable!(),
        };
        let sums = per_node.sum_axis(Axis(0));
        let diff = (&pooled - &sums).mapv(f64::abs).sum();
        assert!(diff < 1e-12);
    }

    #[test]
    fn node_level_loss_grad_checks_out() {
        let n = 4;
        let y = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 * 0.5);
        let g = random_graph(n, 3, 60, Target::node(y));
        let spec = LayerSpec::new(vec![3, 4, 1], vec![2, 2], Pooling::None).unwrap();
        let params = GcnParams::init(&spec, 3, 1.0).unwrap();
        let (_, grad) = loss_grad(&params, &spec, &[&g], LossKind::Mse).unwrap();
        let fd = fd_grad(&spec, &params.flatten(), 1e-5, |p| {
            loss_grad(p, &spec, &[&g], LossKind::Mse).unwrap().0
        });
        assert!(max_rel_err(&grad, &fd) < 1e-6);
    }

    #[test]
    fn bce_loss_grad_checks_out() {
        let g = random_graph(4, 3, 70, Target::graph_scalar(1.0));
        let spec = LayerSpec::new(vec![3, 4, 1], vec![2, 1], Pooling::Sum).unwrap();
        let params = GcnParams::init(&spec, 5, 1.0).unwrap();
        let (_, grad) = loss_grad(&params, &spec, &[&g], LossKind::BceWithLogits).unwrap();
        let fd = fd_grad(&spec, &params.flatten(), 1e-5, |p| {
            loss_grad(p, &spec, &[&g], LossKind::BceWithLogits).unwrap().0
        });
        assert!(max_rel_err(&grad, &fd) < 1e-6);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let g1 = random_graph(4, 3, 80, Target::graph_scalar(0.0));
        let g2 = random_graph(6, 3, 81, Target::graph_scalar(0.0));
        let spec = LayerSpec::new(vec![3, 4, 1], vec![2, 2], Pooling::Sum).unwrap();
        let params = GcnParams::init(&spec, 5, 1.0).unwrap();
        let (_, cache) = forward(&params, &spec, &g1).unwrap();
        assert!(output_jacobian(&params, &spec, &g2, &cache).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let spec = LayerSpec::new(vec![3, 5, 2], vec![2, 3], Pooling::None).unwrap();
        let params = GcnParams::init(&spec, 12, 0.7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&params, &spec, &path).unwrap();
        let (spec2, params2) = load_checkpoint(&path).unwrap();
        assert_eq!(spec2, spec);
        assert_eq!(params2, params);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let spec = LayerSpec::new(vec![2, 1], vec![1], Pooling::Sum).unwrap();
        let params = GcnParams::init(&spec, 1, 1.0).unwrap();
        assert!(loss_grad(&params, &spec, &[], LossKind::Mse).is_err());
    }
}

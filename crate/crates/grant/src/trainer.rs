//! Seeded gradient-descent training with greedy selection hooks, plateau
//! learning-rate reduction with restart-on-selection, the residual-norm
//! stopping rule, metrics, and per-epoch logging.
//!
//! One loop thread owns the parameters. Batch gradients fan out per graph
//! with a fixed reduction order, and evaluation passes are read-only, so a
//! run is bit-reproducible for a given config and seed (wallclock aside).

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flexgcn::{
    self, loss_grad, predict, sigmoid, target_matrix, GcnParams, LayerSpec,
};
pub use crate::flexgcn::LossKind;
use crate::gntk::gntk_matrix;
use crate::graph::{Dataset, Graph, Level, TaskKind};
use crate::metrics;
use crate::teaching::{
    build_schedule, residual_scores, select_batches_b, select_graphs_s, CurriculumSchedule,
    SelectionPolicy, Variant,
};

/// ReduceLROnPlateau settings: multiply the rate by `factor` (floored at
/// `min_lr`) after `patience` evaluations without improvement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub enabled: bool,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            enabled: false,
            factor: 0.5,
            patience: 10,
            min_lr: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop once the training residual norm falls below this (0 disables).
    pub stop_epsilon: f64,
    pub loss: LossKind,
    pub plateau: PlateauConfig,
    pub restart_on_selection: bool,
    pub seed: u64,
    pub init_scale: f64,
    /// Widest selection interval of the curriculum; defaults to epochs / 50.
    pub max_interval: Option<usize>,
    pub checkpoint_every: Option<usize>,
    /// Metric column of the log; defaults to MAE (regression) or ROC-AUC
    /// (classification).
    pub metric: Option<MetricKind>,
}

impl TrainerConfig {
    pub fn new(lr: f64, batch_size: usize, epochs: usize, loss: LossKind, seed: u64) -> TrainerConfig {
        TrainerConfig {
            lr,
            batch_size,
            epochs,
            stop_epsilon: 0.0,
            loss,
            plateau: PlateauConfig::default(),
            restart_on_selection: true,
            seed,
            init_scale: 1.0,
            max_interval: None,
            checkpoint_every: None,
            metric: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.stop_epsilon < 0.0 {
            return Err(Error::Config("stop_epsilon must be nonnegative".into()));
        }
        if !(self.plateau.factor > 0.0 && self.plateau.factor < 1.0) {
            return Err(Error::Config(format!(
                "plateau factor must lie in (0, 1), got {}",
                self.plateau.factor
            )));
        }
        if self.plateau.patience == 0 {
            return Err(Error::Config("plateau patience must be >= 1".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        Ok(())
    }

    /// Widest curriculum interval: explicit override or epochs / 50.
    pub fn resolved_max_interval(&self) -> usize {
        self.max_interval
            .unwrap_or(self.epochs / crate::teaching::SCHEDULE_STAGES)
            .max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Mae,
    RocAuc,
    Ap,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Mae => "mae",
            MetricKind::RocAuc => "roc_auc",
            MetricKind::Ap => "ap",
        }
    }

    fn compatible_with(&self, task: TaskKind) -> bool {
        match self {
            MetricKind::Mae => !task.is_classification(),
            MetricKind::RocAuc | MetricKind::Ap => task.is_classification(),
        }
    }

    pub fn default_for(task: TaskKind) -> MetricKind {
        if task.is_classification() {
            MetricKind::RocAuc
        } else {
            MetricKind::Mae
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mae" => Ok(MetricKind::Mae),
            "roc_auc" | "roc-auc" => Ok(MetricKind::RocAuc),
            "ap" => Ok(MetricKind::Ap),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub wallclock_ms: u64,
    /// Cumulative graphs that went through a full train step.
    pub train_evals: u64,
    /// Cumulative graphs that went through forward-only passes (selection
    /// scoring, validation, residual checks).
    pub forward_evals: u64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub metric: f64,
    pub lr: f64,
    pub selection_event: bool,
}

/// One selection action, as logged to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEvent {
    pub epoch: usize,
    pub variant: String,
    pub ratio: f64,
    pub selected_count: usize,
    pub score_min: f64,
    pub score_max: f64,
}

pub const CSV_HEADER: &str =
    "epoch,wallclock_ms,train_evals,forward_evals,train_loss,val_loss,metric,lr,selection_event";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    pub selections: Vec<SelectionEvent>,
    pub metric_name: String,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn csv_string(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.epoch,
                r.wallclock_ms,
                r.train_evals,
                r.forward_evals,
                r.train_loss,
                r.val_loss,
                r.metric,
                r.lr,
                u8::from(r.selection_event)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.csv_string())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Graphs processed in any form, per the last record.
    pub fn total_evals(&self) -> (u64, u64) {
        self.records
            .last()
            .map(|r| (r.train_evals, r.forward_evals))
            .unwrap_or((0, 0))
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let last = self.records.last();
        let (train_evals, forward_evals) = self.total_evals();
        serde_json::json!({
            "epochs_run": self.records.len(),
            "stopped_early": self.stopped_early,
            "final_train_loss": last.map(|r| r.train_loss),
            "final_val_loss": last.map(|r| r.val_loss),
            "metric_name": self.metric_name,
            "final_metric": last.map(|r| r.metric),
            "total_train_evals": train_evals,
            "total_forward_evals": forward_evals,
            // Forward-only passes cost roughly a third of a train step.
            "weighted_evals": train_evals as f64 + forward_evals as f64 / 3.0,
            "total_wallclock_ms": last.map(|r| r.wallclock_ms),
            "selection_events": self.selections.len(),
        })
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.summary_json())
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn write_selections(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(f);
        for ev in &self.selections {
            let line = serde_json::to_string(ev).map_err(|e| Error::json("selection event", e))?;
            writeln!(w, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Callbacks fired as a run progresses; the default implementations do
/// nothing. `()` is the no-op observer.
pub trait TrainObserver {
    fn on_epoch(&mut self, _record: &EpochRecord) {}
    fn on_selection(&mut self, _event: &SelectionEvent) {}
    fn on_checkpoint(&mut self, _epoch: usize, _params: &GcnParams, _spec: &LayerSpec) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Plain descent step `theta <- theta - lr * grad`.
pub fn sgd_step(params: &mut GcnParams, grad: &Array1<f64>, lr: f64) -> Result<()> {
    params.step(grad, lr)
}

/// Counter state for plateau LR reduction.
#[derive(Debug, Clone, Copy)]
pub struct PlateauState {
    best: f64,
    stale: usize,
}

impl Default for PlateauState {
    fn default() -> Self {
        PlateauState {
            best: f64::INFINITY,
            stale: 0,
        }
    }
}

/// Applies one plateau evaluation: returns the (possibly reduced) rate.
/// Improvement means dropping below the best seen by at least 1e-8.
pub fn plateau_step(state: &mut PlateauState, cfg: &PlateauConfig, lr: f64, val_loss: f64) -> f64 {
    if val_loss < state.best - 1e-8 {
        state.best = val_loss;
        state.stale = 0;
        return lr;
    }
    state.stale += 1;
    if state.stale >= cfg.patience {
        state.stale = 0;
        (lr * cfg.factor).max(cfg.min_lr)
    } else {
        lr
    }
}

/// Estimates of the sufficient-loss-reduction constants: the loss smoothness
/// `tau`, the kernel bound `gamma` (largest kernel diagonal over the probe),
/// and the resulting safe rate `1 / (2 tau gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReductionProbe {
    pub tau: f64,
    pub gamma: f64,
    pub lr_bound: f64,
}

/// Kernel-based learning-rate bound for mse training (`tau = 1`).
pub fn estimate_descent_bound(
    spec: &LayerSpec,
    params: &GcnParams,
    probe: &[&Graph],
) -> Result<LossReductionProbe> {
    let kernel = gntk_matrix(params, spec, probe, None, "descent-probe")?;
    let gamma = kernel.max_diagonal();
    if gamma <= 0.0 {
        return Err(Error::ZeroKernel);
    }
    let tau = 1.0;
    Ok(LossReductionProbe {
        tau,
        gamma,
        lr_bound: 1.0 / (2.0 * tau * gamma),
    })
}

/// Metric report of an evaluation pass: the loss plus each requested metric,
/// keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub values: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

/// Evaluates loss and metrics over a dataset. Node-level tasks pool all
/// nodes; classification metrics score sigmoid outputs against the labels;
/// masked labels are skipped.
pub fn evaluate(
    params: &GcnParams,
    spec: &LayerSpec,
    ds: &Dataset,
    loss: LossKind,
    wanted: &[MetricKind],
) -> Result<MetricReport> {
    for m in wanted {
        if !m.compatible_with(ds.task()) {
            return Err(Error::UnsupportedTask(format!(
                "metric {m} is incompatible with task {}",
                ds.task()
            )));
        }
    }
    check_loss_task(loss, ds.task())?;
    let outputs = predict_all(params, spec, ds.graphs())?;
    let mut total_loss = 0.0;
    for (g, out) in ds.graphs().iter().zip(outputs.iter()) {
        let (l, _) = flexgcn::loss_and_output_grad(out, g.target(), loss)?;
        total_loss += l;
    }
    total_loss /= ds.len() as f64;

    let mut values = BTreeMap::new();
    values.insert("loss".to_string(), total_loss);
    if !wanted.is_empty() {
        let classification = ds.task().is_classification();
        let mut preds = Vec::new();
        let mut targets = Vec::new();
        for (g, out) in ds.graphs().iter().zip(outputs.iter()) {
            let p = out.as_matrix();
            let (y, mask) = target_matrix(g.target());
            for ((i, j), &pv) in p.indexed_iter() {
                if mask.as_ref().map(|m| !m[(i, j)]).unwrap_or(false) {
                    continue;
                }
                preds.push(if classification { sigmoid(pv) } else { pv });
                targets.push(y[(i, j)]);
            }
        }
        for m in wanted {
            let v = match m {
                MetricKind::Mae => metrics::mae(&preds, &targets)?,
                MetricKind::RocAuc => {
                    let labels: Vec<bool> = targets.iter().map(|&t| t != 0.0).collect();
                    metrics::roc_auc(&preds, &labels)?
                }
                MetricKind::Ap => {
                    let labels: Vec<bool> = targets.iter().map(|&t| t != 0.0).collect();
                    metrics::average_precision(&preds, &labels)?
                }
            };
            values.insert(m.name().to_string(), v);
        }
    }
    Ok(MetricReport { values })
}

fn check_loss_task(loss: LossKind, task: TaskKind) -> Result<()> {
    let ok = match loss {
        LossKind::Mse => !task.is_classification(),
        LossKind::BceWithLogits => task.is_classification(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "loss {loss:?} is incompatible with task {task}"
        )))
    }
}

fn predict_all(
    params: &GcnParams,
    spec: &LayerSpec,
    graphs: &[Graph],
) -> Result<Vec<flexgcn::Output>> {
    graphs
        .par_iter()
        .map(|g| predict(params, spec, g))
        .collect()
}

/// Per-graph residual scores of a graph set under the current parameters;
/// classification residuals compare sigmoid outputs to labels so scores stay
/// in [0, 1].
fn score_graphs(
    params: &GcnParams,
    spec: &LayerSpec,
    graphs: &[&Graph],
    loss: LossKind,
    level: Level,
) -> Result<Vec<f64>> {
    let outputs: Vec<Array2<f64>> = graphs
        .par_iter()
        .map(|g| {
            predict(params, spec, g).map(|o| {
                let m = o.as_matrix();
                match loss {
                    LossKind::Mse => m,
                    LossKind::BceWithLogits => m.mapv(sigmoid),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut targets = Vec::with_capacity(graphs.len());
    let mut masks = Vec::with_capacity(graphs.len());
    for g in graphs {
        let (y, mask) = target_matrix(g.target());
        targets.push(y);
        masks.push(mask);
    }
    residual_scores(&outputs, &targets, Some(&masks), level)
}

/// The while-condition quantity of the training loop: the l2 norm over the
/// training set of per-graph residual scores.
fn residual_norm(scores: &[f64]) -> f64 {
    scores.iter().map(|s| s * s).sum::<f64>().sqrt()
}

struct EpochPlan {
    batches: Vec<Vec<usize>>,
    selection: Option<SelectionEvent>,
}

/// Trains a fresh network on `train_ds`, validating each epoch on `val_ds`.
///
/// The epoch loop shuffles (seeded), partitions into batches, applies the
/// selection policy at curriculum events (restarting the learning rate if
/// configured), takes one descent step per batch, and logs every epoch.
/// Training stops after `epochs` or once the training residual norm falls
/// below `stop_epsilon`.
pub fn train(
    cfg: &TrainerConfig,
    spec: &LayerSpec,
    train_ds: &Dataset,
    val_ds: Option<&Dataset>,
    policy: &SelectionPolicy,
    observer: &mut dyn TrainObserver,
) -> Result<(GcnParams, TrainingLog)> {
    cfg.validate()?;
    check_loss_task(cfg.loss, train_ds.task())?;
    if spec.input_dim() != train_ds.d() {
        return Err(Error::Config(format!(
            "spec input width {} != dataset feature dimension {}",
            spec.input_dim(),
            train_ds.d()
        )));
    }
    if spec.output_dim() != train_ds.c() {
        return Err(Error::Config(format!(
            "spec output width {} != dataset target dimension {}",
            spec.output_dim(),
            train_ds.c()
        )));
    }
    let level = train_ds.task().level();
    if spec.pooling.level() != level {
        return Err(Error::Config(format!(
            "{:?} pooling against a {level}-level dataset",
            spec.pooling
        )));
    }
    if policy.variant != Variant::None && policy.level != level {
        return Err(Error::Config(format!(
            "selection level {} != dataset level {level}",
            policy.level
        )));
    }
    if let Some(val) = val_ds {
        if val.d() != train_ds.d() || val.c() != train_ds.c() || val.task() != train_ds.task() {
            return Err(Error::Config("validation set incompatible with training set".into()));
        }
    }
    if cfg.plateau.enabled && val_ds.is_none() {
        return Err(Error::Config("plateau scheduling needs a validation set".into()));
    }
    let metric_kind = cfg.metric.unwrap_or(MetricKind::default_for(train_ds.task()));
    if !metric_kind.compatible_with(train_ds.task()) {
        return Err(Error::Config(format!(
            "metric {metric_kind} is incompatible with task {}",
            train_ds.task()
        )));
    }

    let schedule: CurriculumSchedule =
        build_schedule(policy.start_ratio, cfg.epochs, cfg.resolved_max_interval())?;

    let mut params = GcnParams::init(spec, cfg.seed, cfg.init_scale)?;
    let mut log = TrainingLog {
        records: Vec::with_capacity(cfg.epochs),
        selections: Vec::new(),
        metric_name: metric_kind.name().to_string(),
        stopped_early: false,
    };
    let n = train_ds.len();
    let graphs = train_ds.graphs();
    let mut lr = cfg.lr;
    let mut plateau_state = PlateauState::default();
    let mut train_evals: u64 = 0;
    let mut forward_evals: u64 = 0;
    // Graph indices the teacher currently provides; refreshed at events.
    let mut selected_pool: Vec<usize> = (0..n).collect();
    let started = Instant::now();

    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);

        let plan = if policy.variant == Variant::None {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            EpochPlan {
                batches: order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect(),
                selection: None,
            }
        } else if let Some(ratio) = schedule.event_at(epoch) {
            // Selection event: score the full training set under the current
            // epoch's batch partition, then select.
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let batches: Vec<Vec<usize>> =
                order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();
            let refs: Vec<&Graph> = order.iter().map(|&i| &graphs[i]).collect();
            let pool_scores = score_graphs(&params, spec, &refs, cfg.loss, level)?;
            forward_evals += n as u64;
            let mut scores_by_index = vec![0.0; n];
            for (&gi, &s) in order.iter().zip(pool_scores.iter()) {
                scores_by_index[gi] = s;
            }
            let selected_batches = match policy.variant {
                Variant::B => {
                    let batch_scores: Vec<f64> = batches
                        .iter()
                        .map(|b| {
                            b.iter().map(|&gi| scores_by_index[gi]).sum::<f64>() / b.len() as f64
                        })
                        .collect();
                    let m_batches = ((ratio * batches.len() as f64).ceil() as usize)
                        .clamp(1, batches.len());
                    select_batches_b(&batch_scores, m_batches)?
                        .into_iter()
                        .map(|bi| batches[bi].clone())
                        .collect()
                }
                Variant::S => select_graphs_s(&batches, &scores_by_index, ratio, cfg.batch_size)?,
                Variant::None => unreachable!(),
            };
            selected_pool = selected_batches.iter().flatten().copied().collect();
            let (score_min, score_max) = pool_scores.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &s| (lo.min(s), hi.max(s)),
            );
            if cfg.restart_on_selection {
                lr = cfg.lr;
                plateau_state = PlateauState::default();
            }
            EpochPlan {
                batches: selected_batches,
                selection: Some(SelectionEvent {
                    epoch,
                    variant: policy.variant.to_string(),
                    ratio,
                    selected_count: selected_pool.len(),
                    score_min,
                    score_max,
                }),
            }
        } else {
            // Between events the teacher's selection persists; reshuffle it.
            let mut order = selected_pool.clone();
            order.shuffle(&mut rng);
            EpochPlan {
                batches: order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect(),
                selection: None,
            }
        };

        let selection_event = plan.selection.is_some();
        if let Some(ev) = plan.selection {
            observer.on_selection(&ev);
            log.selections.push(ev);
        }

        let mut epoch_loss = 0.0;
        let mut epoch_graphs = 0usize;
        for batch in &plan.batches {
            let refs: Vec<&Graph> = batch.iter().map(|&i| &graphs[i]).collect();
            let (batch_loss, grad) = loss_grad(&params, spec, &refs, cfg.loss)?;
            sgd_step(&mut params, &grad, lr)?;
            epoch_loss += batch_loss * refs.len() as f64;
            epoch_graphs += refs.len();
            train_evals += refs.len() as u64;
        }
        let train_loss = if epoch_graphs > 0 {
            epoch_loss / epoch_graphs as f64
        } else {
            f64::NAN
        };

        let (val_loss, metric_value) = match val_ds {
            Some(val) => {
                let report = evaluate(&params, spec, val, cfg.loss, &[metric_kind])?;
                forward_evals += val.len() as u64;
                (
                    report.get("loss").unwrap_or(f64::NAN),
                    report.get(metric_kind.name()).unwrap_or(f64::NAN),
                )
            }
            None => (f64::NAN, f64::NAN),
        };

        let lr_logged = lr;
        if cfg.plateau.enabled {
            lr = plateau_step(&mut plateau_state, &cfg.plateau, lr, val_loss);
        }

        // Algorithm stopping rule: halt once the full-train residual norm
        // drops below epsilon; never on validation loss.
        let mut stop = false;
        if cfg.stop_epsilon > 0.0 {
            let refs: Vec<&Graph> = graphs.iter().collect();
            let scores = score_graphs(&params, spec, &refs, cfg.loss, level)?;
            forward_evals += n as u64;
            if residual_norm(&scores) < cfg.stop_epsilon {
                stop = true;
            }
        }

        let record = EpochRecord {
            epoch,
            wallclock_ms: started.elapsed().as_millis() as u64,
            train_evals,
            forward_evals,
            train_loss,
            val_loss,
            metric: metric_value,
            lr: lr_logged,
            selection_event,
        };
        observer.on_epoch(&record);
        log.records.push(record);

        if let Some(every) = cfg.checkpoint_every {
            if every > 0 && epoch % every == 0 {
                observer.on_checkpoint(epoch, &params, spec)?;
            }
        }
        if stop {
            log.stopped_early = true;
            break;
        }
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flexgcn::Pooling;
    use crate::graph::Target;
    use ndarray::array;
    use rand::Rng;

    fn toy_scalar_graph(value: f64, target: f64) -> Graph {
        Graph::new(
            array![[value]],
            Array2::zeros((1, 1)),
            Target::graph_scalar(target),
        )
        .unwrap()
    }

    fn random_dataset(count: usize, n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let graphs: Vec<Graph> = (0..count)
            .map(|_| {
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
                let y = rng.random::<f64>() * 2.0 - 1.0;
                Graph::new(x, adj, Target::graph_scalar(y)).unwrap()
            })
            .collect();
        Dataset::new(graphs, TaskKind::GraphRegression).unwrap()
    }

    #[test]
    fn sgd_step_zero_grad_and_full_reset() {
        let spec = LayerSpec::new(vec![2, 1], vec![2], Pooling::Sum).unwrap();
        let mut params = GcnParams::init(&spec, 1, 1.0).unwrap();
        let before = params.clone();
        sgd_step(&mut params, &Array1::zeros(4), 0.5).unwrap();
        assert_eq!(params, before);

        let theta = params.flatten();
        sgd_step(&mut params, &theta, 1.0).unwrap();
        assert!(params.flatten().iter().all(|&v| v == 0.0));

        assert!(sgd_step(&mut params, &Array1::zeros(3), 0.5).is_err());
    }

    #[test]
    fn quadratic_descent_recurrence() {
        // Single 1x1 weight, input 1, target 0: L = 1/2 theta^2, so
        // theta_k = 0.9^k at lr 0.1.
        let spec = LayerSpec::new(vec![1, 1], vec![1], Pooling::Sum).unwrap();
        let mut params =
            GcnParams::from_weights(&spec, vec![array![[1.0]]]).unwrap();
        let g = toy_scalar_graph(1.0, 0.0);
        for k in 1..=20 {
            let (_, grad) = loss_grad(&params, &spec, &[&g], LossKind::Mse).unwrap();
            sgd_step(&mut params, &grad, 0.1).unwrap();
            let expect = 0.9f64.powi(k);
            assert!((params.flatten()[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn plateau_counter_semantics() {
        let cfg = PlateauConfig {
            enabled: true,
            factor: 0.5,
            patience: 2,
            min_lr: 1e-6,
        };
        let mut st = PlateauState::default();
        // Strictly decreasing: unchanged.
        let mut lr = 0.01;
        for v in [1.0, 0.9, 0.8, 0.7] {
            lr = plateau_step(&mut st, &cfg, lr, v);
        }
        assert_eq!(lr, 0.01);

        // Constant loss: halves after two stale evaluations.
        let mut st = PlateauState::default();
        let mut lr = 0.01;
        lr = plateau_step(&mut st, &cfg, lr, 1.0); // sets best
        lr = plateau_step(&mut st, &cfg, lr, 1.0); // stale 1
        assert_eq!(lr, 0.01);
        lr = plateau_step(&mut st, &cfg, lr, 1.0); // stale 2 -> reduce
        assert_eq!(lr, 0.005);

        // Floor at min_lr.
        let cfg_floor = PlateauConfig {
            min_lr: 0.004,
            ..cfg
        };
        let mut st = PlateauState::default();
        let mut lr = 0.005;
        for _ in 0..10 {
            lr = plateau_step(&mut st, &cfg_floor, lr, 1.0);
        }
        assert_eq!(lr, 0.004);
    }

    #[test]
    fn descent_bound_examples() {
        // Single node with feature 2 and one 1x1 weight: jacobian is 2, so
        // gamma = 4 and the bound is 1/(2*1*4).
        let spec = LayerSpec::new(vec![1, 1], vec![1], Pooling::Sum).unwrap();
        let params = GcnParams::from_weights(&spec, vec![array![[0.3]]]).unwrap();
        let g = toy_scalar_graph(2.0, 0.0);
        let probe = estimate_descent_bound(&spec, &params, &[&g]).unwrap();
        assert_eq!(probe.gamma, 4.0);
        assert_eq!(probe.lr_bound, 0.125);

        // Two-layer net with zero weights has zero jacobians everywhere.
        let spec2 = LayerSpec::new(vec![1, 2, 1], vec![1, 1], Pooling::Sum).unwrap();
        let zero = GcnParams::from_weights(
            &spec2,
            vec![Array2::zeros((1, 2)), Array2::zeros((2, 1))],
        )
        .unwrap();
        assert!(matches!(
            estimate_descent_bound(&spec2, &zero, &[&g]),
            Err(Error::ZeroKernel)
        ));
    }

    #[test]
    fn evaluate_reports_known_values() {
        // Identity-ish regression: zero weights, zero targets -> MAE 0.
        let spec = LayerSpec::new(vec![1, 1], vec![1], Pooling::Sum).unwrap();
        let params = GcnParams::from_weights(&spec, vec![array![[0.0]]]).unwrap();
        let ds = Dataset::new(
            vec![toy_scalar_graph(1.0, 0.0), toy_scalar_graph(2.0, 0.0)],
            TaskKind::GraphRegression,
        )
        .unwrap();
        let report = evaluate(&params, &spec, &ds, LossKind::Mse, &[MetricKind::Mae]).unwrap();
        assert_eq!(report.get("mae"), Some(0.0));
        assert_eq!(report.get("loss"), Some(0.0));

        // Metric/task compatibility.
        assert!(evaluate(&params, &spec, &ds, LossKind::Mse, &[MetricKind::RocAuc]).is_err());
    }

    #[test]
    fn evaluate_degenerate_classification_errors() {
        let spec = LayerSpec::new(vec![1, 1], vec![1], Pooling::Sum).unwrap();
        let params = GcnParams::from_weights(&spec, vec![array![[0.2]]]).unwrap();
        let ds = Dataset::new(
            vec![toy_scalar_graph(1.0, 1.0), toy_scalar_graph(2.0, 1.0)],
            TaskKind::GraphClassification,
        )
        .unwrap();
        assert!(matches!(
            evaluate(&params, &spec, &ds, LossKind::BceWithLogits, &[MetricKind::RocAuc]),
            Err(Error::DegenerateLabels)
        ));
    }

    fn small_cfg(epochs: usize, seed: u64) -> TrainerConfig {
        TrainerConfig::new(0.01, 8, epochs, LossKind::Mse, seed)
    }

    #[test]
    fn plain_training_runs_all_epochs_and_is_deterministic() {
        let spec = LayerSpec::new(vec![3, 4, 1], vec![2, 2], Pooling::Sum).unwrap();
        let train_ds = random_dataset(24, 5, 3, 1);
        let val_ds = random_dataset(8, 5, 3, 2);
        let cfg = small_cfg(5, 42);
        let policy = SelectionPolicy::none(Level::Graph);

        let (p1, log1) = train(&cfg, &spec, &train_ds, Some(&val_ds), &policy, &mut ()).unwrap();
        let (p2, log2) = train(&cfg, &spec, &train_ds, Some(&val_ds), &policy, &mut ()).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(log1.records.len(), 5);
        for (a, b) in log1.records.iter().zip(log2.records.iter()) {
            let mut a = a.clone();
            let mut b = b.clone();
            a.wallclock_ms = 0;
            b.wallclock_ms = 0;
            assert_eq!(a, b);
        }
        // Full data each epoch.
        assert_eq!(log1.records.last().unwrap().train_evals, 24 * 5);
        assert!(!log1.stopped_early);
    }

    #[test]
    fn zero_epochs_yields_empty_log() {
        let spec = LayerSpec::new(vec![3, 4, 1], vec![2, 2], Pooling::Sum).unwrap();
        let train_ds = random_dataset(8, 4, 3, 3);
        let cfg = small_cfg(0, 1);
        let policy = SelectionPolicy::none(Level::Graph);
        let (_, log) = train(&cfg, &spec, &train_ds, None, &policy, &mut ()).unwrap();
        assert!(log.records.is_empty());
        assert_eq!(log.csv_string(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn selection_reduces_train_evals() {
        let spec = LayerSpec::new(vec![3, 4, 1], vec![2, 2], Pooling::Sum).unwrap();
        let train_ds = random_dataset(32, 5, 3, 4);
        let cfg = small_cfg(6, 9);
        let none = SelectionPolicy::none(Level::Graph);
        let b = SelectionPolicy::new(Variant::B, 0.25, Level::Graph).unwrap();

        let (_, log_none) = train(&cfg, &spec, &train_ds, None, &none, &mut ()).unwrap();
        let (_, log_b) = train(&cfg, &spec, &train_ds, None, &b, &mut ()).unwrap();
        assert!(log_b.records.last().unwrap().train_evals
            < log_none.records.last().unwrap().train_evals);
        assert!(!log_b.selections.is_empty());
        // Scoring passes were accounted.
        assert!(log_b.records.last().unwrap().forward_evals > 0);
        for ev in &log_b.selections {
            assert!(ev.selected_count >= 1);
            assert!(ev.score_max >= ev.score_min);
        }
    }

    #[test]
    fn selection_s_repacks_batches() {
        let spec = LayerSpec::new(vec![3, 4, 1], vec![2, 2], Pooling::Sum).unwrap();
        let train_ds = random_dataset(32, 5, 3, 5);
        let cfg = small_cfg(4, 11);
        let s = SelectionPolicy::new(Variant::S, 0.5, Level::Graph).unwrap();
        let (_, log) = train(&cfg, &spec, &train_ds, None, &s, &mut ()).unwrap();
        assert!(!log.selections.is_empty());
        assert!(log.selections[0].selected_count >= 16);
    }

    #[test]
    fn early_stop_on_residual_norm() {
        // Zero targets: training drives the single weight (and with it every
        // residual) toward zero, so the epsilon rule fires before epoch 500.
        let spec = LayerSpec::new(vec![1, 1], vec![1], Pooling::Sum).unwrap();
        let graphs: Vec<Graph> = (0..4)
            .map(|i| {
                Graph::new(
                    array![[0.8 + 0.1 * i as f64]],
                    Array2::zeros((1, 1)),
                    Target::graph_scalar(0.0),
                )
                .unwrap()
            })
            .collect();
        let train_ds = Dataset::new(graphs, TaskKind::GraphRegression).unwrap();
        let mut cfg = TrainerConfig::new(1.0, 4, 500, LossKind::Mse, 3);
        cfg.stop_epsilon = 1e-6;
        let policy = SelectionPolicy::none(Level::Graph);
        let (_, log) = train(&cfg, &spec, &train_ds, None, &policy, &mut ()).unwrap();
        assert!(log.stopped_early);
        assert!(log.records.len() < 500);
    }

    #[test]
    fn config_incompatibilities_rejected_before_stepping() {
        let spec = LayerSpec::new(vec![3, 4, 1], vec![2, 2], Pooling::Sum).unwrap();
        let train_ds = random_dataset(8, 4, 3, 6);
        let policy = SelectionPolicy::none(Level::Graph);

        // Wrong loss for the task.
        let cfg = TrainerConfig::new(0.01, 4, 3, LossKind::BceWithLogits, 1);
        assert!(train(&cfg, &spec, &train_ds, None, &policy, &mut ()).is_err());

        // Wrong feature width.
        let bad_spec = LayerSpec::new(vec![5, 4, 1], vec![2, 2], Pooling::Sum).unwrap();
        let cfg = small_cfg(3, 1);
        assert!(train(&cfg, &bad_spec, &train_ds, None, &policy, &mut ()).is_err());

        // Node pooling against a graph-level task.
        let node_spec = LayerSpec::new(vec![3, 4, 1], vec![2, 2], Pooling::None).unwrap();
        assert!(train(&cfg, &node_spec, &train_ds, None, &policy, &mut ()).is_err());
    }
}

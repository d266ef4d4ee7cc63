//! Flat key=value run configuration.
//!
//! One namespace covers every knob of every command so resolved configs are
//! grep-able and diff-able: defaults, then an optional preset, then an
//! optional config file, then command-line flag overrides. Unknown keys are
//! rejected, and every run writes the fully-resolved configuration next to
//! its outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flexgcn::{LayerSpec, LossKind, Pooling};
use crate::graph::{Level, TaskKind};
use crate::synth::{GraphonKind, SynthConfig, SynthTask, DEFAULT_RESOLUTION};
use crate::teaching::{SelectionPolicy, Variant};
use crate::trainer::{MetricKind, PlateauConfig, TrainerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // Data
    pub task: Option<TaskKind>,
    pub train_file: Option<PathBuf>,
    pub val_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    // Model
    pub widths: Vec<usize>,
    pub kappas: Vec<usize>,
    pub pooling: Option<Pooling>,
    // Trainer
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub stop_epsilon: f64,
    pub loss: Option<LossKind>,
    pub seed: u64,
    pub init_scale: f64,
    pub plateau: bool,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_min_lr: f64,
    pub restart_on_selection: bool,
    pub max_interval: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub metric: Option<MetricKind>,
    // Selection policy
    pub policy: Variant,
    pub start_ratio: f64,
    // Synthetic data
    pub graphon: String,
    pub graphon_p: f64,
    pub graphon_p_in: f64,
    pub graphon_p_out: f64,
    pub resolution: usize,
    pub nodes_mean: usize,
    pub num_graphs: usize,
    pub feature_dim: usize,
    pub synth_task: SynthTask,
    pub teacher_hidden: usize,
    pub teacher_kappas: Vec<usize>,
    pub teacher_seed: u64,
    pub teacher_scale: f64,
    pub dataset_seed: u64,
    pub split: (usize, usize, usize),
    pub split_seed: u64,
    pub threshold_pct: f64,
    // Kernel probes
    pub probe_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: None,
            train_file: None,
            val_file: None,
            test_file: None,
            widths: Vec::new(),
            kappas: Vec::new(),
            pooling: None,
            lr: 0.001,
            batch_size: 100,
            epochs: 100,
            stop_epsilon: 0.0,
            loss: None,
            seed: 0,
            init_scale: 1.0,
            plateau: false,
            plateau_factor: 0.5,
            plateau_patience: 10,
            plateau_min_lr: 1e-6,
            restart_on_selection: true,
            max_interval: None,
            checkpoint_every: None,
            metric: None,
            policy: Variant::None,
            start_ratio: 1.0,
            graphon: "gradient".into(),
            graphon_p: 0.3,
            graphon_p_in: 0.8,
            graphon_p_out: 0.2,
            resolution: DEFAULT_RESOLUTION,
            nodes_mean: 100,
            num_graphs: 50_000,
            feature_dim: 40,
            synth_task: SynthTask::Reg,
            teacher_hidden: 16,
            teacher_kappas: vec![2, 2],
            teacher_seed: 7,
            teacher_scale: 1.0,
            dataset_seed: 0,
            split: (30_000, 10_000, 10_000),
            split_seed: 0,
            threshold_pct: 80.0,
            probe_size: 64,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| Error::Config(format!("key `{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|part| parse_value::<usize>(key, part))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::Config(format!(
            "key `{key}`: expected true/false, got `{other}`"
        ))),
    }
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value.trim().is_empty() {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

impl RunConfig {
    /// Applies one `key=value` assignment; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "task" => self.task = parse_opt(key, v)?,
            "train_file" => self.train_file = (!v.is_empty()).then(|| PathBuf::from(v)),
            "val_file" => self.val_file = (!v.is_empty()).then(|| PathBuf::from(v)),
            "test_file" => self.test_file = (!v.is_empty()).then(|| PathBuf::from(v)),
            "widths" => self.widths = if v.is_empty() { Vec::new() } else { parse_list(key, v)? },
            "kappas" => self.kappas = if v.is_empty() { Vec::new() } else { parse_list(key, v)? },
            "pooling" => {
                self.pooling = match v {
                    "" => None,
                    "sum" => Some(Pooling::Sum),
                    "none" => Some(Pooling::None),
                    other => {
                        return Err(Error::Config(format!(
                            "key `pooling`: expected sum/none, got `{other}`"
                        )))
                    }
                }
            }
            "lr" => self.lr = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "stop_epsilon" => self.stop_epsilon = parse_value(key, v)?,
            "loss" => self.loss = parse_opt(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "init_scale" => self.init_scale = parse_value(key, v)?,
            "plateau" => self.plateau = parse_bool(key, v)?,
            "plateau_factor" => self.plateau_factor = parse_value(key, v)?,
            "plateau_patience" => self.plateau_patience = parse_value(key, v)?,
            "plateau_min_lr" => self.plateau_min_lr = parse_value(key, v)?,
            "restart_on_selection" => self.restart_on_selection = parse_bool(key, v)?,
            "max_interval" => self.max_interval = parse_opt(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse_opt(key, v)?,
            "metric" => self.metric = parse_opt(key, v)?,
            "policy" => self.policy = parse_value(key, v)?,
            "start_ratio" => self.start_ratio = parse_value(key, v)?,
            "graphon" => self.graphon = v.to_string(),
            "graphon_p" => self.graphon_p = parse_value(key, v)?,
            "graphon_p_in" => self.graphon_p_in = parse_value(key, v)?,
            "graphon_p_out" => self.graphon_p_out = parse_value(key, v)?,
            "resolution" => self.resolution = parse_value(key, v)?,
            "nodes_mean" => self.nodes_mean = parse_value(key, v)?,
            "num_graphs" => self.num_graphs = parse_value(key, v)?,
            "feature_dim" => self.feature_dim = parse_value(key, v)?,
            "synth_task" => {
                self.synth_task = match v {
                    "reg" => SynthTask::Reg,
                    "cls" => SynthTask::Cls,
                    other => {
                        return Err(Error::Config(format!(
                            "key `synth_task`: expected reg/cls, got `{other}`"
                        )))
                    }
                }
            }
            "teacher_hidden" => self.teacher_hidden = parse_value(key, v)?,
            "teacher_kappas" => self.teacher_kappas = parse_list(key, v)?,
            "teacher_seed" => self.teacher_seed = parse_value(key, v)?,
            "teacher_scale" => self.teacher_scale = parse_value(key, v)?,
            "dataset_seed" => self.dataset_seed = parse_value(key, v)?,
            "split" => {
                let parts = parse_list(key, v)?;
                if parts.len() != 3 {
                    return Err(Error::Config(format!(
                        "key `split`: expected three comma-separated counts, got `{v}`"
                    )));
                }
                self.split = (parts[0], parts[1], parts[2]);
            }
            "split_seed" => self.split_seed = parse_value(key, v)?,
            "threshold_pct" => self.threshold_pct = parse_value(key, v)?,
            "probe_size" => self.probe_size = parse_value(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{origin}:{}: expected key=value, got `{line}`", lineno + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let text = preset_text(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown preset `{name}` (available: {})",
                PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ))
        })?;
        self.apply_text(text, &format!("preset {name}"))
    }

    /// All keys and their effective values, sorted; unset optionals print as
    /// empty values.
    pub fn resolved_lines(&self) -> String {
        let mut map: BTreeMap<&'static str, String> = BTreeMap::new();
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        map.insert("task", self.task.map(|t| t.to_string()).unwrap_or_default());
        map.insert(
            "train_file",
            self.train_file.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        map.insert(
            "val_file",
            self.val_file.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        map.insert(
            "test_file",
            self.test_file.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        map.insert("widths", list(&self.widths));
        map.insert("kappas", list(&self.kappas));
        map.insert(
            "pooling",
            match self.pooling {
                Some(Pooling::Sum) => "sum".into(),
                Some(Pooling::None) => "none".into(),
                None => String::new(),
            },
        );
        map.insert("lr", self.lr.to_string());
        map.insert("batch_size", self.batch_size.to_string());
        map.insert("epochs", self.epochs.to_string());
        map.insert("stop_epsilon", self.stop_epsilon.to_string());
        map.insert(
            "loss",
            match self.loss {
                Some(LossKind::Mse) => "mse".into(),
                Some(LossKind::BceWithLogits) => "bce-with-logits".into(),
                None => String::new(),
            },
        );
        map.insert("seed", self.seed.to_string());
        map.insert("init_scale", self.init_scale.to_string());
        map.insert("plateau", self.plateau.to_string());
        map.insert("plateau_factor", self.plateau_factor.to_string());
        map.insert("plateau_patience", self.plateau_patience.to_string());
        map.insert("plateau_min_lr", self.plateau_min_lr.to_string());
        map.insert("restart_on_selection", self.restart_on_selection.to_string());
        map.insert(
            "max_interval",
            self.max_interval.map(|v| v.to_string()).unwrap_or_default(),
        );
        map.insert(
            "checkpoint_every",
            self.checkpoint_every.map(|v| v.to_string()).unwrap_or_default(),
        );
        map.insert("metric", self.metric.map(|m| m.to_string()).unwrap_or_default());
        map.insert("policy", self.policy.to_string());
        map.insert("start_ratio", self.start_ratio.to_string());
        map.insert("graphon", self.graphon.clone());
        map.insert("graphon_p", self.graphon_p.to_string());
        map.insert("graphon_p_in", self.graphon_p_in.to_string());
        map.insert("graphon_p_out", self.graphon_p_out.to_string());
        map.insert("resolution", self.resolution.to_string());
        map.insert("nodes_mean", self.nodes_mean.to_string());
        map.insert("num_graphs", self.num_graphs.to_string());
        map.insert("feature_dim", self.feature_dim.to_string());
        map.insert(
            "synth_task",
            match self.synth_task {
                SynthTask::Reg => "reg".into(),
                SynthTask::Cls => "cls".into(),
            },
        );
        map.insert("teacher_hidden", self.teacher_hidden.to_string());
        map.insert("teacher_kappas", list(&self.teacher_kappas));
        map.insert("teacher_seed", self.teacher_seed.to_string());
        map.insert("teacher_scale", self.teacher_scale.to_string());
        map.insert("dataset_seed", self.dataset_seed.to_string());
        map.insert(
            "split",
            format!("{},{},{}", self.split.0, self.split.1, self.split.2),
        );
        map.insert("split_seed", self.split_seed.to_string());
        map.insert("threshold_pct", self.threshold_pct.to_string());
        map.insert("probe_size", self.probe_size.to_string());

        let mut out = String::new();
        for (k, v) in map {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.resolved_lines())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Task kind, either explicit or defaulted to node regression.
    pub fn resolved_task(&self) -> TaskKind {
        self.task.unwrap_or(TaskKind::NodeRegression)
    }

    pub fn to_layer_spec(&self) -> Result<LayerSpec> {
        if self.widths.is_empty() || self.kappas.is_empty() {
            return Err(Error::Config(
                "model needs `widths` and `kappas` (e.g. widths=40,64,1 kappas=3,2)".into(),
            ));
        }
        let pooling = self.pooling.unwrap_or(match self.resolved_task().level() {
            Level::Graph => Pooling::Sum,
            Level::Node => Pooling::None,
        });
        LayerSpec::new(self.widths.clone(), self.kappas.clone(), pooling)
    }

    pub fn resolved_loss(&self) -> LossKind {
        self.loss.unwrap_or(if self.resolved_task().is_classification() {
            LossKind::BceWithLogits
        } else {
            LossKind::Mse
        })
    }

    pub fn to_trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            stop_epsilon: self.stop_epsilon,
            loss: self.resolved_loss(),
            plateau: PlateauConfig {
                enabled: self.plateau,
                factor: self.plateau_factor,
                patience: self.plateau_patience,
                min_lr: self.plateau_min_lr,
            },
            restart_on_selection: self.restart_on_selection,
            seed: self.seed,
            init_scale: self.init_scale,
            max_interval: self.max_interval,
            checkpoint_every: self.checkpoint_every,
            metric: self.metric,
        }
    }

    pub fn to_policy(&self) -> Result<SelectionPolicy> {
        SelectionPolicy::new(self.policy, self.start_ratio, self.resolved_task().level())
    }

    pub fn graphon_kind(&self) -> Result<GraphonKind> {
        match self.graphon.as_str() {
            "constant" => Ok(GraphonKind::Constant { p: self.graphon_p }),
            "gradient" => Ok(GraphonKind::Gradient),
            "stochastic-block" => Ok(GraphonKind::StochasticBlock {
                p_in: self.graphon_p_in,
                p_out: self.graphon_p_out,
            }),
            other => Err(Error::Config(format!(
                "key `graphon`: expected constant/gradient/stochastic-block, got `{other}`"
            ))),
        }
    }

    pub fn to_synth_config(&self) -> Result<SynthConfig> {
        if self.teacher_kappas.len() != 2 {
            return Err(Error::Config(
                "teacher_kappas must list exactly two orders (2-layer teacher)".into(),
            ));
        }
        Ok(SynthConfig {
            graphon: self.graphon_kind()?,
            resolution: self.resolution,
            nodes_mean: self.nodes_mean,
            num_graphs: self.num_graphs,
            feature_dim: self.feature_dim,
            task: self.synth_task,
            teacher_hidden: self.teacher_hidden,
            teacher_kappas: (self.teacher_kappas[0], self.teacher_kappas[1]),
            teacher_seed: self.teacher_seed,
            teacher_scale: self.teacher_scale,
            dataset_seed: self.dataset_seed,
            split: self.split,
            split_seed: self.split_seed,
            threshold_pct: self.threshold_pct,
        })
    }
}

/// Built-in presets, also shipped as files under `presets/`.
pub const PRESETS: &[(&str, &str)] = &[
    ("qm9", include_str!("../presets/qm9.cfg")),
    ("zinc", include_str!("../presets/zinc.cfg")),
    ("ogbg-molhiv", include_str!("../presets/ogbg-molhiv.cfg")),
    ("ogbg-molpcba", include_str!("../presets/ogbg-molpcba.cfg")),
    ("gen-reg", include_str!("../presets/gen-reg.cfg")),
    ("gen-cls", include_str!("../presets/gen-cls.cfg")),
    ("gen-reg-mini", include_str!("../presets/gen-reg-mini.cfg")),
    ("gen-cls-mini", include_str!("../presets/gen-cls-mini.cfg")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected() {
        let mut cfg = RunConfig::default();
        let err = cfg.set("learning_rate", "0.1").unwrap_err();
        assert!(err.to_string().contains("unknown key `learning_rate`"));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn text_parsing_with_comments() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nlr = 0.25\n\nbatch_size=7 # trailing\n", "test")
            .unwrap();
        assert_eq!(cfg.lr, 0.25);
        assert_eq!(cfg.batch_size, 7);
        assert!(cfg.apply_text("nonsense line\n", "test").is_err());
    }

    #[test]
    fn resolved_lines_roundtrip() {
        let mut cfg = RunConfig::default();
        cfg.apply_preset("gen-cls").unwrap();
        let text = cfg.resolved_lines();
        let mut back = RunConfig::default();
        back.apply_text(&text, "resolved").unwrap();
        assert_eq!(back, cfg);
        assert!(text.contains("lr=0.0002"));
        assert!(text.contains("kappas=4,3"));
        assert!(text.contains("batch_size=200"));
        assert!(text.contains("start_ratio=0.05"));
        assert!(text.contains("epochs=500"));
    }

    #[test]
    fn qm9_preset_matches_published_settings() {
        let mut cfg = RunConfig::default();
        cfg.apply_preset("qm9").unwrap();
        assert_eq!(cfg.lr, 0.00005);
        assert_eq!(cfg.kappas, vec![3, 2]);
        assert_eq!(cfg.batch_size, 256);
        assert_eq!(cfg.start_ratio, 0.05);
        assert_eq!(cfg.epochs, 750);
    }

    #[test]
    fn every_preset_parses() {
        for (name, _) in PRESETS {
            let mut cfg = RunConfig::default();
            cfg.apply_preset(name).unwrap_or_else(|e| panic!("preset {name}: {e}"));
            cfg.to_layer_spec().unwrap_or_else(|e| panic!("preset {name} spec: {e}"));
        }
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_preset("nope").is_err());
    }

    #[test]
    fn spec_and_policy_derivation() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "task=graph-regression\nwidths=5,8,1\nkappas=2,2\npolicy=B\nstart_ratio=0.3\n",
            "test",
        )
        .unwrap();
        let spec = cfg.to_layer_spec().unwrap();
        assert_eq!(spec.pooling, Pooling::Sum);
        let policy = cfg.to_policy().unwrap();
        assert_eq!(policy.variant, Variant::B);
        assert_eq!(policy.level, Level::Graph);
        assert_eq!(cfg.resolved_loss(), LossKind::Mse);
    }
}

//! Command-line surface: generate datasets, train with or without selection,
//! evaluate checkpoints, and probe kernels, all driven by the flat key=value
//! [`RunConfig`](crate::config::RunConfig).
//!
//! Configuration precedence: defaults, then `--preset`, then `--config`,
//! then repeated `--set key=value`, then dedicated flags (`--seed`,
//! `--policy`). Every command writes the fully-resolved configuration into
//! its output directory before doing any work.
//!
//! Exit codes: 0 on success, 1 for usage/config errors, 2 for runtime
//! errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::flexgcn::{self, GcnParams, LayerSpec, Pooling};
use crate::gntk::{gntk_matrix, kernel_drift, KernelMatrix};
use crate::graph::{Dataset, Graph};
use crate::synth::generate_dataset;
use crate::trainer::{self, evaluate, MetricKind, TrainObserver};

#[derive(Parser)]
#[command(
    name = "grant",
    version,
    about = "Flexible GCN training with tangent-kernel probes and greedy example selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graphon dataset (train/val/test + metadata).
    Generate(GenerateArgs),
    /// Train a flexible GCN, optionally with batch- or graph-level selection.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset and report metrics as JSON.
    Eval(EvalArgs),
    /// Export kernel matrices for checkpoints and report drift between them.
    Gntk(GntkArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset (qm9, zinc, ogbg-molhiv, ogbg-molpcba, gen-reg,
    /// gen-cls, gen-reg-mini, gen-cls-mini).
    #[arg(long)]
    preset: Option<String>,
    /// Inline override, repeatable: --set key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed override (the command's primary seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; falls back to GRANT_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Selection policy: none, B, or S.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Parameter checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset file; defaults to the config's test_file.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct GntkArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// One or more checkpoints, in trajectory order.
    #[arg(long, required = true, num_args = 1..)]
    checkpoint: Vec<PathBuf>,
    /// Probe dataset file; defaults to the config's test_file or train_file.
    #[arg(long)]
    data: Option<PathBuf>,
}

/// Parses arguments and runs a command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gntk(args) => cmd_gntk(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_threads(requested: Option<usize>) -> Result<()> {
    let threads = match requested {
        Some(t) => Some(t),
        None => match std::env::var("GRANT_THREADS") {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| {
                Error::Config(format!("GRANT_THREADS must be an integer, got `{v}`"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        // A second initialization (tests, repeated calls) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    init_threads(common.threads)?;
    let mut cfg = RunConfig::default();
    if let Some(name) = &common.preset {
        cfg.apply_preset(name)?;
    }
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for kv in &common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            Error::Config(format!("--set expects key=value, got `{kv}`"))
        })?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn prepare_out_dir(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    cfg.write_resolved(&out_dir.join("resolved.cfg"))
}

fn load_dataset(cfg: &RunConfig, path: &Path) -> Result<Dataset> {
    match cfg.task {
        Some(task) => Dataset::load_as(path, task),
        None => Dataset::load(path),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.common)?;
    if let Some(seed) = args.common.seed {
        cfg.dataset_seed = seed;
    }
    prepare_out_dir(&cfg, &args.common.out_dir)?;
    let synth = cfg.to_synth_config()?;
    let files = generate_dataset(&synth, &args.common.out_dir)?;
    println!(
        "wrote {} / {} / {} (+ metadata, teacher checkpoint)",
        files.train.display(),
        files.val.display(),
        files.test.display()
    );
    Ok(())
}

/// Writes periodic checkpoints during training.
struct FileObserver {
    out_dir: PathBuf,
}

impl TrainObserver for FileObserver {
    fn on_checkpoint(&mut self, epoch: usize, params: &GcnParams, spec: &LayerSpec) -> Result<()> {
        let path = self.out_dir.join(format!("checkpoint_epoch_{epoch}.json"));
        flexgcn::save_checkpoint(params, spec, path)
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.common)?;
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    if let Some(policy) = &args.policy {
        cfg.policy = policy.parse()?;
    }
    let out_dir = &args.common.out_dir;
    prepare_out_dir(&cfg, out_dir)?;

    let spec = cfg.to_layer_spec()?;
    let train_file = cfg
        .train_file
        .clone()
        .ok_or_else(|| Error::Config("train needs `train_file`".into()))?;
    let train_ds = load_dataset(&cfg, &train_file)?;
    let val_ds = match &cfg.val_file {
        Some(path) => Some(load_dataset(&cfg, path)?),
        None => None,
    };
    let trainer_cfg = cfg.to_trainer_config();
    let policy = cfg.to_policy()?;

    let mut observer = FileObserver {
        out_dir: out_dir.clone(),
    };
    let (params, log) = trainer::train(
        &trainer_cfg,
        &spec,
        &train_ds,
        val_ds.as_ref(),
        &policy,
        &mut observer,
    )?;

    flexgcn::save_checkpoint(&params, &spec, out_dir.join("checkpoint_final.json"))?;
    log.write_csv(out_dir.join("log.csv"))?;
    log.write_summary(out_dir.join("summary.json"))?;
    log.write_selections(out_dir.join("selections.jsonl"))?;
    let (train_evals, forward_evals) = log.total_evals();
    println!(
        "trained {} epochs (policy {}): train_evals={train_evals} forward_evals={forward_evals}",
        log.records.len(),
        policy.variant,
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    let out_dir = &args.common.out_dir;
    prepare_out_dir(&cfg, out_dir)?;

    let (spec, params) = flexgcn::load_checkpoint(&args.checkpoint)?;
    let data = args
        .data
        .clone()
        .or_else(|| cfg.test_file.clone())
        .ok_or_else(|| Error::Config("eval needs --data or `test_file`".into()))?;
    let ds = load_dataset(&cfg, &data)?;
    let loss = cfg.loss.unwrap_or(if ds.task().is_classification() {
        crate::flexgcn::LossKind::BceWithLogits
    } else {
        crate::flexgcn::LossKind::Mse
    });
    let metrics: Vec<MetricKind> = match cfg.metric {
        Some(m) => vec![m],
        None => {
            if ds.task().is_classification() {
                vec![MetricKind::RocAuc, MetricKind::Ap]
            } else {
                vec![MetricKind::Mae]
            }
        }
    };
    let report = evaluate(&params, &spec, &ds, loss, &metrics)?;
    let json = serde_json::to_string_pretty(&report.values)
        .map_err(|e| Error::json("metric report", e))?;
    std::fs::write(out_dir.join("metrics.json"), format!("{json}\n"))
        .map_err(|e| Error::io("metrics.json", e))?;
    println!("{json}");
    Ok(())
}

fn cmd_gntk(args: GntkArgs) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    let out_dir = &args.common.out_dir;
    prepare_out_dir(&cfg, out_dir)?;

    let data = args
        .data
        .clone()
        .or_else(|| cfg.test_file.clone())
        .or_else(|| cfg.train_file.clone())
        .ok_or_else(|| Error::Config("gntk needs --data, `test_file`, or `train_file`".into()))?;
    let ds = load_dataset(&cfg, &data)?;
    let probe_len = cfg.probe_size.min(ds.len());
    let probe: Vec<&Graph> = ds.graphs()[..probe_len].iter().collect();
    let probe_ids: Vec<usize> = (0..probe_len).collect();

    let mut kernels: Vec<KernelMatrix> = Vec::with_capacity(args.checkpoint.len());
    for path in &args.checkpoint {
        let (spec, params) = flexgcn::load_checkpoint(path)?;
        if spec.pooling != Pooling::Sum || spec.output_dim() != 1 {
            return Err(Error::UnsupportedTask(format!(
                "{}: kernel probes need a scalar sum-pooled checkpoint",
                path.display()
            )));
        }
        let tag = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "checkpoint".into());
        let kernel = gntk_matrix(&params, &spec, &probe, Some(probe_ids.clone()), tag.clone())?;
        kernel.write_csv(out_dir.join(format!("{tag}.kernel.csv")))?;
        kernel.write_binary(out_dir.join(format!("{tag}.kernel.bin")))?;
        kernels.push(kernel);
    }

    let mut report = serde_json::json!({
        "probe_size": probe_len,
        "tags": kernels.iter().map(|k| k.theta_tag().to_string()).collect::<Vec<_>>(),
    });
    if kernels.len() >= 2 {
        let mut drifts = Vec::with_capacity(kernels.len() - 1);
        for pair in kernels.windows(2) {
            drifts.push(kernel_drift(&pair[0], &pair[1])?);
        }
        let ratio = match (drifts.first(), drifts.last()) {
            (Some(&first), Some(&last)) if first > 0.0 => Some(last / first),
            _ => None,
        };
        report["drifts"] = serde_json::json!(drifts);
        report["final_over_first_drift"] = serde_json::json!(ratio);
        std::fs::write(
            out_dir.join("drift.json"),
            format!(
                "{}\n",
                serde_json::to_string_pretty(&report).map_err(|e| Error::json("drift report", e))?
            ),
        )
        .map_err(|e| Error::io("drift.json", e))?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(|e| Error::json("kernel report", e))?
    );
    Ok(())
}

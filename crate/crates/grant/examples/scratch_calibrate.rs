// Temporary calibration harness (deleted before release).

use std::time::Instant;

use grant::flexgcn::{loss_grad, GcnParams, LayerSpec, LossKind, Pooling};
use grant::gntk::{gntk_matrix, kernel_drift};
use grant::graph::{Dataset, Graph, Level};
use grant::synth::{generate_dataset, GraphonKind, SynthConfig, SynthTask};
use grant::teaching::{SelectionPolicy, Variant};
use grant::trainer::{estimate_descent_bound, sgd_step, train, TrainerConfig};

fn gen_mini(num: usize, split: (usize, usize, usize), scale: f64, graphon: GraphonKind, dir: &std::path::Path) -> (Dataset, Dataset) {
    let cfg = SynthConfig {
        graphon,
        resolution: 200,
        nodes_mean: 30,
        num_graphs: num,
        feature_dim: 8,
        task: SynthTask::Reg,
        teacher_hidden: 16,
        teacher_kappas: (3, 2),
        teacher_seed: 7,
        teacher_scale: scale,
        dataset_seed: 0,
        split,
        split_seed: 0,
        threshold_pct: 80.0,
    };
    let files = generate_dataset(&cfg, dir).unwrap();
    let train = Dataset::load(&files.train).unwrap();
    let val = if split.1 > 0 {
        Dataset::load(&files.val).unwrap()
    } else {
        train.clone()
    };
    (train, val)
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "thm1".into());
    let dir = tempfile::tempdir().unwrap();

    if mode == "thm1" {
        // Criterion 4/5 problem: 256 graph-level graphs, h=(8,16,1), kappa=(2,2).
        let scale: f64 = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(1.0);
        let (train_node, _) = gen_mini(256, (256, 0, 0), scale, GraphonKind::Gradient, dir.path());
        let train_ds = train_node.pooled_to_graph_level().unwrap();
        let spec = LayerSpec::new(vec![8, 16, 1], vec![2, 2], Pooling::Sum).unwrap();
        let mut params = GcnParams::init(&spec, 1, scale).unwrap();
        let refs: Vec<&Graph> = train_ds.graphs().iter().collect();
        let probe: Vec<&Graph> = train_ds.graphs()[..32].iter().collect();

        let bound = estimate_descent_bound(&spec, &params, &refs).unwrap();
        println!("gamma={} lr_bound={}", bound.gamma, bound.lr_bound);
        // Top kernel eigenvalue by power iteration.
        let k_full = gntk_matrix(&params, &spec, &refs, None, "init").unwrap();
        let n = refs.len();
        let mut v = ndarray::Array1::from_elem(n, 1.0 / (n as f64).sqrt());
        let mut lam = 0.0;
        for _ in 0..300 {
            let w = k_full.entries().dot(&v);
            lam = v.dot(&w);
            let norm = w.dot(&w).sqrt();
            v = w / norm;
        }
        println!("lambda_max={lam:.6e} (N*gamma={:.6e})", n as f64 * bound.gamma);
        let lr_mult: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(1.0);
        let lr = lr_mult * n as f64 / lam;
        println!("lr={lr}");

        let t0 = Instant::now();
        let mut kernels = vec![gntk_matrix(&params, &spec, &probe, None, "k0").unwrap()];
        let mut step = 0usize;
        let mut last_loss = f64::INFINITY;
        let mut increases = 0usize;
        loop {
            let (loss, grad) = loss_grad(&params, &spec, &refs, LossKind::Mse).unwrap();
            if loss > last_loss + 1e-12 {
                increases += 1;
            }
            last_loss = loss;
            let gnorm = grad.dot(&grad).sqrt();
            if step % 500 == 0 {
                println!(
                    "step {step}: loss={loss:.6e} gnorm={gnorm:.6e} t={:.1}s",
                    t0.elapsed().as_secs_f64()
                );
            }
            if gnorm < 1e-4 || step >= 60_000 {
                println!("finished at step {step}: gnorm={gnorm:.3e} increases={increases}");
                break;
            }
            sgd_step(&mut params, &grad, lr).unwrap();
            step += 1;
            if step % 50 == 0 {
                kernels.push(gntk_matrix(&params, &spec, &probe, None, format!("k{step}")).unwrap());
            }
        }
        let drifts: Vec<f64> = kernels
            .windows(2)
            .map(|w| kernel_drift(&w[0], &w[1]).unwrap())
            .collect();
        if drifts.len() >= 2 {
            println!(
                "first drift={:.4e} last drift={:.4e} ratio={:.4}",
                drifts[0],
                drifts[drifts.len() - 1],
                drifts[drifts.len() - 1] / drifts[0]
            );
        }
        println!("total time {:.1}s, kernels {}", t0.elapsed().as_secs_f64(), kernels.len());
    } else if mode == "grid2" {
        // Find a mini-preset configuration whose baseline saturates early.
        for (gname, graphon) in [
            ("gradient", GraphonKind::Gradient),
            ("const.25", GraphonKind::Constant { p: 0.25 }),
        ] {
            for tscale in [0.3, 0.1] {
                let cfg = SynthConfig {
                    graphon,
                    resolution: 200,
                    nodes_mean: 30,
                    num_graphs: 600,
                    feature_dim: 8,
                    task: SynthTask::Reg,
                    teacher_hidden: 16,
                    teacher_kappas: (3, 2),
                    teacher_seed: 7,
                    teacher_scale: tscale,
                    dataset_seed: 0,
                    split: (500, 100, 0),
                    split_seed: 0,
                    threshold_pct: 80.0,
                };
                let d = tempfile::tempdir().unwrap();
                let files = generate_dataset(&cfg, d.path()).unwrap();
                let train_ds = Dataset::load(&files.train).unwrap();
                let val_ds = Dataset::load(&files.val).unwrap();
                let spec = LayerSpec::new(vec![8, 8, 1], vec![3, 2], Pooling::None).unwrap();
                for lr in [1e-5, 1e-4, 1e-3, 1e-2] {
                    let mut tc = TrainerConfig::new(lr, 100, 60, LossKind::Mse, 1);
                    tc.init_scale = tscale;
                    let none = SelectionPolicy::none(Level::Node);
                    let (_, log) =
                        train(&tc, &spec, &train_ds, Some(&val_ds), &none, &mut ()).unwrap();
                    let l = |e: usize| log.records[e - 1].train_loss;
                    println!(
                        "{gname} ts={tscale} lr={lr:.0e}: L1={:.3e} L15={:.3e} L30={:.3e} L45={:.3e} L60={:.3e} mae={:.3e}",
                        l(1), l(15), l(30), l(45), l(60),
                        log.records.last().unwrap().metric
                    );
                }
            }
        }
    } else if mode == "lrgrid" {
        let scale: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(1.0);
        let (train_ds, val_ds) = gen_mini(600, (500, 100, 0), scale, GraphonKind::Gradient, dir.path());
        let spec = LayerSpec::new(vec![8, 32, 1], vec![3, 2], Pooling::None).unwrap();
        for lr in [1e-7, 1e-6, 1e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2] {
            let mut cfg = TrainerConfig::new(lr, 100, 30, LossKind::Mse, 1);
            cfg.init_scale = scale;
            let none = SelectionPolicy::none(Level::Node);
            let (_, log) = train(&cfg, &spec, &train_ds, Some(&val_ds), &none, &mut ()).unwrap();
            let first = log.records.first().unwrap().train_loss;
            let last = log.records.last().unwrap();
            println!(
                "lr={lr:.1e}: first_loss={first:.4e} final_loss={:.4e} val={:.4e} mae={:.4e}",
                last.train_loss, last.val_loss, last.metric
            );
        }
    } else if mode == "eff" {
        // Criterion 7: 2000/500 split, 150 epochs, batch 100, B @ 0.2.
        let lr: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(0.02);
        let gkind = match std::env::args().nth(3).as_deref() {
            Some("const") => GraphonKind::Constant { p: 0.25 },
            _ => GraphonKind::Gradient,
        };
        let (train_ds, val_ds) = gen_mini(3000, (2000, 500, 500), 0.3, gkind, dir.path());
        let spec = LayerSpec::new(vec![8, 8, 1], vec![3, 2], Pooling::None).unwrap();
        let t0 = Instant::now();
        let mut ratios = Vec::new();
        let mut mae_ratios = Vec::new();
        for seed in 1..=5u64 {
            let mut cfg = TrainerConfig::new(lr, 100, 150, LossKind::Mse, seed);
            cfg.init_scale = 0.3;
            let none = SelectionPolicy::none(Level::Node);
            let (_, log_b) = train(&cfg, &spec, &train_ds, Some(&val_ds), &none, &mut ()).unwrap();
            let base_loss = log_b.records.last().unwrap().train_loss;
            let base_evals = log_b.records.last().unwrap().train_evals;
            let base_mae = log_b.records.last().unwrap().metric;

            let policy = SelectionPolicy::new(Variant::B, 0.2, Level::Node).unwrap();
            let (_, log_g) = train(&cfg, &spec, &train_ds, Some(&val_ds), &policy, &mut ()).unwrap();
            let reach = log_g
                .records
                .iter()
                .find(|r| r.train_loss <= base_loss)
                .map(|r| r.train_evals);
            let g_mae = log_g.records.last().unwrap().metric;
            let ratio = reach.map(|e| e as f64 / base_evals as f64);
            println!(
                "seed {seed}: base_loss={base_loss:.5e} base_mae={base_mae:.5e} grant_final={:.5e} grant_mae={g_mae:.5e} reach_ratio={ratio:?} t={:.0}s",
                log_g.records.last().unwrap().train_loss,
                t0.elapsed().as_secs_f64()
            );
            ratios.push(ratio.unwrap_or(f64::INFINITY));
            mae_ratios.push(g_mae / base_mae);
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        mae_ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "median reach ratio = {:?}, median mae ratio = {:?}, total {:.0}s",
            ratios[2], mae_ratios[2], t0.elapsed().as_secs_f64()
        );
    }
}

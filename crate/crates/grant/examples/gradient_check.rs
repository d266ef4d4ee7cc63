//! Check the analytic backward pass against central finite differences on a
//! random network and graph.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use grant::flexgcn::{forward, loss_grad, output_jacobian, predict, GcnParams, LayerSpec, LossKind, Output, Pooling};
use grant::graph::{Graph, Target};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() -> grant::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let spec = LayerSpec::new(vec![4, 6, 1], vec![3, 2], Pooling::Sum)?;
    let n = 6;
    let x = Array2::from_shape_fn((n, 4), |_| rng.random::<f64>() * 2.0 - 1.0);
    let mut adj = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < 0.5 {
                adj[(i, j)] = 1.0;
                adj[(j, i)] = 1.0;
            }
        }
    }
    let g = Graph::new(x, adj, Target::graph_scalar(0.7))?;
    let params = GcnParams::init(&spec, 11, 1.0)?;

    // Output jacobian, coordinate by coordinate.
    let (_, cache) = forward(&params, &spec, &g)?;
    let jac = output_jacobian(&params, &spec, &g, &cache)?;
    let theta = params.flatten();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let mut plus = theta.clone();
        plus[i] += h;
        let mut minus = theta.clone();
        minus[i] -= h;
        let f = |t: &ndarray::Array1<f64>| -> f64 {
            match predict(&GcnParams::from_flat(&spec, t).unwrap(), &spec, &g).unwrap() {
                Output::Graph(v) => v[0],
                _ => unreachable!(),
            }
        };
        let fd = (f(&plus) - f(&minus)) / (2.0 * h);
        worst = worst.max((jac[(0, i)] - fd).abs() / jac[(0, i)].abs().max(fd.abs()).max(1.0));
    }
    println!("output jacobian vs finite differences: {} coordinates, worst rel err {worst:.3e}", theta.len());

    // Loss gradient on a batch.
    let batch = [&g];
    let (_, grad) = loss_grad(&params, &spec, &batch, LossKind::Mse)?;
    let mut worst_loss = 0.0f64;
    for i in 0..theta.len() {
        let mut plus = theta.clone();
        plus[i] += h;
        let mut minus = theta.clone();
        minus[i] -= h;
        let lp = loss_grad(&GcnParams::from_flat(&spec, &plus)?, &spec, &batch, LossKind::Mse)?.0;
        let lm = loss_grad(&GcnParams::from_flat(&spec, &minus)?, &spec, &batch, LossKind::Mse)?.0;
        let fd = (lp - lm) / (2.0 * h);
        worst_loss = worst_loss.max((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0));
    }
    println!("loss gradient vs finite differences: worst rel err {worst_loss:.3e}");
    Ok(())
}

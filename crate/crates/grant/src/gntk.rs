//! Graph neural tangent kernel: `K(G, G') = <df/dtheta(G), df/dtheta(G')>`
//! at the current parameters, its Gram matrix over a graph set, and the
//! Frobenius drift between kernel snapshots taken along a training run.
//!
//! The kernel is defined for scalar graph-level outputs only (sum pooling,
//! output dimension 1); node-level entries would be matrix-valued.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flexgcn::{scalar_output_jacobian, GcnParams, LayerSpec};
use crate::graph::Graph;

/// Symmetric PSD Gram matrix of output-jacobian inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: Array2<f64>,
    graph_ids: Vec<usize>,
    theta_tag: String,
}

impl KernelMatrix {
    pub fn new(entries: Array2<f64>, graph_ids: Vec<usize>, theta_tag: String) -> Result<KernelMatrix> {
        if entries.nrows() != entries.ncols() || entries.nrows() != graph_ids.len() {
            return Err(Error::Shape(format!(
                "kernel is {}x{} with {} ids",
                entries.nrows(),
                entries.ncols(),
                graph_ids.len()
            )));
        }
        let k = KernelMatrix {
            entries,
            graph_ids,
            theta_tag,
        };
        k.validate()?;
        Ok(k)
    }

    /// Checks symmetry to 1e-12, nonnegative diagonal, and PSD up to -1e-8.
    pub fn validate(&self) -> Result<()> {
        let n = self.entries.nrows();
        for i in 0..n {
            if self.entries[(i, i)] < 0.0 {
                return Err(Error::Shape(format!(
                    "negative kernel diagonal at {i}: {}",
                    self.entries[(i, i)]
                )));
            }
            for j in (i + 1)..n {
                if (self.entries[(i, j)] - self.entries[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Shape(format!(
                        "kernel asymmetric at ({i},{j})"
                    )));
                }
            }
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -1e-8 {
            return Err(Error::Shape(format!(
                "kernel has negative eigenvalue {min_eig}"
            )));
        }
        Ok(())
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn graph_ids(&self) -> &[usize] {
        &self.graph_ids
    }

    pub fn theta_tag(&self) -> &str {
        &self.theta_tag
    }

    pub fn len(&self) -> usize {
        self.graph_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph_ids.is_empty()
    }

    pub fn max_diagonal(&self) -> f64 {
        self.entries.diag().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest eigenvalue via cyclic Jacobi rotations (the matrices here
    /// are small probe Grams, so an O(n^3) sweep method is plenty).
    pub fn min_eigenvalue(&self) -> f64 {
        symmetric_eigenvalues(&self.entries)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Writes the matrix as CSV with graph ids as row/column headers.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(f);
        let header: Vec<String> = std::iter::once("graph_id".to_string())
            .chain(self.graph_ids.iter().map(|id| id.to_string()))
            .collect();
        writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(path.display().to_string(), e))?;
        for (i, id) in self.graph_ids.iter().enumerate() {
            let row: Vec<String> = std::iter::once(id.to_string())
                .chain(self.entries.row(i).iter().map(|v| format!("{v}")))
                .collect();
            writeln!(w, "{}", row.join(","))
                .map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Binary snapshot: magic, version, theta tag, ids, row-major entries.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path.display().to_string(), e);
        let f = File::create(path).map_err(io)?;
        let mut w = BufWriter::new(f);
        w.write_all(b"GNTK").map_err(io)?;
        w.write_all(&1u32.to_le_bytes()).map_err(io)?;
        let tag = self.theta_tag.as_bytes();
        w.write_all(&(tag.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(tag).map_err(io)?;
        w.write_all(&(self.len() as u64).to_le_bytes()).map_err(io)?;
        for id in &self.graph_ids {
            w.write_all(&(*id as u64).to_le_bytes()).map_err(io)?;
        }
        for v in self.entries.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<KernelMatrix> {
        let path = path.as_ref();
        let io = |e| Error::io(path.display().to_string(), e);
        let f = File::open(path).map_err(io)?;
        let mut r = BufReader::new(f);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != b"GNTK" {
            return Err(Error::InvalidArgument(format!(
                "{} is not a kernel snapshot",
                path.display()
            )));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf).map_err(io)?;
        if u32::from_le_bytes(u32buf) != 1 {
            return Err(Error::InvalidArgument("unsupported kernel snapshot version".into()));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf).map_err(io)?;
        let tag_len = u64::from_le_bytes(u64buf) as usize;
        let mut tag = vec![0u8; tag_len];
        r.read_exact(&mut tag).map_err(io)?;
        let theta_tag = String::from_utf8(tag)
            .map_err(|_| Error::InvalidArgument("kernel snapshot tag is not UTF-8".into()))?;
        r.read_exact(&mut u64buf).map_err(io)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        let mut graph_ids = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut u64buf).map_err(io)?;
            graph_ids.push(u64::from_le_bytes(u64buf) as usize);
        }
        let mut entries = Array2::zeros((n, n));
        for v in entries.iter_mut() {
            r.read_exact(&mut u64buf).map_err(io)?;
            *v = f64::from_le_bytes(u64buf);
        }
        KernelMatrix::new(entries, graph_ids, theta_tag)
    }
}

/// Single kernel entry: inner product of the two output jacobians.
pub fn gntk_entry(params: &GcnParams, spec: &LayerSpec, g1: &Graph, g2: &Graph) -> Result<f64> {
    let j1 = scalar_output_jacobian(params, spec, g1)?;
    let j2 = scalar_output_jacobian(params, spec, g2)?;
    Ok(j1.dot(&j2))
}

/// Full Gram matrix over a graph set: all jacobians are computed once
/// (in parallel, order-stable), then paired.
pub fn gntk_matrix(
    params: &GcnParams,
    spec: &LayerSpec,
    graphs: &[&Graph],
    graph_ids: Option<Vec<usize>>,
    theta_tag: impl Into<String>,
) -> Result<KernelMatrix> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("empty graph set".into()));
    }
    let ids = match graph_ids {
        Some(ids) => {
            if ids.len() != graphs.len() {
                return Err(Error::InvalidArgument(
                    "graph_ids length differs from graph count".into(),
                ));
            }
            ids
        }
        None => (0..graphs.len()).collect(),
    };
    let jacobians: Vec<Array1<f64>> = graphs
        .par_iter()
        .map(|g| scalar_output_jacobian(params, spec, g))
        .collect::<Result<Vec<_>>>()?;
    let n = graphs.len();
    let mut entries = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = jacobians[i].dot(&jacobians[j]);
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    KernelMatrix::new(entries, ids, theta_tag.into())
}

/// Frobenius norm of the difference between two kernel snapshots over the
/// same graph set.
pub fn kernel_drift(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<f64> {
    if k1.graph_ids != k2.graph_ids {
        return Err(Error::InvalidArgument(
            "kernel drift needs identical graph sets in identical order".into(),
        ));
    }
    let diff = &k1.entries - &k2.entries;
    Ok(diff.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
pub(crate) fn symmetric_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + m.diag().iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    m.diag().to_vec()
}

//! Undirected weighted communication graphs and their Laplacians.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DuioError, Result};
use crate::linalg::{symmetric_eigenvalues, Mat};

/// Second-smallest Laplacian eigenvalue below this means disconnected.
pub const CONNECTIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorGraph {
    adjacency: Mat,
}

impl SensorGraph {
    pub fn from_adjacency(adjacency: Mat) -> Result<Self> {
        let m = adjacency.nrows();
        if adjacency.ncols() != m || m == 0 {
            return Err(DuioError::Graph(format!(
                "adjacency must be square and nonempty, got {}x{}",
                m,
                adjacency.ncols()
            )));
        }
        for i in 0..m {
            if adjacency[(i, i)] != 0.0 {
                return Err(DuioError::Graph(format!("self-loop at node {}", i + 1)));
            }
            for j in 0..m {
                let a = adjacency[(i, j)];
                if !a.is_finite() || a < 0.0 {
                    return Err(DuioError::Graph(format!(
                        "weight a[{},{}] = {a} is not a nonnegative number",
                        i + 1,
                        j + 1
                    )));
                }
                if a != adjacency[(j, i)] {
                    return Err(DuioError::Graph(format!(
                        "adjacency is not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { adjacency })
    }

    /// Zero-based weighted edge list.
    pub fn from_edges(m: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj = Mat::zeros(m, m);
        for &(i, j, w) in edges {
            if i >= m || j >= m {
                return Err(DuioError::Graph(format!("edge ({i}, {j}) outside {m} nodes")));
            }
            if i == j {
                return Err(DuioError::Graph(format!("self-loop at node {}", i + 1)));
            }
            adj[(i, j)] = w;
            adj[(j, i)] = w;
        }
        Self::from_adjacency(adj)
    }

    pub fn ring(m: usize) -> Result<Self> {
        match m {
            0 => Err(DuioError::Graph("empty graph".into())),
            1 => Self::from_edges(1, &[]),
            2 => Self::from_edges(2, &[(0, 1, 1.0)]),
            _ => Self::from_edges(m, &(0..m).map(|i| (i, (i + 1) % m, 1.0)).collect::<Vec<_>>()),
        }
    }

    pub fn path(m: usize) -> Result<Self> {
        Self::from_edges(m, &(1..m).map(|i| (i - 1, i, 1.0)).collect::<Vec<_>>())
    }

    pub fn complete(m: usize) -> Result<Self> {
        let edges: Vec<_> = (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j, 1.0)))
            .collect();
        Self::from_edges(m, &edges)
    }

    /// Node 0 is the hub.
    pub fn star(m: usize) -> Result<Self> {
        Self::from_edges(m, &(1..m).map(|i| (0, i, 1.0)).collect::<Vec<_>>())
    }

    /// Random spanning tree plus extra edges with probability `extra`,
    /// weights uniform in `[0.5, 2]`.
    pub fn random_connected<R: Rng + ?Sized>(m: usize, extra: f64, rng: &mut R) -> Self {
        let mut adj = Mat::zeros(m, m);
        for j in 1..m {
            let i = rng.random_range(0..j);
            let w = rng.random_range(0.5..2.0);
            adj[(i, j)] = w;
            adj[(j, i)] = w;
        }
        for i in 0..m {
            for j in i + 1..m {
                if adj[(i, j)] == 0.0 && rng.random::<f64>() < extra {
                    let w = rng.random_range(0.5..2.0);
                    adj[(i, j)] = w;
                    adj[(j, i)] = w;
                }
            }
        }
        Self { adjacency: adj }
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &Mat {
        &self.adjacency
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    /// Graph with node `order[k]` relabelled as `k`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let m = self.num_nodes();
        Self {
            adjacency: Mat::from_fn(m, m, |i, j| self.adjacency[(order[i], order[j])]),
        }
    }

    pub fn laplacian(&self) -> Mat {
        let m = self.num_nodes();
        let mut l = -self.adjacency.clone();
        for i in 0..m {
            l[(i, i)] = self.adjacency.row(i).sum();
        }
        l
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianBundle {
    #[serde(with = "crate::io::mat_rows")]
    pub laplacian: Mat,
    #[serde(with = "crate::io::mat_rows")]
    pub degree: Mat,
    /// Laplacian with the row and column of `removed` deleted.
    #[serde(with = "crate::io::mat_rows")]
    pub reduced: Mat,
    pub removed: usize,
    pub lambda_min_reduced: f64,
    /// Ascending eigenvalues of the Laplacian.
    pub spectrum: Vec<f64>,
}

impl LaplacianBundle {
    /// Builds every field without checking connectivity.
    pub fn unchecked(g: &SensorGraph, removed: usize) -> Self {
        let laplacian = g.laplacian();
        let m = g.num_nodes();
        let degree = Mat::from_diagonal(&laplacian.diagonal());
        let keep: Vec<usize> = (0..m).filter(|&k| k != removed).collect();
        let reduced = Mat::from_fn(keep.len(), keep.len(), |i, j| laplacian[(keep[i], keep[j])]);
        let lambda_min_reduced = symmetric_eigenvalues(&reduced)
            .first()
            .copied()
            .unwrap_or(f64::INFINITY);
        let spectrum = symmetric_eigenvalues(&laplacian);
        Self {
            laplacian,
            degree,
            reduced,
            removed,
            lambda_min_reduced,
            spectrum,
        }
    }

    pub fn algebraic_connectivity(&self) -> f64 {
        self.spectrum.get(1).copied().unwrap_or(f64::INFINITY)
    }
}

/// Laplacian bundle with node 0 removed from the reduced Laplacian.
pub fn build_laplacian(g: &SensorGraph) -> Result<LaplacianBundle> {
    build_laplacian_removing(g, 0)
}

pub fn build_laplacian_removing(g: &SensorGraph, removed: usize) -> Result<LaplacianBundle> {
    if removed >= g.num_nodes() {
        return Err(DuioError::Index {
            index: removed,
            count: g.num_nodes(),
        });
    }
    let bundle = LaplacianBundle::unchecked(g, removed);
    let lambda2 = bundle.algebraic_connectivity();
    if lambda2 <= CONNECTIVITY_TOL {
        return Err(DuioError::Connectivity { lambda2 });
    }
    Ok(bundle)
}

/// Positive definiteness of the reduced Laplacian, with `lambda_min` as certificate.
pub fn check_reduced_hurwitz(bundle: &LaplacianBundle) -> (bool, f64) {
    let l = bundle.lambda_min_reduced;
    (l > CONNECTIVITY_TOL, l)
}

//! Model-based DUIO design.
//!
//! Every node gets the particular decoupling matrix
//! `H_i = B_p (C_i B_p)^+`. The leader, a node whose pair
//! `((I - H_i C_i) A, C_i)` is detectable, is stabilised by an output
//! injection `M`; all other nodes are stabilised through the consensus
//! term with a uniform gain `K_i = gamma I`.

use serde::{Deserialize, Serialize};

use crate::error::{DuioError, Result};
use crate::io::mat_rows;
use crate::linalg::{
    block_diag, detectability, spectral_abscissa, symmetric_spectral_norm, DetectabilityReport,
    Mat, PbhOptions, RankPolicy,
};
use crate::network::{build_laplacian_removing, SensorGraph};
use crate::plant::PlantModel;
use crate::riccati::solve_care;

/// Observer matrices of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGains {
    #[serde(with = "mat_rows")]
    pub e: Mat,
    #[serde(with = "mat_rows")]
    pub f: Mat,
    #[serde(with = "mat_rows")]
    pub l: Mat,
    #[serde(with = "mat_rows")]
    pub h: Mat,
    #[serde(with = "mat_rows")]
    pub k: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMethod {
    Model,
    Data,
    Identified,
}

/// Gains of the whole observer network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuioGains {
    pub method: DesignMethod,
    pub nodes: Vec<NodeGains>,
    pub gamma: f64,
    /// Lower bound on `gamma` guaranteeing stability.
    pub gamma_bound: f64,
    /// Zero-based index of the node stabilised by output injection.
    pub leader: usize,
    /// Output injection of the leader.
    #[serde(with = "mat_rows")]
    pub injection: Mat,
}

impl DuioGains {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_x(&self) -> usize {
        self.nodes.first().map(|n| n.e.nrows()).unwrap_or(0)
    }

    /// `blockdiag(E_i) - blockdiag(K_i) (L kron I)`.
    pub fn coupling_matrix(&self, graph: &SensorGraph) -> Mat {
        let n = self.n_x();
        let e = block_diag(&self.nodes.iter().map(|g| g.e.clone()).collect::<Vec<_>>());
        let k = block_diag(&self.nodes.iter().map(|g| g.k.clone()).collect::<Vec<_>>());
        e - k * graph.laplacian().kronecker(&Mat::identity(n, n))
    }

    /// Checks that the gains fit a plant with these node dimensions.
    pub fn check_dimensions(&self, model: &PlantModel) -> Result<()> {
        if self.num_nodes() != model.num_nodes() {
            return Err(DuioError::Dimension(format!(
                "gains for {} nodes, plant has {}",
                self.num_nodes(),
                model.num_nodes()
            )));
        }
        let n = model.n_x();
        for (i, (g, node)) in self.nodes.iter().zip(model.nodes()).enumerate() {
            let ok = g.e.shape() == (n, n)
                && g.k.shape() == (n, n)
                && g.f.shape() == (n, node.n_m())
                && g.l.shape() == (n, node.n_y())
                && g.h.shape() == (n, node.n_y());
            if !ok {
                return Err(DuioError::Dimension(format!(
                    "gains of node {} do not match the plant dimensions",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Tuning shared by all design routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignOptions {
    /// Required decay rate of the leader's error dynamics.
    pub decay: f64,
    /// `gamma = (1 + gamma_margin) * bound` unless overridden.
    pub gamma_margin: f64,
    pub gamma_override: Option<f64>,
    pub rank_multiplier: f64,
    pub pbh: PbhOptions,
    /// Largest spectral abscissa accepted for the coupled error dynamics.
    pub hurwitz_tol: f64,
    /// Data route: accepted `||Xdot - T S||_F / ||Xdot||_F`.
    pub residual_rel_tol: f64,
    /// Data route: random points of the closed right half-plane where the
    /// data pencil rank is cross-checked.
    pub pencil_points: usize,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            decay: 0.5,
            gamma_margin: 0.1,
            gamma_override: None,
            rank_multiplier: 1e3,
            pbh: PbhOptions::default(),
            hurwitz_tol: 1e-8,
            residual_rel_tol: 1e-6,
            pencil_points: 16,
        }
    }
}

impl DesignOptions {
    pub fn rank_policy(&self) -> RankPolicy {
        RankPolicy::new(self.rank_multiplier)
    }
}

/// `rank(C_i B_p) == rank(B_p)`.
pub fn check_solvability(model: &PlantModel, i: usize, policy: RankPolicy) -> Result<bool> {
    let node = model.node(i)?;
    let scale = node.c.norm() * node.b_p.norm();
    Ok(policy.rank_relative(&(&node.c * &node.b_p), scale) == policy.rank(&node.b_p))
}

/// `H = B_p (C B_p)^+ + Y_free (I - (C B_p)(C B_p)^+)`.
pub fn parametrize_h(
    model: &PlantModel,
    i: usize,
    y_free: Option<&Mat>,
    policy: RankPolicy,
) -> Result<Mat> {
    let node = model.node(i)?;
    let cbp = &node.c * &node.b_p;
    let scale = node.c.norm() * node.b_p.norm();
    let rank_cbp = policy.rank_relative(&cbp, scale);
    let rank_bp = policy.rank(&node.b_p);
    if rank_cbp != rank_bp {
        return Err(DuioError::Solvability {
            node: i + 1,
            rank_cbp,
            rank_bp,
        });
    }
    let pinv = policy.pinv_relative(&cbp, scale);
    let mut h = &node.b_p * &pinv;
    if let Some(y) = y_free {
        if y.shape() != (model.n_x(), node.n_y()) {
            return Err(DuioError::Dimension(format!(
                "free parameter must be {}x{}",
                model.n_x(),
                node.n_y()
            )));
        }
        let proj = Mat::identity(node.n_y(), node.n_y()) - &cbp * &pinv;
        h += y * proj;
    }
    Ok(h)
}

/// `(I - H C) A`, `(I - H C) B_m` and `H` for the particular solution.
pub fn decoupled_blocks(model: &PlantModel, i: usize, policy: RankPolicy) -> Result<NodeBlocks> {
    let node = model.node(i)?;
    let h = parametrize_h(model, i, None, policy)?;
    let n = model.n_x();
    let proj = Mat::identity(n, n) - &h * &node.c;
    Ok(NodeBlocks {
        t_u: &proj * &node.b_m,
        t_y: h,
        t_x: proj * &model.a,
        c: node.c.clone(),
    })
}

/// Blocks for explicit node matrices, e.g. an identified model.
/// `None` when `rank(C B_p) < rank(B_p)`.
pub fn blocks_from_matrices(
    a: &Mat,
    b_m: &Mat,
    c: &Mat,
    b_p: &Mat,
    policy: RankPolicy,
) -> Option<NodeBlocks> {
    let cbp = c * b_p;
    let scale = c.norm() * b_p.norm();
    if policy.rank_relative(&cbp, scale) != policy.rank(b_p) {
        return None;
    }
    let h = b_p * policy.pinv_relative(&cbp, scale);
    let n = a.nrows();
    let proj = Mat::identity(n, n) - &h * c;
    Some(NodeBlocks {
        t_u: &proj * b_m,
        t_y: h,
        t_x: proj * a,
        c: c.clone(),
    })
}

/// PBH detectability of `((I - H C) A, C)` at node `i`.
pub fn check_detectability(
    model: &PlantModel,
    i: usize,
    policy: RankPolicy,
    pbh: PbhOptions,
) -> Result<DetectabilityReport> {
    let blocks = decoupled_blocks(model, i, policy)?;
    Ok(detectability(&blocks.t_x, &blocks.c, pbh))
}

/// Output injection `M` with `Re(eig(t_x - M c)) <= -decay`.
///
/// `M = P c^T` where `P` solves
/// `(t_x + decay I) P + P (t_x + decay I)^T - P c^T c P + I = 0`.
pub fn design_leader_injection(t_x: &Mat, c: &Mat, decay: f64, pbh: PbhOptions) -> Result<Mat> {
    let n = t_x.nrows();
    if t_x.ncols() != n || c.ncols() != n {
        return Err(DuioError::Dimension("injection design: shapes disagree".into()));
    }
    if !(decay > 0.0) {
        return Err(DuioError::Design(format!("decay must be positive, got {decay}")));
    }
    if !detectability(t_x, c, pbh).detectable {
        return Err(DuioError::Design("leader pair is not detectable".into()));
    }
    let shifted = t_x + Mat::identity(n, n) * decay;
    let g = c.transpose() * c;
    let p = solve_care(&shifted.transpose(), &g, &Mat::identity(n, n))?;
    let m = p * c.transpose();
    let abscissa = spectral_abscissa(&(t_x - &m * c));
    if abscissa > -decay + 1e-8 * (1.0 + decay) {
        return Err(DuioError::Numerics(format!(
            "injection reached abscissa {abscissa:.6} instead of <= {:.6}",
            -decay
        )));
    }
    Ok(m)
}

/// Per-node matrices `(T_u, T_y, T_x)` and output map entering the gain assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBlocks {
    pub t_u: Mat,
    pub t_y: Mat,
    pub t_x: Mat,
    pub c: Mat,
}

/// `||E~ + E~^T|| / (2 lambda_min(L~))` with the leader removed.
pub fn gamma_bound(blocks: &[NodeBlocks], leader: usize, graph: &SensorGraph) -> Result<f64> {
    let lap = build_laplacian_removing(graph, leader)?;
    let followers: Vec<Mat> = blocks
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != leader)
        .map(|(_, b)| b.t_x.clone())
        .collect();
    if followers.is_empty() {
        return Ok(0.0);
    }
    let e = block_diag(&followers);
    let norm = symmetric_spectral_norm(&(&e + e.transpose()));
    Ok(norm / (2.0 * lap.lambda_min_reduced))
}

pub(crate) fn choose_gamma(bound: f64, opts: &DesignOptions) -> f64 {
    match opts.gamma_override {
        Some(g) => g,
        None if bound > 0.0 => (1.0 + opts.gamma_margin) * bound,
        None => opts.gamma_margin.max(f64::EPSILON),
    }
}

/// Assembles the network gains from per-node blocks, stabilising the leader
/// with [`design_leader_injection`].
pub(crate) fn assemble(
    method: DesignMethod,
    blocks: &[NodeBlocks],
    leader: usize,
    graph: &SensorGraph,
    opts: &DesignOptions,
) -> Result<DuioGains> {
    if blocks.len() != graph.num_nodes() {
        return Err(DuioError::Dimension(format!(
            "{} nodes in the design, {} in the graph",
            blocks.len(),
            graph.num_nodes()
        )));
    }
    let lead = &blocks[leader];
    let injection = design_leader_injection(&lead.t_x, &lead.c, opts.decay, opts.pbh)
        .map_err(|e| match e {
            DuioError::Design(msg) => DuioError::Design(format!("node {}: {msg}", leader + 1)),
            other => other,
        })?;
    let gamma_bound = gamma_bound(blocks, leader, graph)?;
    let gamma = choose_gamma(gamma_bound, opts);
    let n = lead.t_x.nrows();

    let nodes = blocks
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let (e, l, gain) = if k == leader {
                let e = &b.t_x - &injection * &b.c;
                let l = &injection + &e * &b.t_y;
                (e, l, Mat::zeros(n, n))
            } else {
                let l = &b.t_x * &b.t_y;
                (b.t_x.clone(), l, Mat::identity(n, n) * gamma)
            };
            NodeGains {
                e,
                f: b.t_u.clone(),
                l,
                h: b.t_y.clone(),
                k: gain,
            }
        })
        .collect();
    Ok(DuioGains {
        method,
        nodes,
        gamma,
        gamma_bound,
        leader,
        injection,
    })
}

/// Spectral abscissa of the coupled error dynamics, or an error built by `fail`.
pub(crate) fn verify_hurwitz(
    gains: &DuioGains,
    graph: &SensorGraph,
    opts: &DesignOptions,
    fail: impl FnOnce(String) -> DuioError,
) -> Result<f64> {
    let abscissa = spectral_abscissa(&gains.coupling_matrix(graph));
    if abscissa < -opts.hurwitz_tol {
        Ok(abscissa)
    } else {
        Err(fail(format!(
            "coupled error dynamics not Hurwitz (abscissa {abscissa:.3e}, gamma {:.4})",
            gains.gamma
        )))
    }
}

/// First node (lowest index) whose decoupled pair is detectable.
pub fn find_leader(model: &PlantModel, opts: &DesignOptions) -> Result<usize> {
    for i in 0..model.num_nodes() {
        if check_detectability(model, i, opts.rank_policy(), opts.pbh)?.detectable {
            return Ok(i);
        }
    }
    Err(DuioError::Design("no node has a detectable decoupled pair".into()))
}

/// Full model-based design; checks solvability at every node first.
pub fn build_model_based_gains(
    model: &PlantModel,
    graph: &SensorGraph,
    opts: &DesignOptions,
) -> Result<DuioGains> {
    if graph.num_nodes() != model.num_nodes() {
        return Err(DuioError::Dimension(format!(
            "graph has {} nodes, plant has {}",
            graph.num_nodes(),
            model.num_nodes()
        )));
    }
    let policy = opts.rank_policy();
    for i in 0..model.num_nodes() {
        if !check_solvability(model, i, policy)? {
            return Err(DuioError::Design(format!(
                "node {}: rank(C B_p) < rank(B_p), unknown input cannot be decoupled",
                i + 1
            )));
        }
    }
    build_laplacian_removing(graph, 0)
        .map_err(|e| DuioError::Design(format!("communication graph: {e}")))?;
    let leader = find_leader(model, opts)?;
    let blocks = (0..model.num_nodes())
        .map(|i| decoupled_blocks(model, i, policy))
        .collect::<Result<Vec<_>>>()?;
    let gains = assemble(DesignMethod::Model, &blocks, leader, graph, opts)?;
    verify_hurwitz(&gains, graph, opts, DuioError::Design)?;
    Ok(gains)
}

//! Closed-loop simulation of the plant together with the observer network.
//!
//! Node `i` runs
//!
//! ```text
//! z_i' = E_i z_i + F_i u_i + L_i y_i + K_i sum_j a_ij (xhat_j - xhat_i)
//! xhat_i = z_i + H_i y_i
//! ```
//!
//! and the plant and all observers are integrated as one ODE.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design_model::DuioGains;
use crate::error::{DuioError, Result};
use crate::io::{fmt_f64, write_json};
use crate::linalg::{spectral_abscissa, Mat, Vector};
use crate::network::SensorGraph;
use crate::plant::{diverged, rk4_step, step_count, PlantModel, PlantSignals};

/// Instantaneous state of plant and observers.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverNetworkState {
    pub x: Vector,
    pub z: Vec<Vector>,
    pub xhat: Vec<Vector>,
}

/// Per-node observer matrices, pre-combined with the plant output maps.
struct NodeLoop {
    e: Mat,
    f: Mat,
    l: Mat,
    h: Mat,
    k: Mat,
    c: Mat,
    known: Vec<usize>,
}

struct Network<'a> {
    model: &'a PlantModel,
    adjacency: &'a Mat,
    nodes: Vec<NodeLoop>,
}

impl<'a> Network<'a> {
    fn new(model: &'a PlantModel, graph: &'a SensorGraph, gains: &DuioGains) -> Result<Self> {
        gains.check_dimensions(model)?;
        if graph.num_nodes() != gains.num_nodes() {
            return Err(DuioError::Dimension(format!(
                "graph has {} nodes, gains have {}",
                graph.num_nodes(),
                gains.num_nodes()
            )));
        }
        let nodes = gains
            .nodes
            .iter()
            .zip(model.nodes())
            .map(|(g, v)| NodeLoop {
                e: g.e.clone(),
                f: g.f.clone(),
                l: g.l.clone(),
                h: g.h.clone(),
                k: g.k.clone(),
                c: v.c.clone(),
                known: v.known_input_indices.clone(),
            })
            .collect();
        Ok(Self {
            model,
            adjacency: graph.adjacency(),
            nodes,
        })
    }

    fn n(&self) -> usize {
        self.model.n_x()
    }

    fn estimates(&self, s: &Vector) -> Vec<Vector> {
        let n = self.n();
        let x = s.rows(0, n);
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, nl)| s.rows((i + 1) * n, n) + &nl.h * (&nl.c * x))
            .collect()
    }

    fn derivative(&self, s: &Vector, u: &Vector, d: &Vector) -> Vector {
        let n = self.n();
        let x = s.rows(0, n).into_owned();
        let xhat = self.estimates(s);
        let mut out = Vector::zeros(s.len());
        out.rows_mut(0, n).copy_from(&self.model.derivative(&x, u, d));
        for (i, nl) in self.nodes.iter().enumerate() {
            let z = s.rows((i + 1) * n, n);
            let y = &nl.c * &x;
            let ui = Vector::from_iterator(nl.known.len(), nl.known.iter().map(|&k| u[k]));
            let mut consensus = Vector::zeros(n);
            for (j, xj) in xhat.iter().enumerate() {
                let a = self.adjacency[(i, j)];
                if a != 0.0 {
                    consensus += (xj - &xhat[i]) * a;
                }
            }
            let dz = &nl.e * z + &nl.f * ui + &nl.l * y + &nl.k * consensus;
            out.rows_mut((i + 1) * n, n).copy_from(&dz);
        }
        out
    }

    fn split(&self, s: &Vector) -> ObserverNetworkState {
        let n = self.n();
        ObserverNetworkState {
            x: s.rows(0, n).into_owned(),
            z: (0..self.nodes.len())
                .map(|i| s.rows((i + 1) * n, n).into_owned())
                .collect(),
            xhat: self.estimates(s),
        }
    }
}

/// Sampled closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub times: Vec<f64>,
    /// True state, one column per sample.
    pub states: Mat,
    /// Estimate of each node, one column per sample.
    pub estimates: Vec<Mat>,
    /// `||x - xhat_i||`, indexed `[node][sample]`.
    pub error_norms: Vec<Vec<f64>>,
    /// `max_{i,j} ||xhat_i - xhat_j||` per sample.
    pub spread: Vec<f64>,
}

impl RunResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.estimates.len()
    }

    /// Stacked error `e_G = [x - xhat_1; ...; x - xhat_M]`, one column per sample.
    pub fn stacked_errors(&self) -> Mat {
        let n = self.states.nrows();
        let mut out = Mat::zeros(n * self.num_nodes(), self.len());
        for (i, est) in self.estimates.iter().enumerate() {
            out.rows_mut(i * n, n).copy_from(&(&self.states - est));
        }
        out
    }

    pub fn final_error_norms(&self) -> Vec<f64> {
        self.error_norms
            .iter()
            .map(|e| e.last().copied().unwrap_or(0.0))
            .collect()
    }

    pub fn final_spread(&self) -> f64 {
        self.spread.last().copied().unwrap_or(0.0)
    }

    /// Writes `trajectory.csv`, `errors.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path, summary: &RunSummary) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let n = self.states.nrows();

        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|k| format!("x_{k}")));
        for i in 0..self.num_nodes() {
            header.extend((0..n).map(|k| format!("xhat{}_{k}", i + 1)));
        }
        let mut text = header.join(",") + "\n";
        for (s, &t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_f64(t)];
            row.extend(self.states.column(s).iter().map(|&v| fmt_f64(v)));
            for est in &self.estimates {
                row.extend(est.column(s).iter().map(|&v| fmt_f64(v)));
            }
            text += &row.join(",");
            text.push('\n');
        }
        std::fs::write(dir.join("trajectory.csv"), text)?;

        let mut header = vec!["t".to_string()];
        header.extend((0..self.num_nodes()).map(|i| format!("e{}", i + 1)));
        header.push("spread".into());
        let mut text = header.join(",") + "\n";
        for (s, &t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_f64(t)];
            row.extend(self.error_norms.iter().map(|e| fmt_f64(e[s])));
            row.push(fmt_f64(self.spread[s]));
            text += &row.join(",");
            text.push('\n');
        }
        std::fs::write(dir.join("errors.csv"), text)?;
        write_json(&dir.join("summary.json"), summary)
    }
}

/// Headline numbers of a run, written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub horizon: f64,
    pub dt: f64,
    pub samples: usize,
    pub final_error_norms: Vec<f64>,
    pub final_spread: f64,
    pub spectral_abscissa: f64,
    pub mse: Vec<f64>,
    pub mae: Vec<f64>,
}

/// Integrates plant and observers with RK4. `z0 = None` starts every
/// observer at zero.
#[allow(clippy::too_many_arguments)]
pub fn run(
    model: &PlantModel,
    graph: &SensorGraph,
    gains: &DuioGains,
    x0: &Vector,
    z0: Option<&[Vector]>,
    signals: &PlantSignals,
    horizon: f64,
    dt: f64,
) -> Result<RunResult> {
    let net = Network::new(model, graph, gains)?;
    let n = model.n_x();
    let m = gains.num_nodes();
    if x0.len() != n {
        return Err(DuioError::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
    }
    signals.check(model)?;
    let steps = step_count(horizon, dt)?;

    let mut s = Vector::zeros(n * (m + 1));
    s.rows_mut(0, n).copy_from(x0);
    if let Some(z0) = z0 {
        if z0.len() != m || z0.iter().any(|z| z.len() != n) {
            return Err(DuioError::Dimension(format!(
                "z0 must hold {m} vectors of length {n}"
            )));
        }
        for (i, z) in z0.iter().enumerate() {
            s.rows_mut((i + 1) * n, n).copy_from(z);
        }
    }

    let samples = steps + 1;
    let mut times = Vec::with_capacity(samples);
    let mut states = Mat::zeros(n, samples);
    let mut estimates = vec![Mat::zeros(n, samples); m];
    let mut record = |k: usize, s: &Vector| {
        let st = net.split(s);
        states.set_column(k, &st.x);
        for (est, xh) in estimates.iter_mut().zip(&st.xhat) {
            est.set_column(k, xh);
        }
    };
    record(0, &s);
    times.push(0.0);
    for k in 0..steps {
        let t = k as f64 * dt;
        let anchor = t + 0.5 * dt;
        s = rk4_step(
            |tau, st| {
                let (u, d) = signals.eval(tau, anchor);
                net.derivative(st, &u, &d)
            },
            t,
            &s,
            dt,
        );
        let t_next = (k + 1) as f64 * dt;
        if diverged(&s) {
            return Err(DuioError::Divergence { t: t_next });
        }
        record(k + 1, &s);
        times.push(t_next);
    }

    let error_norms = estimates
        .iter()
        .map(|est| {
            (0..samples)
                .map(|k| (states.column(k) - est.column(k)).norm())
                .collect()
        })
        .collect();
    let spread = (0..samples)
        .map(|k| {
            let mut worst = 0.0f64;
            for i in 0..m {
                for j in i + 1..m {
                    worst = worst.max((estimates[i].column(k) - estimates[j].column(k)).norm());
                }
            }
            worst
        })
        .collect();
    Ok(RunResult {
        times,
        states,
        estimates,
        error_norms,
        spread,
    })
}

/// Network state at one instant, for callers stepping the observers themselves.
pub fn network_state(
    model: &PlantModel,
    graph: &SensorGraph,
    gains: &DuioGains,
    x: &Vector,
    z: &[Vector],
) -> Result<ObserverNetworkState> {
    let net = Network::new(model, graph, gains)?;
    let n = model.n_x();
    if x.len() != n || z.len() != gains.num_nodes() || z.iter().any(|v| v.len() != n) {
        return Err(DuioError::Dimension("state sizes do not match the network".into()));
    }
    let mut s = Vector::zeros(n * (z.len() + 1));
    s.rows_mut(0, n).copy_from(x);
    for (i, v) in z.iter().enumerate() {
        s.rows_mut((i + 1) * n, n).copy_from(v);
    }
    Ok(net.split(&s))
}

/// `blockdiag(E_i) - blockdiag(K_i) (L kron I)` and its spectral abscissa.
pub fn error_dynamics_matrix(gains: &DuioGains, graph: &SensorGraph) -> Result<(Mat, f64)> {
    if graph.num_nodes() != gains.num_nodes() {
        return Err(DuioError::Dimension(format!(
            "graph has {} nodes, gains have {}",
            graph.num_nodes(),
            gains.num_nodes()
        )));
    }
    let a = gains.coupling_matrix(graph);
    let abscissa = spectral_abscissa(&a);
    Ok((a, abscissa))
}

/// Residual norms of the three decoupling identities at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplingResiduals {
    /// `||F - (I - H C) B_m||`
    pub known_input: f64,
    /// `||(I - H C) B_p||`
    pub unknown_input: f64,
    /// `||E - (I - H C) A + (L - E H) C||`
    pub state: f64,
}

impl DecouplingResiduals {
    pub fn max(&self) -> f64 {
        self.known_input.max(self.unknown_input).max(self.state)
    }
}

pub fn verify_decoupling(model: &PlantModel, gains: &DuioGains) -> Result<Vec<DecouplingResiduals>> {
    gains.check_dimensions(model)?;
    let n = model.n_x();
    Ok(gains
        .nodes
        .iter()
        .zip(model.nodes())
        .map(|(g, v)| {
            let proj = Mat::identity(n, n) - &g.h * &v.c;
            DecouplingResiduals {
                known_input: (&g.f - &proj * &v.b_m).norm(),
                unknown_input: (&proj * &v.b_p).norm(),
                state: (&g.e - &proj * &model.a + (&g.l - &g.e * &g.h) * &v.c).norm(),
            }
        })
        .collect())
}

/// Integrates `e_G' = (blockdiag(E_i) - blockdiag(K_i)(L kron I)) e_G` with RK4
/// on the same grid as [`run`]. Returns one column per sample.
pub fn simulate_error_ode(
    gains: &DuioGains,
    graph: &SensorGraph,
    e0: &Vector,
    horizon: f64,
    dt: f64,
) -> Result<(Vec<f64>, Mat)> {
    let (a, _) = error_dynamics_matrix(gains, graph)?;
    if e0.len() != a.nrows() {
        return Err(DuioError::Dimension(format!(
            "e0 has length {}, expected {}",
            e0.len(),
            a.nrows()
        )));
    }
    let steps = step_count(horizon, dt)?;
    let mut out = Mat::zeros(a.nrows(), steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut e = e0.clone();
    out.set_column(0, &e);
    times.push(0.0);
    for k in 0..steps {
        e = rk4_step(|_, v| &a * v, k as f64 * dt, &e, dt);
        let t = (k + 1) as f64 * dt;
        if diverged(&e) {
            return Err(DuioError::Divergence { t });
        }
        out.set_column(k + 1, &e);
        times.push(t);
    }
    Ok((times, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_model::{build_model_based_gains, DesignOptions};
    use crate::plant::two_mass_spring;

    fn bench(gamma: Option<f64>) -> (PlantModel, SensorGraph, DuioGains) {
        let model = two_mass_spring::model();
        let graph = SensorGraph::ring(5).unwrap();
        let opts = DesignOptions {
            gamma_override: gamma,
            ..Default::default()
        };
        let gains = build_model_based_gains(&model, &graph, &opts).unwrap();
        (model, graph, gains)
    }

    fn x0() -> Vector {
        Vector::from_vec(vec![0.5, -0.2, 0.3, 0.1])
    }

    #[test]
    fn zero_initial_error_stays_zero() {
        let (model, graph, mut gains) = bench(None);
        for g in &mut gains.nodes {
            g.k.fill(0.0);
        }
        let x0 = x0();
        let z0: Vec<Vector> = gains
            .nodes
            .iter()
            .zip(model.nodes())
            .map(|(g, v)| &x0 - &g.h * (&v.c * &x0))
            .collect();
        let signals = two_mass_spring::signals(1.0, Some((3, 0.5)));
        let res = run(&model, &graph, &gains, &x0, Some(&z0), &signals, 2.0, 1e-3).unwrap();
        let worst = res.error_norms.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn estimate_identity_holds() {
        let (model, graph, gains) = bench(Some(5.0));
        let x = x0();
        let z: Vec<Vector> = (0..5).map(|i| Vector::from_element(4, i as f64)).collect();
        let st = network_state(&model, &graph, &gains, &x, &z).unwrap();
        for i in 0..5 {
            let want = &z[i] + &gains.nodes[i].h * (&model.nodes()[i].c * &x);
            assert!((&st.xhat[i] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn decoupling_residuals_vanish_for_model_gains() {
        let (model, _, gains) = bench(None);
        for r in verify_decoupling(&model, &gains).unwrap() {
            assert!(r.max() < 1e-10, "{r:?}");
        }
    }

    #[test]
    fn perturbed_h_breaks_unknown_input_decoupling() {
        let (model, _, mut gains) = bench(None);
        gains.nodes[0].h[(0, 0)] += 0.1;
        let r = verify_decoupling(&model, &gains).unwrap();
        assert!(r[0].unknown_input > 1e-3);
    }

    #[test]
    fn single_node_matrix_is_e1() {
        let (_, _, gains) = bench(None);
        let mut one = gains.clone();
        one.nodes.truncate(1);
        let g = SensorGraph::from_adjacency(Mat::zeros(1, 1)).unwrap();
        let (a, abscissa) = error_dynamics_matrix(&one, &g).unwrap();
        assert_eq!(a, one.nodes[0].e);
        assert!((abscissa - spectral_abscissa(&one.nodes[0].e)).abs() < 1e-14);
    }

    #[test]
    fn zero_coupling_is_block_diagonal() {
        let (_, graph, mut gains) = bench(None);
        for g in &mut gains.nodes {
            g.k.fill(0.0);
        }
        let (a, _) = error_dynamics_matrix(&gains, &graph).unwrap();
        let want = crate::linalg::block_diag(
            &gains.nodes.iter().map(|g| g.e.clone()).collect::<Vec<_>>(),
        );
        assert_eq!(a, want);
    }

    #[test]
    fn gamma_five_is_hurwitz() {
        let (_, graph, gains) = bench(Some(5.0));
        assert!(error_dynamics_matrix(&gains, &graph).unwrap().1 < 0.0);
    }

    #[test]
    fn error_ode_zero_start_stays_zero() {
        let (_, graph, gains) = bench(None);
        let (_, e) = simulate_error_ode(&gains, &graph, &Vector::zeros(20), 1.0, 1e-2).unwrap();
        assert_eq!(e.norm(), 0.0);
    }

    #[test]
    fn run_matches_error_ode() {
        let (model, graph, gains) = bench(Some(5.0));
        let signals = two_mass_spring::signals(1.0, Some((9, 0.5)));
        let res = run(&model, &graph, &gains, &x0(), None, &signals, 10.0, 1e-3).unwrap();
        let eg = res.stacked_errors();
        let (_, ode) =
            simulate_error_ode(&gains, &graph, &eg.column(0).into_owned(), 10.0, 1e-3).unwrap();
        let dev = (&eg - &ode).amax();
        assert!(dev < 1e-7, "{dev}");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (model, _, gains) = bench(None);
        let g = SensorGraph::ring(4).unwrap();
        let signals = two_mass_spring::signals(1.0, None);
        assert!(matches!(
            run(&model, &g, &gains, &x0(), None, &signals, 1.0, 1e-2),
            Err(DuioError::Dimension(_))
        ));
    }

    #[test]
    fn unstable_gains_diverge_with_time() {
        let (model, graph, mut gains) = bench(None);
        for g in &mut gains.nodes {
            g.e = Mat::identity(4, 4) * 50.0;
            g.k.fill(0.0);
        }
        let signals = two_mass_spring::signals(1.0, None);
        match run(&model, &graph, &gains, &x0(), None, &signals, 5.0, 1e-2) {
            Err(DuioError::Divergence { t }) => assert!(t > 0.0 && t <= 5.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn writes_run_files() {
        let (model, graph, gains) = bench(None);
        let signals = two_mass_spring::signals(1.0, None);
        let res = run(&model, &graph, &gains, &x0(), None, &signals, 0.1, 1e-2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let summary = RunSummary {
            horizon: 0.1,
            dt: 1e-2,
            samples: res.len(),
            final_error_norms: res.final_error_norms(),
            final_spread: res.final_spread(),
            spectral_abscissa: -1.0,
            mse: vec![],
            mae: vec![],
        };
        res.write(dir.path(), &summary).unwrap();
        let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(traj.lines().count(), res.len() + 1);
        assert!(traj.starts_with("t,x_0,x_1,x_2,x_3,xhat1_0"));
        let errs = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
        assert!(errs.starts_with("t,e1,e2,e3,e4,e5,spread\n"));
    }
}

//! Ground-truth continuous-time LTI plant `x' = A x + B u + E d` and the
//! per-node views `y_i = C_i x`, `B u + E d = B_m u_i + B_p w_i`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DuioError, Result};
use crate::io::fmt_f64;
use crate::linalg::{hstack, Mat, RankPolicy, Vector};
use crate::signal::{eval_channels, SignalGenerator};

/// What a single sensor node sees of the plant.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeView {
    pub c: Mat,
    pub b_m: Mat,
    pub b_p: Mat,
    /// Columns of `B` whose signals node `i` measures.
    pub known_input_indices: Vec<usize>,
    /// Maps the unmeasured plant channels `[u_unknown; d]` to `w_i`.
    unknown_map: Mat,
}

impl NodeView {
    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_m(&self) -> usize {
        self.b_m.ncols()
    }

    pub fn r(&self) -> usize {
        self.b_p.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: Mat,
    pub b: Mat,
    pub e_dist: Mat,
    nodes: Vec<NodeView>,
}

/// Per-node description before validation against the plant.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub c: Mat,
    pub known_input_indices: Vec<usize>,
    pub b_p: Mat,
}

impl PlantModel {
    /// Validates dimensions and the input split of every node.
    ///
    /// `B_m` is taken as the known columns of `B`. `B_p` must have full
    /// column rank and span exactly the columns of `[B_unknown | E]`.
    pub fn new(a: Mat, b: Mat, e_dist: Mat, nodes: Vec<NodeSpec>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(DuioError::Dimension(format!("A is {}x{}, not square", n, a.ncols())));
        }
        if b.nrows() != n || e_dist.nrows() != n {
            return Err(DuioError::Dimension(format!(
                "B has {} rows and E has {} rows, expected {n}",
                b.nrows(),
                e_dist.nrows()
            )));
        }
        if nodes.is_empty() {
            return Err(DuioError::Dimension("plant needs at least one node".into()));
        }
        let policy = RankPolicy::default();
        let mut views = Vec::with_capacity(nodes.len());
        for (i, spec) in nodes.into_iter().enumerate() {
            if spec.c.ncols() != n {
                return Err(DuioError::Dimension(format!(
                    "node {}: C has {} columns, expected {n}",
                    i + 1,
                    spec.c.ncols()
                )));
            }
            if spec.b_p.nrows() != n {
                return Err(DuioError::Dimension(format!(
                    "node {}: B_p has {} rows, expected {n}",
                    i + 1,
                    spec.b_p.nrows()
                )));
            }
            let mut known = spec.known_input_indices.clone();
            known.sort_unstable();
            known.dedup();
            if let Some(&bad) = known.iter().find(|&&k| k >= b.ncols()) {
                return Err(DuioError::Dimension(format!(
                    "node {}: known input index {bad} out of range ({} inputs)",
                    i + 1,
                    b.ncols()
                )));
            }
            let b_m = select_columns(&b, &known);
            let unknown: Vec<usize> = (0..b.ncols()).filter(|k| !known.contains(k)).collect();
            let unmeasured = hstack(&[&select_columns(&b, &unknown), &e_dist]);

            let r = spec.b_p.ncols();
            if policy.rank(&spec.b_p) != r {
                return Err(DuioError::Rank(format!(
                    "node {}: B_p is not of full column rank",
                    i + 1
                )));
            }
            let joint = hstack(&[&spec.b_p, &unmeasured]);
            let rank_joint = policy.rank(&joint);
            if rank_joint != r || policy.rank(&unmeasured) != r {
                return Err(DuioError::Dimension(format!(
                    "node {}: columns of B_p do not span the unmeasured input directions",
                    i + 1
                )));
            }
            let unknown_map = policy.pinv(&spec.b_p) * &unmeasured;
            views.push(NodeView {
                c: spec.c,
                b_m,
                b_p: spec.b_p,
                known_input_indices: known,
                unknown_map,
            });
        }
        Ok(Self {
            a,
            b,
            e_dist,
            nodes: views,
        })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_d(&self) -> usize {
        self.e_dist.ncols()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeView] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Result<&NodeView> {
        self.nodes.get(i).ok_or(DuioError::Index {
            index: i,
            count: self.nodes.len(),
        })
    }

    /// `(A, B_m, B_p)` for node `i` (zero-based).
    pub fn node_dynamics_matrices(&self, i: usize) -> Result<(Mat, Mat, Mat)> {
        let node = self.node(i)?;
        Ok((self.a.clone(), node.b_m.clone(), node.b_p.clone()))
    }

    /// Node `i`'s measured inputs `u_i`.
    pub fn known_inputs(&self, i: usize, u: &Vector) -> Result<Vector> {
        let node = self.node(i)?;
        Ok(Vector::from_iterator(
            node.known_input_indices.len(),
            node.known_input_indices.iter().map(|&k| u[k]),
        ))
    }

    /// Node `i`'s lumped unknown input `w_i`, so that `B_m u_i + B_p w_i = B u + E d`.
    pub fn unknown_inputs(&self, i: usize, u: &Vector, d: &Vector) -> Result<Vector> {
        let node = self.node(i)?;
        let unmeasured: Vec<f64> = (0..self.n_u())
            .filter(|k| !node.known_input_indices.contains(k))
            .map(|k| u[k])
            .chain(d.iter().copied())
            .collect();
        Ok(&node.unknown_map * Vector::from_vec(unmeasured))
    }

    pub fn derivative(&self, x: &Vector, u: &Vector, d: &Vector) -> Vector {
        let mut dx = &self.a * x;
        if self.n_u() > 0 {
            dx += &self.b * u;
        }
        if self.n_d() > 0 {
            dx += &self.e_dist * d;
        }
        dx
    }

    /// Reorders the nodes; `order[k]` is the old index of the new node `k`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            a: self.a.clone(),
            b: self.b.clone(),
            e_dist: self.e_dist.clone(),
            nodes: order.iter().map(|&k| self.nodes[k].clone()).collect(),
        }
    }
}

pub(crate) fn select_columns(m: &Mat, cols: &[usize]) -> Mat {
    Mat::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}

/// How state and output derivatives are reported at the sample instants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    /// Right-hand side of the plant equation evaluated at the sample.
    #[default]
    Exact,
    /// Central differences of the integrated states (one-sided at the ends).
    CentralDifference,
}

/// Signals driving the plant: one generator per column of `B` and of `E`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantSignals {
    pub inputs: Vec<SignalGenerator>,
    pub disturbances: Vec<SignalGenerator>,
}

impl PlantSignals {
    pub fn zero(model: &PlantModel) -> Self {
        Self {
            inputs: vec![SignalGenerator::Zero; model.n_u()],
            disturbances: vec![SignalGenerator::Zero; model.n_d()],
        }
    }

    pub(crate) fn check(&self, model: &PlantModel) -> Result<()> {
        if self.inputs.len() != model.n_u() || self.disturbances.len() != model.n_d() {
            return Err(DuioError::Dimension(format!(
                "expected {} input and {} disturbance signals, got {} and {}",
                model.n_u(),
                model.n_d(),
                self.inputs.len(),
                self.disturbances.len()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, anchor: f64) -> (Vector, Vector) {
        (
            Vector::from_vec(eval_channels(&self.inputs, t, anchor)),
            Vector::from_vec(eval_channels(&self.disturbances, t, anchor)),
        )
    }
}

/// Sampled plant trajectory; matrices hold one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Mat,
    pub state_derivatives: Mat,
    pub inputs: Mat,
    pub disturbances: Mat,
    pub node_known_inputs: Vec<Mat>,
    pub node_unknown_inputs: Vec<Mat>,
    pub node_outputs: Vec<Mat>,
    pub node_output_derivatives: Vec<Mat>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Vector {
        self.states.column(self.len() - 1).into_owned()
    }

    /// CSV with columns `t, x_*, xdot_*` then `u, y, ydot` per node.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let n_x = self.states.nrows();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n_x).map(|k| format!("x_{k}")));
        header.extend((1..=n_x).map(|k| format!("xdot_{k}")));
        for (i, ((u, y), _)) in self
            .node_known_inputs
            .iter()
            .zip(&self.node_outputs)
            .zip(&self.node_output_derivatives)
            .enumerate()
        {
            let node = i + 1;
            header.extend((1..=u.nrows()).map(|k| format!("n{node}_u_{k}")));
            header.extend((1..=y.nrows()).map(|k| format!("n{node}_y_{k}")));
            header.extend((1..=y.nrows()).map(|k| format!("n{node}_ydot_{k}")));
        }
        writeln!(out, "{}", header.join(","))?;
        for (s, &t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_f64(t)];
            row.extend(self.states.column(s).iter().map(|&v| fmt_f64(v)));
            row.extend(self.state_derivatives.column(s).iter().map(|&v| fmt_f64(v)));
            for i in 0..self.node_outputs.len() {
                row.extend(self.node_known_inputs[i].column(s).iter().map(|&v| fmt_f64(v)));
                row.extend(self.node_outputs[i].column(s).iter().map(|&v| fmt_f64(v)));
                row.extend(self.node_output_derivatives[i].column(s).iter().map(|&v| fmt_f64(v)));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Absolute state magnitude treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

pub(crate) fn rk4_step<F>(f: F, t: f64, x: &Vector, dt: f64) -> Vector
where
    F: Fn(f64, &Vector) -> Vector,
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)));
    let k3 = f(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)));
    let k4 = f(t + dt, &(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

pub(crate) fn diverged(x: &Vector) -> bool {
    x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
}

pub(crate) fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DuioError::Dimension(format!("step size must be positive, got {dt}")));
    }
    if !(horizon >= dt) {
        return Err(DuioError::Dimension(format!(
            "horizon {horizon} shorter than step {dt}"
        )));
    }
    Ok((horizon / dt).round() as usize)
}

/// Integrates the plant with fixed-step RK4 on the grid `t_k = k dt`.
pub fn simulate(
    model: &PlantModel,
    x0: &Vector,
    signals: &PlantSignals,
    horizon: f64,
    dt: f64,
    mode: DerivativeMode,
) -> Result<Trajectory> {
    if x0.len() != model.n_x() {
        return Err(DuioError::Dimension(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            model.n_x()
        )));
    }
    signals.check(model)?;
    let steps = step_count(horizon, dt)?;
    let n = steps + 1;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();

    let mut states = Mat::zeros(model.n_x(), n);
    states.set_column(0, x0);
    let mut x = x0.clone();
    for k in 0..steps {
        let t = times[k];
        let anchor = t + 0.5 * dt;
        x = rk4_step(
            |s, xs| {
                let (u, d) = signals.eval(s, anchor);
                model.derivative(xs, &u, &d)
            },
            t,
            &x,
            dt,
        );
        if diverged(&x) {
            return Err(DuioError::Divergence { t: times[k + 1] });
        }
        states.set_column(k + 1, &x);
    }

    let mut inputs = Mat::zeros(model.n_u(), n);
    let mut disturbances = Mat::zeros(model.n_d(), n);
    let mut state_derivatives = Mat::zeros(model.n_x(), n);
    for (k, &t) in times.iter().enumerate() {
        let (u, d) = signals.eval(t, t);
        inputs.set_column(k, &u);
        disturbances.set_column(k, &d);
        if mode == DerivativeMode::Exact {
            let xk = states.column(k).into_owned();
            state_derivatives.set_column(k, &model.derivative(&xk, &u, &d));
        }
    }
    if mode == DerivativeMode::CentralDifference {
        state_derivatives = central_difference(&states, dt);
    }
    build_trajectory(model, times, states, state_derivatives, inputs, disturbances)
}

fn central_difference(states: &Mat, dt: f64) -> Mat {
    let n = states.ncols();
    let mut out = Mat::zeros(states.nrows(), n);
    if n < 2 {
        return out;
    }
    for k in 0..n {
        let col = if k == 0 {
            (states.column(1) - states.column(0)) / dt
        } else if k == n - 1 {
            (states.column(n - 1) - states.column(n - 2)) / dt
        } else {
            (states.column(k + 1) - states.column(k - 1)) / (2.0 * dt)
        };
        out.set_column(k, &col);
    }
    out
}

pub(crate) fn build_trajectory(
    model: &PlantModel,
    times: Vec<f64>,
    states: Mat,
    state_derivatives: Mat,
    inputs: Mat,
    disturbances: Mat,
) -> Result<Trajectory> {
    let n = times.len();
    let mut node_known_inputs = Vec::new();
    let mut node_unknown_inputs = Vec::new();
    let mut node_outputs = Vec::new();
    let mut node_output_derivatives = Vec::new();
    for (i, node) in model.nodes().iter().enumerate() {
        node_outputs.push(&node.c * &states);
        node_output_derivatives.push(&node.c * &state_derivatives);
        let mut ui = Mat::zeros(node.n_m(), n);
        let mut wi = Mat::zeros(node.r(), n);
        for k in 0..n {
            let u = inputs.column(k).into_owned();
            let d = disturbances.column(k).into_owned();
            ui.set_column(k, &model.known_inputs(i, &u)?);
            wi.set_column(k, &model.unknown_inputs(i, &u, &d)?);
        }
        node_known_inputs.push(ui);
        node_unknown_inputs.push(wi);
    }
    Ok(Trajectory {
        times,
        states,
        state_derivatives,
        inputs,
        disturbances,
        node_known_inputs,
        node_unknown_inputs,
        node_outputs,
        node_output_derivatives,
    })
}

/// Two-mass-spring benchmark plant with five heterogeneous sensor nodes.
///
/// Input column 0 is the force every node measures; input column 1 is the
/// unknown input direction `[1 1 1 1]^T`. Node `i` lumps its own scaled copy
/// of that direction with the disturbance direction into `B_p`.
pub mod two_mass_spring {
    use super::*;

    pub const NODE_COUNT: usize = 5;
    pub const UNKNOWN_SCALES: [f64; NODE_COUNT] = [1.0, 0.5, 0.33, 0.25, 0.2];

    pub fn a() -> Mat {
        Mat::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, //
                -5.3333, 0.0, 2.6667, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                2.6667, 0.0, -2.6667, 0.0,
            ],
        )
    }

    pub fn b_known() -> Mat {
        Mat::from_column_slice(4, 1, &[0.0, 1.3333, 0.0, 0.0])
    }

    pub fn e_dist() -> Mat {
        Mat::from_column_slice(4, 1, &[0.1, 0.0, 0.1, 0.0])
    }

    pub fn c(i: usize) -> Mat {
        let rows: [[f64; 16]; NODE_COUNT] = [
            [1., 0., 1., 0., 0., 1., 0., 0., 0., 0., 1., 1., 0., 0., 0., 1.],
            [0., 1., 0., 0., 1., 0., 1., 0., 0., 0., 0., 1., 0., 0., 1., 1.],
            [0., 0., 1., 1., 0., 1., 0., 0., 1., 0., 1., 0., 0., 1., 1., 0.],
            [1., 0., 1., 1., 0., 1., 0., 0., 0., 0., 1., 1., 1., 0., 1., 0.],
            [1., 0., 1., 0., 0., 0., 1., 1., 0., 0., 1., 1., 0., 0., 0., 1.],
        ];
        Mat::from_row_slice(4, 4, &rows[i])
    }

    pub fn b_p(i: usize) -> Mat {
        let bu = Mat::from_element(4, 1, UNKNOWN_SCALES[i]);
        hstack(&[&bu, &e_dist()])
    }

    pub fn model() -> PlantModel {
        let b = hstack(&[&b_known(), &Mat::from_element(4, 1, 1.0)]);
        let nodes = (0..NODE_COUNT)
            .map(|i| NodeSpec {
                c: c(i),
                known_input_indices: vec![0],
                b_p: b_p(i),
            })
            .collect();
        PlantModel::new(a(), b, e_dist(), nodes).expect("benchmark plant is valid")
    }

    /// Unknown input `0.2 cos(0.2 t + 2)` along `[1 1 1 1]^T`.
    pub fn unknown_input() -> SignalGenerator {
        SignalGenerator::sinusoid(0.2, 0.2, 2.0)
    }

    /// Known input decaying by half per second from `initial`.
    pub fn known_input(initial: f64) -> SignalGenerator {
        SignalGenerator::AutonomousLinear {
            rate: 0.5f64.ln(),
            initial,
        }
    }

    /// Online signals; `disturbance` is `None` for `d = 0`.
    pub fn signals(known_initial: f64, disturbance: Option<(u64, f64)>) -> PlantSignals {
        let d = match disturbance {
            Some((seed, hold)) => SignalGenerator::random_hold(seed, hold, -0.1, 0.1),
            None => SignalGenerator::Zero,
        };
        PlantSignals {
            inputs: vec![known_input(known_initial), unknown_input()],
            disturbances: vec![d],
        }
    }
}

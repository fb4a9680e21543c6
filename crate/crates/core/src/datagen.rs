//! Offline data collection at a single node.
//!
//! A [`NodeDataset`] stores the sampled matrices `U, Y, Ydot, X, Xdot`.
//! When the dataset comes from a simulation it also keeps the lumped
//! unknown input `W`, but only as a validation record: design code
//! receives a [`DatasetView`], which has no access to it.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DuioError, Result};
use crate::io::{read_json, read_samples_csv, write_json, write_samples_csv};
use crate::linalg::{vstack, Mat, RankPolicy, RankReport, Vector};
use crate::plant::{simulate, DerivativeMode, PlantModel, PlantSignals};
use crate::signal::SignalGenerator;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDataset {
    pub u: Mat,
    pub y: Mat,
    pub ydot: Mat,
    pub x: Mat,
    pub xdot: Mat,
    w_validation: Option<Mat>,
    pub sample_times: Vec<f64>,
    pub seed: u64,
}

/// Read-only view of the measured matrices, without the unknown-input record.
#[derive(Debug, Clone, Copy)]
pub struct DatasetView<'a> {
    pub u: &'a Mat,
    pub y: &'a Mat,
    pub ydot: &'a Mat,
    pub x: &'a Mat,
    pub xdot: &'a Mat,
}

impl DatasetView<'_> {
    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_x(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_m(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_y(&self) -> usize {
        self.y.nrows()
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let n = self.n_samples();
        let cols = [self.u.ncols(), self.y.ncols(), self.ydot.ncols(), self.xdot.ncols()];
        if cols.iter().any(|&c| c != n) {
            return Err(DuioError::Dimension(format!(
                "data matrices disagree on sample count: U {}, Y {}, Ydot {}, X {n}, Xdot {}",
                cols[0], cols[1], cols[2], cols[3]
            )));
        }
        if self.xdot.nrows() != self.n_x() || self.ydot.nrows() != self.n_y() {
            return Err(DuioError::Dimension(
                "derivative records do not match their signals".into(),
            ));
        }
        Ok(())
    }
}

impl NodeDataset {
    pub fn new(
        u: Mat,
        y: Mat,
        ydot: Mat,
        x: Mat,
        xdot: Mat,
        w_validation: Option<Mat>,
        sample_times: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let ds = Self {
            u,
            y,
            ydot,
            x,
            xdot,
            w_validation,
            sample_times,
            seed,
        };
        ds.view().check_dimensions()?;
        if ds.sample_times.len() != ds.n_samples() {
            return Err(DuioError::Dimension(format!(
                "{} sample times for {} samples",
                ds.sample_times.len(),
                ds.n_samples()
            )));
        }
        if let Some(w) = &ds.w_validation {
            if w.ncols() != ds.n_samples() {
                return Err(DuioError::Dimension("W has the wrong sample count".into()));
            }
        }
        Ok(ds)
    }

    pub fn view(&self) -> DatasetView<'_> {
        DatasetView {
            u: &self.u,
            y: &self.y,
            ydot: &self.ydot,
            x: &self.x,
            xdot: &self.xdot,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn w_validation(&self) -> Option<&Mat> {
        self.w_validation.as_ref()
    }

    pub fn without_validation(mut self) -> Self {
        self.w_validation = None;
        self
    }

    /// Every column appended twice.
    pub fn duplicated(&self) -> Self {
        let dup = |m: &Mat| crate::linalg::hstack(&[m, m]);
        let mut times = self.sample_times.clone();
        times.extend_from_slice(&self.sample_times);
        Self {
            u: dup(&self.u),
            y: dup(&self.y),
            ydot: dup(&self.ydot),
            x: dup(&self.x),
            xdot: dup(&self.xdot),
            w_validation: self.w_validation.as_ref().map(dup),
            sample_times: times,
            seed: self.seed,
        }
    }

    pub fn save(&self, dir: &Path, node: usize) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_samples_csv(&dir.join("U.csv"), "u", &self.u)?;
        write_samples_csv(&dir.join("Y.csv"), "y", &self.y)?;
        write_samples_csv(&dir.join("Ydot.csv"), "ydot", &self.ydot)?;
        write_samples_csv(&dir.join("X.csv"), "x", &self.x)?;
        write_samples_csv(&dir.join("Xdot.csv"), "xdot", &self.xdot)?;
        let times = Mat::from_row_slice(1, self.sample_times.len(), &self.sample_times);
        write_samples_csv(&dir.join("times.csv"), "t", &times)?;
        if let Some(w) = &self.w_validation {
            write_samples_csv(&dir.join("W_validation.csv"), "w", w)?;
        }
        let meta = DatasetMeta {
            node,
            n_samples: self.n_samples(),
            n_x: self.x.nrows(),
            n_m: self.u.nrows(),
            n_y: self.y.nrows(),
            r_validation: self.w_validation.as_ref().map(|w| w.nrows()),
            seed: self.seed,
        };
        write_json(&dir.join("dataset.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<(Self, DatasetMeta)> {
        let meta: DatasetMeta = read_json(&dir.join("dataset.json"))?;
        let u = read_samples_csv(&dir.join("U.csv"), meta.n_m)?;
        let y = read_samples_csv(&dir.join("Y.csv"), meta.n_y)?;
        let ydot = read_samples_csv(&dir.join("Ydot.csv"), meta.n_y)?;
        let x = read_samples_csv(&dir.join("X.csv"), meta.n_x)?;
        let xdot = read_samples_csv(&dir.join("Xdot.csv"), meta.n_x)?;
        let times = read_samples_csv(&dir.join("times.csv"), 1)?;
        let w = match meta.r_validation {
            Some(r) => Some(read_samples_csv(&dir.join("W_validation.csv"), r)?),
            None => None,
        };
        // zero-row matrices carry no column count in their values
        let n = meta.n_samples;
        let fix = |m: Mat| if m.nrows() == 0 { Mat::zeros(0, n) } else { m };
        let ds = Self::new(
            fix(u),
            fix(y),
            fix(ydot),
            x,
            xdot,
            w.map(fix),
            times.iter().copied().collect(),
            meta.seed,
        )?;
        Ok((ds, meta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub node: usize,
    pub n_samples: usize,
    pub n_x: usize,
    pub n_m: usize,
    pub n_y: usize,
    pub r_validation: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    /// Entries uniform in `[-scale, scale]`, fresh for every segment.
    Random { scale: f64 },
    Fixed { value: Vec<f64> },
}

/// How the offline experiment is run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Excitation {
    /// Explicit signals; `None` drives every input and disturbance channel
    /// with independent piecewise-constant uniform levels in `[-amplitude, amplitude]`.
    pub signals: Option<PlantSignals>,
    pub amplitude: f64,
    pub initial_state: InitialState,
    /// Trajectories spliced together, each from a fresh initial state.
    pub segments: usize,
    pub sample_interval: f64,
    pub dt: f64,
    /// Draw sample instants at random grid points instead of uniformly.
    pub jitter: bool,
    pub derivatives: DerivativeMode,
    /// Additive uniform noise on `Y, Ydot, X, Xdot` in `[-level, level]`.
    pub measurement_noise: f64,
    pub max_retries: usize,
}

impl Default for Excitation {
    fn default() -> Self {
        Self {
            signals: None,
            amplitude: 1.0,
            initial_state: InitialState::Random { scale: 1.0 },
            segments: 1,
            sample_interval: 0.1,
            dt: 1e-3,
            jitter: false,
            derivatives: DerivativeMode::Exact,
            measurement_noise: 0.0,
            max_retries: 4,
        }
    }
}

const RETRY_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Records `n_samples` columns at node `i`, retrying with fresh seeds until
/// `[U; W; X]` has full row rank.
pub fn collect(
    model: &PlantModel,
    i: usize,
    n_samples: usize,
    excitation: &Excitation,
    seed: u64,
    policy: RankPolicy,
) -> Result<NodeDataset> {
    let node = model.node(i)?;
    let required = node.n_m() + node.r() + model.n_x();
    if n_samples < required {
        return Err(DuioError::Excitation {
            block: "[U; W; X] (fewer samples than rows)".into(),
            rank: n_samples,
            required,
        });
    }
    let mut last_err = None;
    for attempt in 0..=excitation.max_retries as u64 {
        let s = seed.wrapping_add(attempt.wrapping_mul(RETRY_SEED_STRIDE));
        let ds = collect_once(model, i, n_samples, excitation, s)?;
        match deficient_block(&ds, node.n_m(), node.r(), model.n_x(), policy) {
            None => return Ok(ds),
            Some(err) => last_err = Some(err),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn deficient_block(
    ds: &NodeDataset,
    n_m: usize,
    r: usize,
    n_x: usize,
    policy: RankPolicy,
) -> Option<DuioError> {
    let w = ds.w_validation().expect("simulated dataset keeps W");
    let blocks: [(&str, Mat, usize); 4] = [
        ("U", ds.u.clone(), n_m),
        ("W", w.clone(), r),
        ("X", ds.x.clone(), n_x),
        ("[U; W; X]", vstack(&[&ds.u, w, &ds.x]), n_m + r + n_x),
    ];
    blocks.into_iter().find_map(|(name, m, req)| {
        let rank = policy.rank(&m);
        (rank < req).then(|| DuioError::Excitation {
            block: name.to_string(),
            rank,
            required: req,
        })
    })
}

fn collect_once(
    model: &PlantModel,
    i: usize,
    n_samples: usize,
    exc: &Excitation,
    seed: u64,
) -> Result<NodeDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let segments = exc.segments.max(1).min(n_samples);
    let steps_per_sample = ((exc.sample_interval / exc.dt).round() as usize).max(1);

    let mut cols_u = Vec::new();
    let mut cols_w = Vec::new();
    let mut cols = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut times = Vec::new();
    let mut offset = 0.0;

    for seg in 0..segments {
        let count = n_samples / segments + usize::from(seg < n_samples % segments);
        let x0 = match &exc.initial_state {
            InitialState::Random { scale } => {
                Vector::from_fn(model.n_x(), |_, _| rng.random_range(-1.0..=1.0) * scale)
            }
            InitialState::Fixed { value } => {
                if value.len() != model.n_x() {
                    return Err(DuioError::Dimension(format!(
                        "initial state has length {}, expected {}",
                        value.len(),
                        model.n_x()
                    )));
                }
                Vector::from_column_slice(value)
            }
        };
        let signals = match &exc.signals {
            Some(s) => s.clone(),
            None => {
                let mut draw = |_: usize| {
                    SignalGenerator::random_hold(
                        rng.random(),
                        exc.sample_interval,
                        -exc.amplitude,
                        exc.amplitude,
                    )
                };
                PlantSignals {
                    inputs: (0..model.n_u()).map(&mut draw).collect(),
                    disturbances: (0..model.n_d()).map(&mut draw).collect(),
                }
            }
        };
        let grid_steps = count * steps_per_sample;
        let horizon = grid_steps as f64 * exc.dt;
        let traj = simulate(model, &x0, &signals, horizon, exc.dt, exc.derivatives)?;
        let picks: Vec<usize> = if exc.jitter {
            let mut all: Vec<usize> = (0..grid_steps).collect();
            for k in 0..count {
                let j = rng.random_range(k..all.len());
                all.swap(k, j);
            }
            let mut p = all[..count].to_vec();
            p.sort_unstable();
            p
        } else {
            (0..count).map(|k| k * steps_per_sample).collect()
        };
        for &k in &picks {
            cols_u.push(traj.node_known_inputs[i].column(k).into_owned());
            cols_w.push(traj.node_unknown_inputs[i].column(k).into_owned());
            cols.0.push(traj.node_outputs[i].column(k).into_owned());
            cols.1.push(traj.node_output_derivatives[i].column(k).into_owned());
            cols.2.push(traj.states.column(k).into_owned());
            cols.3.push(traj.state_derivatives.column(k).into_owned());
            times.push(offset + traj.times[k]);
        }
        offset += horizon + exc.sample_interval;
    }

    let node = model.node(i)?;
    let stack = |v: &[Vector], rows: usize| Mat::from_fn(rows, v.len(), |r, c| v[c][r]);
    let mut y = stack(&cols.0, node.n_y());
    let mut ydot = stack(&cols.1, node.n_y());
    let mut x = stack(&cols.2, model.n_x());
    let mut xdot = stack(&cols.3, model.n_x());
    if exc.measurement_noise > 0.0 {
        let lvl = exc.measurement_noise;
        for m in [&mut y, &mut ydot, &mut x, &mut xdot] {
            m.iter_mut().for_each(|v| *v += rng.random_range(-lvl..=lvl));
        }
    }
    NodeDataset::new(
        stack(&cols_u, node.n_m()),
        y,
        ydot,
        x,
        xdot,
        Some(stack(&cols_w, node.r())),
        times,
        seed,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankAssumptionReport {
    pub holds: bool,
    pub required: usize,
    pub rank: RankReport,
}

/// Full row rank of `[U; W; X]`; needs the validation record.
pub fn check_rank_assumption(ds: &NodeDataset, policy: RankPolicy) -> Result<RankAssumptionReport> {
    let w = ds.w_validation().ok_or(DuioError::OracleUnavailable)?;
    let stacked = vstack(&[&ds.u, w, &ds.x]);
    let required = stacked.nrows();
    let rank = policy.rank_report(&stacked);
    Ok(RankAssumptionReport {
        holds: rank.rank == required,
        required,
        rank,
    })
}

/// One online sample `(u_i, y_i, ydot_i, x, xdot)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSample {
    pub u: Vector,
    pub y: Vector,
    pub ydot: Vector,
    pub x: Vector,
    pub xdot: Vector,
}

impl OnlineSample {
    fn stacked(&self) -> Vector {
        let parts = [&self.u, &self.y, &self.ydot, &self.x, &self.xdot];
        Vector::from_iterator(
            parts.iter().map(|p| p.len()).sum(),
            parts.iter().flat_map(|p| p.iter().copied()),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compatibility {
    pub compatible: bool,
    /// Distance to the data column space, relative to the sample norm.
    pub residual: f64,
}

/// Projector onto the column space of `[U; Y; Ydot; X; Xdot]`.
#[derive(Debug, Clone)]
pub struct CompatibilityChecker {
    basis: Mat,
    pub tolerance: f64,
}

pub const COMPATIBILITY_TOL: f64 = 1e-8;

impl CompatibilityChecker {
    pub fn new(ds: &DatasetView<'_>, policy: RankPolicy) -> Self {
        let stacked = vstack(&[ds.u, ds.y, ds.ydot, ds.x, ds.xdot]);
        let rank = policy.rank(&stacked);
        let basis = if rank == 0 {
            Mat::zeros(stacked.nrows(), 0)
        } else {
            let svd = stacked.svd(true, false);
            let u = svd.u.expect("u requested");
            // nalgebra sorts singular values in decreasing order
            u.columns(0, rank).into_owned()
        };
        Self {
            basis,
            tolerance: COMPATIBILITY_TOL,
        }
    }

    pub fn check(&self, sample: &OnlineSample) -> Result<Compatibility> {
        let v = sample.stacked();
        if v.len() != self.basis.nrows() {
            return Err(DuioError::Dimension(format!(
                "sample has {} entries, data rows {}",
                v.len(),
                self.basis.nrows()
            )));
        }
        let norm = v.norm();
        let residual = if norm == 0.0 {
            0.0
        } else {
            (&v - &self.basis * (self.basis.transpose() * &v)).norm() / norm
        };
        Ok(Compatibility {
            compatible: residual < self.tolerance,
            residual,
        })
    }
}

pub fn check_compatibility(
    ds: &DatasetView<'_>,
    sample: &OnlineSample,
    policy: RankPolicy,
) -> Result<Compatibility> {
    CompatibilityChecker::new(ds, policy).check(sample)
}

//! Least-squares identification baseline, estimation-error metrics and the
//! Monte Carlo comparison of the three design routes.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::DatasetView;
use crate::design_model::{
    assemble, blocks_from_matrices, verify_hurwitz, DesignMethod, DesignOptions, DuioGains,
    NodeBlocks,
};
use crate::error::{DuioError, Result};
use crate::experiment::{derive_seed, Scenario};
use crate::io::write_json;
use crate::linalg::{detectability, vstack, Mat, RankPolicy};
use crate::network::{build_laplacian_removing, SensorGraph};
use crate::observer::{run, RunResult};

/// Node model fitted from offline data.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedModel {
    pub a: Mat,
    pub b_m: Mat,
    pub c: Mat,
}

/// `[A B_m] = Xdot [X; U]^+` and `C = Y X^+`.
///
/// The unknown input is not recorded, so its contribution ends up as
/// unmodelled residual and biases the fit.
pub fn identify_least_squares(ds: &DatasetView<'_>, policy: RankPolicy) -> Result<IdentifiedModel> {
    ds.check_dimensions()?;
    let n = ds.n_x();
    let xu = vstack(&[ds.x, ds.u]);
    let rank = policy.rank(&xu);
    if rank < xu.nrows() {
        return Err(DuioError::Rank(format!(
            "[X; U] has rank {rank}, identification needs {}",
            xu.nrows()
        )));
    }
    let theta = ds.xdot * policy.pinv(&xu);
    let c = ds.y * policy.pinv(ds.x);
    Ok(IdentifiedModel {
        a: theta.columns(0, n).into_owned(),
        b_m: theta.columns(n, ds.n_m()).into_owned(),
        c,
    })
}

/// Model-based construction on identified node models, with the granted
/// unknown-input coupling `B_p` of each node.
pub fn build_identified_gains(
    data: &[DatasetView<'_>],
    grants: &[Mat],
    graph: &SensorGraph,
    opts: &DesignOptions,
) -> Result<DuioGains> {
    if data.len() != graph.num_nodes() || grants.len() != data.len() {
        return Err(DuioError::Dimension(format!(
            "{} datasets, {} grants, {} graph nodes",
            data.len(),
            grants.len(),
            graph.num_nodes()
        )));
    }
    let policy = opts.rank_policy();
    let blocks = data
        .iter()
        .zip(grants)
        .enumerate()
        .map(|(i, (ds, b_p))| {
            let id = identify_least_squares(ds, policy)
                .map_err(|e| DuioError::Design(format!("node {}: {e}", i + 1)))?;
            if b_p.nrows() != id.a.nrows() {
                return Err(DuioError::Dimension(format!(
                    "node {}: granted B_p has {} rows",
                    i + 1,
                    b_p.nrows()
                )));
            }
            blocks_from_matrices(&id.a, &id.b_m, &id.c, b_p, policy).ok_or_else(|| {
                DuioError::Design(format!(
                    "node {}: identified output map cannot decouple the unknown input",
                    i + 1
                ))
            })
        })
        .collect::<Result<Vec<NodeBlocks>>>()?;
    build_laplacian_removing(graph, 0)
        .map_err(|e| DuioError::Design(format!("communication graph: {e}")))?;
    let leader = blocks
        .iter()
        .position(|b| detectability(&b.t_x, &b.c, opts.pbh).detectable)
        .ok_or_else(|| DuioError::Design("no identified node is detectable".into()))?;
    let gains = assemble(DesignMethod::Identified, &blocks, leader, graph, opts)?;
    verify_hurwitz(&gains, graph, opts, DuioError::Design)?;
    Ok(gains)
}

/// Per-node time-averaged errors of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// `(1/T) int_0^T ||x - xhat_i||^2 dt`
    pub mse: Vec<f64>,
    /// `(1/T) int_0^T ||x - xhat_i|| dt`
    pub mae: Vec<f64>,
}

impl RunMetrics {
    pub fn mean_mse(&self) -> f64 {
        mean(&self.mse)
    }

    pub fn mean_mae(&self) -> f64 {
        mean(&self.mae)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Trapezoidal `(1/T) int f dt` over the sample times.
pub fn time_average(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() < 2 || values.len() != times.len() {
        return Err(DuioError::EmptyRun);
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(DuioError::EmptyRun);
    }
    let integral: f64 = times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    Ok(integral / span)
}

pub fn compute_mse_mae(run: &RunResult) -> Result<RunMetrics> {
    if run.is_empty() {
        return Err(DuioError::EmptyRun);
    }
    let mut mse = Vec::with_capacity(run.num_nodes());
    let mut mae = Vec::with_capacity(run.num_nodes());
    for e in &run.error_norms {
        let sq: Vec<f64> = e.iter().map(|v| v * v).collect();
        mse.push(time_average(&run.times, &sq)?);
        mae.push(time_average(&run.times, e)?);
    }
    Ok(RunMetrics { mse, mae })
}

/// Aggregate of one design route over all experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: DesignMethod,
    /// Mean over experiments of the mean over nodes.
    pub mse: f64,
    pub mae: f64,
    /// Per-node values averaged over experiments.
    pub node_mse: Vec<f64>,
    pub node_mae: Vec<f64>,
    pub experiments: Vec<RunMetrics>,
}

impl MethodSummary {
    fn from_runs(method: DesignMethod, runs: Vec<RunMetrics>) -> Self {
        let k = runs.len() as f64;
        let nodes = runs.first().map(|r| r.mse.len()).unwrap_or(0);
        let node_avg = |pick: fn(&RunMetrics) -> &Vec<f64>| -> Vec<f64> {
            (0..nodes)
                .map(|i| runs.iter().map(|r| pick(r)[i]).sum::<f64>() / k)
                .collect()
        };
        Self {
            method,
            mse: runs.iter().map(RunMetrics::mean_mse).sum::<f64>() / k,
            mae: runs.iter().map(RunMetrics::mean_mae).sum::<f64>() / k,
            node_mse: node_avg(|r| &r.mse),
            node_mae: node_avg(|r| &r.mae),
            experiments: runs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub seed: u64,
    pub experiment_count: usize,
    /// Seed of experiment `k`.
    pub experiment_seeds: Vec<u64>,
    pub methods: Vec<MethodSummary>,
}

impl MetricSummary {
    pub fn method(&self, m: DesignMethod) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from("method,mse,mae\n");
        for m in &self.methods {
            out += &format!(
                "{},{},{}\n",
                method_label(m.method),
                crate::io::fmt_f64(m.mse),
                crate::io::fmt_f64(m.mae)
            );
        }
        out
    }

    pub fn table_markdown(&self) -> String {
        let mut out = format!(
            "Evaluation metrics over {} experiments (seed {})\n\n| Method | MSE | MAE |\n|---|---|---|\n",
            self.experiment_count, self.seed
        );
        for m in &self.methods {
            out += &format!("| {} | {:.4} | {:.4} |\n", method_label(m.method), m.mse, m.mae);
        }
        out
    }

    /// Writes `table1.csv`, `table1.md` and `metrics.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("table1.csv"), self.table_csv())?;
        std::fs::write(dir.join("table1.md"), self.table_markdown())?;
        write_json(&dir.join("metrics.json"), self)
    }
}

pub fn method_label(m: DesignMethod) -> &'static str {
    match m {
        DesignMethod::Model => "Model-based DUIO",
        DesignMethod::Data => "D-DUIO",
        DesignMethod::Identified => "ID-DUIO",
    }
}

/// One experiment: fresh offline data, designs and a shared online run.
pub fn run_experiment(
    scn: &Scenario,
    methods: &[DesignMethod],
    model_gains: Option<&DuioGains>,
    seed: u64,
) -> Result<Vec<(RunResult, RunMetrics)>> {
    let needs_data = methods.iter().any(|&m| m != DesignMethod::Model);
    let data = if needs_data {
        Some(scn.collect_datasets(seed).map_err(|e| tag(e, "data collection", seed))?)
    } else {
        None
    };
    let setup = scn.online(seed)?;
    let run_cfg = &scn.config.run;
    methods
        .iter()
        .map(|&m| {
            let gains = match (m, model_gains) {
                (DesignMethod::Model, Some(g)) => g.clone(),
                _ => scn
                    .design(m, data.as_deref())
                    .map_err(|e| tag(e, method_label(m), seed))?,
            };
            let res = run(
                &scn.model,
                &scn.graph,
                &gains,
                &setup.x0,
                setup.z0.as_deref(),
                &setup.signals,
                run_cfg.horizon,
                run_cfg.dt,
            )
            .map_err(|e| tag(e, method_label(m), seed))?;
            let metrics = compute_mse_mae(&res)?;
            Ok((res, metrics))
        })
        .collect()
}

fn tag(e: DuioError, what: &str, seed: u64) -> DuioError {
    match e {
        DuioError::Design(msg) => DuioError::Design(format!("{what}, seed {seed}: {msg}")),
        other => DuioError::Design(format!("{what}, seed {seed}: {other}")),
    }
}

/// Runs `k` experiments in parallel, experiment `j` seeded with
/// `derive_seed(master_seed, j)`.
pub fn monte_carlo_compare(scn: &Scenario, k: usize, master_seed: u64) -> Result<MetricSummary> {
    if k == 0 {
        return Err(DuioError::Config("at least one experiment is required".into()));
    }
    let methods = scn.config.compare.methods.clone();
    let model_gains = if methods.contains(&DesignMethod::Model) {
        Some(scn.design(DesignMethod::Model, None).map_err(|e| tag(e, "Model-based DUIO", master_seed))?)
    } else {
        None
    };
    let seeds: Vec<u64> = (0..k as u64).map(|j| derive_seed(master_seed, j)).collect();
    let per_experiment: Vec<Vec<RunMetrics>> = seeds
        .par_iter()
        .map(|&s| {
            run_experiment(scn, &methods, model_gains.as_ref(), s)
                .map(|v| v.into_iter().map(|(_, m)| m).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let runs = per_experiment.iter().map(|e| e[mi].clone()).collect();
            MethodSummary::from_runs(m, runs)
        })
        .collect();
    Ok(MetricSummary {
        seed: master_seed,
        experiment_count: k,
        experiment_seeds: seeds,
        methods: summaries,
    })
}

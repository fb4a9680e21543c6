//! Command-line front end: `collect`, `check`, `design`, `run`, `compare`.
//!
//! Exit codes: 0 success, 1 other failure, 2 offline data not exciting,
//! 3 data check failed, 4 I/O or parse error, 5 design error,
//! 6 gains/plant dimension mismatch, 7 divergence.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::datagen::{check_rank_assumption, NodeDataset};
use crate::design_data::{analyze_node, DataDesignReport};
use crate::design_model::{DesignMethod, DuioGains};
use crate::error::{DuioError, Result};
use crate::experiment::{analyze_all, ExperimentConfig, Scenario};
use crate::io::{read_json, write_json};
use crate::metrics::{compute_mse_mae, method_label, monte_carlo_compare};
use crate::network::build_laplacian_removing;
use crate::observer::{error_dynamics_matrix, run, verify_decoupling, DecouplingResiduals, RunSummary};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_EXCITATION: i32 = 2;
pub const EXIT_CHECK: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_DESIGN: i32 = 5;
pub const EXIT_DIMENSION: i32 = 6;
pub const EXIT_DIVERGENCE: i32 = 7;

#[derive(Debug, Parser)]
#[command(name = "duio", version, about = "Distributed unknown-input observers from models or data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record offline datasets for every node.
    Collect(CollectArgs),
    /// Test the data conditions for a data-driven design.
    Check(CheckArgs),
    /// Design observer gains and write them as JSON.
    Design(DesignArgs),
    /// Simulate plant and observer network.
    Run(RunArgs),
    /// Monte Carlo comparison of the design routes.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Directory written by `collect`.
    pub data: PathBuf,
    /// Config supplying tolerances; defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print every rank test.
    #[arg(long)]
    pub explain: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Model,
    Data,
    Id,
}

impl From<MethodArg> for DesignMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Model => DesignMethod::Model,
            MethodArg::Data => DesignMethod::Data,
            MethodArg::Id => DesignMethod::Identified,
        }
    }
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "data")]
    pub method: MethodArg,
    /// Offline datasets; collected from the seed when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Coupling gain, overriding the config.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Print the per-node rank tests of the data route.
    #[arg(long)]
    pub explain: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Gains written by `design`; designed in-process when absent.
    #[arg(long)]
    pub gains: Option<PathBuf>,
    /// Route used when no gains file is given.
    #[arg(long, value_enum, default_value = "data")]
    pub method: MethodArg,
    /// Coupling gain for the in-process design.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of experiments, overriding the config.
    #[arg(long)]
    pub experiments: Option<usize>,
    /// Coupling gain for every route.
    #[arg(long)]
    pub gamma: Option<f64>,
}

/// Gains plus the checks made when they were designed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignArtifact {
    pub gains: DuioGains,
    pub verification: Verification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub spectral_abscissa: f64,
    pub decoupling: Vec<DecouplingResiduals>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<DuioError> for Failure {
    fn from(e: DuioError) -> Self {
        let code = match &e {
            DuioError::Excitation { .. } => EXIT_EXCITATION,
            DuioError::Io(_) | DuioError::Parse { .. } => EXIT_IO,
            DuioError::Design(_)
            | DuioError::Solvability { .. }
            | DuioError::Numerics(_)
            | DuioError::Consistency { .. }
            | DuioError::Precondition(_)
            | DuioError::Rank(_)
            | DuioError::Connectivity { .. } => EXIT_DESIGN,
            DuioError::Dimension(_) | DuioError::Index { .. } => EXIT_DIMENSION,
            DuioError::Divergence { .. } => EXIT_DIVERGENCE,
            _ => EXIT_OTHER,
        };
        Self::new(code, e.to_string())
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_OTHER } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(cmd: Command) -> CliResult {
    match cmd {
        Command::Collect(a) => cmd_collect(a),
        Command::Check(a) => cmd_check(a),
        Command::Design(a) => cmd_design(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn load_config(common: &Common, gamma: Option<f64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if gamma.is_some() {
        cfg.design.gamma = gamma;
    }
    Ok(cfg)
}

fn node_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("node{}", i + 1))
}

fn load_datasets(root: &Path, count: Option<usize>) -> Result<Vec<NodeDataset>> {
    let mut out = Vec::new();
    loop {
        let dir = node_dir(root, out.len());
        let wanted = count.is_some_and(|c| out.len() < c);
        if !wanted && (count.is_some() || !dir.exists()) {
            break;
        }
        out.push(NodeDataset::load(&dir)?.0);
    }
    if out.is_empty() {
        return Err(DuioError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no node datasets under {}", root.display()),
        )));
    }
    Ok(out)
}

fn cmd_collect(a: CollectArgs) -> CliResult {
    let cfg = load_config(&a.common, None)?;
    let scn = cfg.resolve()?;
    let out = &a.common.out;
    let data = scn.collect_datasets(cfg.seed)?;
    let policy = scn.design_options().rank_policy();
    for (i, ds) in data.iter().enumerate() {
        ds.save(&node_dir(out, i), i + 1)?;
        let rep = check_rank_assumption(ds, policy)?;
        println!(
            "node {}: {} samples, rank [U; W; X] = {}/{} {}",
            i + 1,
            ds.n_samples(),
            rep.rank.rank,
            rep.required,
            if rep.holds { "ok" } else { "DEFICIENT" }
        );
    }
    cfg.write_resolved(out)?;
    Ok(())
}

fn cmd_check(a: CheckArgs) -> CliResult {
    let cfg = match &a.config {
        Some(p) => Some(ExperimentConfig::load(p)?),
        None => None,
    };
    let opts = cfg.as_ref().map(|c| c.design_options()).unwrap_or_default();
    let data = load_datasets(&a.data, None)?;
    let mut reports: Vec<DataDesignReport> = Vec::with_capacity(data.len());
    for (i, ds) in data.iter().enumerate() {
        match analyze_node(&ds.view(), &opts) {
            Ok(r) => {
                if a.explain {
                    print!("{}", r.explain(i + 1));
                }
                reports.push(r);
            }
            Err(e @ (DuioError::Consistency { .. } | DuioError::Rank(_))) => {
                return Err(Failure::new(EXIT_CHECK, format!("node {}: {e}", i + 1)));
            }
            Err(e) => return Err(e.into()),
        }
    }
    for (i, r) in reports.iter().enumerate() {
        if !r.solvability.holds {
            return Err(Failure::new(
                EXIT_CHECK,
                format!(
                    "node {}: rank condition fails (rank [U; Ydot; X] = {}, rank [U; X; Xdot] = {})",
                    i + 1,
                    r.solvability.lhs.rank,
                    r.solvability.rhs.rank
                ),
            ));
        }
        if r.rank_ty != r.unknown_rank {
            return Err(Failure::new(
                EXIT_CHECK,
                format!(
                    "node {}: rank(T_y) = {} but the data show {} unknown-input directions",
                    i + 1,
                    r.rank_ty,
                    r.unknown_rank
                ),
            ));
        }
        println!("node {}: rank condition ok", i + 1);
    }
    let Some(leader) = reports.iter().position(DataDesignReport::detectable) else {
        return Err(Failure::new(EXIT_CHECK, "detectability fails at every node"));
    };
    println!("node {}: detectability ok (leader)", leader + 1);
    if let Some(cfg) = &cfg {
        let scn = cfg.resolve()?;
        if scn.graph.num_nodes() != reports.len() {
            return Err(Failure::new(
                EXIT_CHECK,
                format!("{} datasets for a {}-node graph", reports.len(), scn.graph.num_nodes()),
            ));
        }
        if let Err(e) = build_laplacian_removing(&scn.graph, leader) {
            return Err(Failure::new(EXIT_CHECK, format!("communication graph: {e}")));
        }
        println!("communication graph connected");
    }
    println!("all conditions hold");
    Ok(())
}

fn design_for(
    scn: &Scenario,
    method: DesignMethod,
    data_dir: Option<&Path>,
    explain: bool,
) -> Result<DuioGains> {
    let data = match (method, data_dir) {
        (DesignMethod::Model, _) => None,
        (_, Some(dir)) => Some(load_datasets(dir, Some(scn.model.num_nodes()))?),
        (_, None) => Some(scn.collect_datasets(scn.config.seed)?),
    };
    if explain && method == DesignMethod::Data {
        if let Some(d) = &data {
            for (i, r) in analyze_all(d, &scn.design_options())?.iter().enumerate() {
                print!("{}", r.explain(i + 1));
            }
        }
    }
    scn.design(method, data.as_deref())
}

fn cmd_design(a: DesignArgs) -> CliResult {
    let cfg = load_config(&a.common, a.gamma)?;
    let scn = cfg.resolve()?;
    let method = DesignMethod::from(a.method);
    let gains = design_for(&scn, method, a.data.as_deref(), a.explain)?;
    let (_, abscissa) = error_dynamics_matrix(&gains, &scn.graph)?;
    let decoupling = verify_decoupling(&scn.model, &gains)?;
    let worst = decoupling.iter().map(|r| r.max()).fold(0.0, f64::max);
    println!(
        "{}: gamma = {:.6} (bound {:.6}), leader node {}, spectral abscissa {:.6}, max decoupling residual {:.3e}",
        method_label(method),
        gains.gamma,
        gains.gamma_bound,
        gains.leader + 1,
        abscissa,
        worst
    );
    let artifact = DesignArtifact {
        gains,
        verification: Verification {
            spectral_abscissa: abscissa,
            decoupling,
        },
    };
    std::fs::create_dir_all(&a.common.out).map_err(DuioError::from)?;
    write_json(&a.common.out.join("gains.json"), &artifact)?;
    cfg.write_resolved(&a.common.out)?;
    Ok(())
}

fn cmd_run(a: RunArgs) -> CliResult {
    let cfg = load_config(&a.common, a.gamma)?;
    let scn = cfg.resolve()?;
    let gains = match &a.gains {
        Some(p) => read_json::<DesignArtifact>(p)?.gains,
        None => design_for(&scn, a.method.into(), None, false)?,
    };
    let setup = scn.online(cfg.seed)?;
    let res = run(
        &scn.model,
        &scn.graph,
        &gains,
        &setup.x0,
        setup.z0.as_deref(),
        &setup.signals,
        cfg.run.horizon,
        cfg.run.dt,
    )?;
    let metrics = compute_mse_mae(&res)?;
    let (_, abscissa) = error_dynamics_matrix(&gains, &scn.graph)?;
    let summary = RunSummary {
        horizon: cfg.run.horizon,
        dt: cfg.run.dt,
        samples: res.len(),
        final_error_norms: res.final_error_norms(),
        final_spread: res.final_spread(),
        spectral_abscissa: abscissa,
        mse: metrics.mse,
        mae: metrics.mae,
    };
    res.write(&a.common.out, &summary)?;
    cfg.write_resolved(&a.common.out)?;
    let worst = summary.final_error_norms.iter().copied().fold(0.0, f64::max);
    println!(
        "t = {}: max error norm {:.3e}, consensus spread {:.3e}",
        cfg.run.horizon, worst, summary.final_spread
    );
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> CliResult {
    let mut cfg = load_config(&a.common, a.gamma)?;
    if let Some(k) = a.experiments {
        cfg.compare.experiments = k;
    }
    let scn = cfg.resolve()?;
    let summary = monte_carlo_compare(&scn, cfg.compare.experiments, cfg.seed)?;
    summary.write(&a.common.out)?;
    cfg.write_resolved(&a.common.out)?;
    print!("{}", summary.table_markdown());
    Ok(())
}

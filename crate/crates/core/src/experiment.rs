//! Experiment configuration and the seeded pipeline shared by the CLI and
//! the Monte Carlo harness.
//!
//! Configs are TOML. Matrices are row-major nested arrays, node labels in
//! edge lists are 1-based. Unknown keys are rejected.

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{collect, Excitation, InitialState, NodeDataset};
use crate::design_data::{analyze_node, build_data_driven_gains, DataDesignReport};
use crate::design_model::{build_model_based_gains, DesignMethod, DesignOptions, DuioGains};
use crate::error::{DuioError, Result};
use crate::io::mat_rows::from_rows;
use crate::linalg::{Mat, PbhOptions, Vector};
use crate::metrics::build_identified_gains;
use crate::network::SensorGraph;
use crate::plant::{two_mass_spring, DerivativeMode, NodeSpec, PlantModel, PlantSignals};
use crate::signal::SignalGenerator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub plant: PlantConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub compare: CompareConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    TwoMassSpring,
}

/// Either a preset or explicit matrices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    /// Disturbance input matrix.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub c: Vec<Vec<f64>>,
    /// Zero-based columns of `B` this node measures.
    pub known_inputs: Vec<usize>,
    pub b_p: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    #[default]
    Ring,
    Path,
    Complete,
    Star,
    Edges,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub kind: GraphKind,
    /// `[from, to, weight]` with 1-based node labels; used when `kind = "edges"`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub samples: usize,
    pub sample_interval: f64,
    pub dt: f64,
    pub amplitude: f64,
    pub initial_scale: f64,
    pub segments: usize,
    pub jitter: bool,
    pub derivatives: DerivativeMode,
    pub measurement_noise: f64,
    pub max_retries: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        let e = Excitation::default();
        Self {
            samples: 50,
            sample_interval: e.sample_interval,
            dt: e.dt,
            amplitude: e.amplitude,
            initial_scale: 1.0,
            segments: e.segments,
            jitter: e.jitter,
            derivatives: e.derivatives,
            measurement_noise: e.measurement_noise,
            max_retries: e.max_retries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub decay: f64,
    pub gamma_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub rank_multiplier: f64,
    pub pbh_margin: f64,
    pub pbh_rank_tol: f64,
    pub hurwitz_tol: f64,
    pub residual_rel_tol: f64,
    pub pencil_points: usize,
    /// Grants the identification baseline the true `B_p` of every node.
    pub id_grant: bool,
}

impl Default for DesignConfig {
    fn default() -> Self {
        let o = DesignOptions::default();
        Self {
            decay: o.decay,
            gamma_margin: o.gamma_margin,
            gamma: o.gamma_override,
            rank_multiplier: o.rank_multiplier,
            pbh_margin: o.pbh.margin,
            pbh_rank_tol: o.pbh.rank_tol,
            hurwitz_tol: o.hurwitz_tol,
            residual_rel_tol: o.residual_rel_tol,
            pencil_points: o.pencil_points,
            id_grant: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: f64,
    pub dt: f64,
    pub x0: InitialState,
    /// Observer initial states, one row per node; all zero when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z0: Option<Vec<Vec<f64>>>,
    /// Disturbance on (preset: uniform in `[-0.1, 0.1]`, held for `disturbance_hold`).
    pub disturbance: bool,
    pub disturbance_hold: f64,
    /// Preset only: switches the unknown input on.
    pub unknown_input: bool,
    /// Preset only: initial value of the known input; drawn from `[0, 1]` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub known_input_initial: Option<f64>,
    /// Explicit input signals; preset defaults or zero when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<SignalGenerator>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disturbances: Option<Vec<SignalGenerator>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizon: 40.0,
            dt: 1e-3,
            x0: InitialState::Random { scale: 1.0 },
            z0: None,
            disturbance: true,
            disturbance_hold: 0.1,
            unknown_input: true,
            known_input_initial: None,
            inputs: None,
            disturbances: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub experiments: usize,
    pub methods: Vec<DesignMethod>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            experiments: 100,
            methods: vec![DesignMethod::Model, DesignMethod::Data, DesignMethod::Identified],
        }
    }
}

impl ExperimentConfig {
    /// The benchmark with every default spelled out.
    pub fn benchmark() -> Self {
        Self {
            seed: 0,
            plant: PlantConfig {
                preset: Some(Preset::TwoMassSpring),
                ..Default::default()
            },
            graph: GraphConfig::default(),
            data: DataConfig::default(),
            design: DesignConfig {
                id_grant: true,
                ..Default::default()
            },
            run: RunConfig::default(),
            compare: CompareConfig::default(),
        }
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| DuioError::Parse {
            path: origin.to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| DuioError::Config(format!("serialize config: {e}")))
    }

    /// Writes the fully expanded config as `config.resolved.toml`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.resolved.toml"), self.to_toml()?)?;
        Ok(())
    }

    pub fn design_options(&self) -> DesignOptions {
        let d = &self.design;
        DesignOptions {
            decay: d.decay,
            gamma_margin: d.gamma_margin,
            gamma_override: d.gamma,
            rank_multiplier: d.rank_multiplier,
            pbh: PbhOptions {
                margin: d.pbh_margin,
                rank_tol: d.pbh_rank_tol,
            },
            hurwitz_tol: d.hurwitz_tol,
            residual_rel_tol: d.residual_rel_tol,
            pencil_points: d.pencil_points,
        }
    }

    pub fn excitation(&self) -> Excitation {
        let d = &self.data;
        Excitation {
            signals: None,
            amplitude: d.amplitude,
            initial_state: InitialState::Random {
                scale: d.initial_scale,
            },
            segments: d.segments,
            sample_interval: d.sample_interval,
            dt: d.dt,
            jitter: d.jitter,
            derivatives: d.derivatives,
            measurement_noise: d.measurement_noise,
            max_retries: d.max_retries,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(DuioError::Config(what.to_string()));
        if !(self.run.dt > 0.0 && self.run.horizon >= self.run.dt) {
            return bad("run: need dt > 0 and horizon >= dt");
        }
        if !(self.data.dt > 0.0 && self.data.sample_interval >= self.data.dt) {
            return bad("data: need dt > 0 and sample_interval >= dt");
        }
        if self.data.segments == 0 {
            return bad("data: segments must be at least 1");
        }
        if !(self.design.decay > 0.0) {
            return bad("design: decay must be positive");
        }
        if self.design.gamma.is_some_and(|g| !(g > 0.0)) {
            return bad("design: gamma must be positive");
        }
        if self.compare.experiments == 0 {
            return bad("compare: experiments must be at least 1");
        }
        if !(self.run.disturbance_hold > 0.0) {
            return bad("run: disturbance_hold must be positive");
        }
        Ok(())
    }

    /// Builds plant and graph.
    pub fn resolve(&self) -> Result<Scenario> {
        self.validate()?;
        let model = self.build_plant()?;
        let m = model.num_nodes();
        let graph = match self.graph.kind {
            GraphKind::Ring => SensorGraph::ring(m)?,
            GraphKind::Path => SensorGraph::path(m)?,
            GraphKind::Complete => SensorGraph::complete(m)?,
            GraphKind::Star => SensorGraph::star(m)?,
            GraphKind::Edges => {
                let mut edges = Vec::with_capacity(self.graph.edges.len());
                for &(a, b, w) in &self.graph.edges {
                    if a == 0 || b == 0 {
                        return Err(DuioError::Config("graph: node labels start at 1".into()));
                    }
                    edges.push((a - 1, b - 1, w));
                }
                SensorGraph::from_edges(m, &edges)?
            }
        };
        let grants = self
            .design
            .id_grant
            .then(|| model.nodes().iter().map(|n| n.b_p.clone()).collect());
        Ok(Scenario {
            config: self.clone(),
            model,
            graph,
            grants,
        })
    }

    fn build_plant(&self) -> Result<PlantModel> {
        let p = &self.plant;
        let explicit = p.a.is_some() || p.b.is_some() || p.e.is_some() || !p.nodes.is_empty();
        match (p.preset, explicit) {
            (Some(Preset::TwoMassSpring), false) => Ok(two_mass_spring::model()),
            (Some(_), true) => Err(DuioError::Config(
                "plant: give either a preset or matrices, not both".into(),
            )),
            (None, _) => {
                let a = matrix("plant.a", p.a.as_ref(), None)?;
                let n = a.nrows();
                let b = matrix("plant.b", p.b.as_ref(), Some(0))?;
                let e = match &p.e {
                    Some(rows) => matrix("plant.e", Some(rows), Some(0))?,
                    None => Mat::zeros(n, 0),
                };
                if p.nodes.is_empty() {
                    return Err(DuioError::Config("plant: at least one node required".into()));
                }
                let nodes = p
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(i, nc)| {
                        Ok(NodeSpec {
                            c: matrix(&format!("plant.nodes[{i}].c"), Some(&nc.c), Some(n))?,
                            known_input_indices: nc.known_inputs.clone(),
                            b_p: matrix(&format!("plant.nodes[{i}].b_p"), Some(&nc.b_p), Some(0))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                PlantModel::new(a, b, e, nodes)
            }
        }
    }
}

fn matrix(name: &str, rows: Option<&Vec<Vec<f64>>>, cols_hint: Option<usize>) -> Result<Mat> {
    let rows = rows.ok_or_else(|| DuioError::Config(format!("{name} is missing")))?;
    from_rows(rows, cols_hint).map_err(|e| DuioError::Config(format!("{name}: {e}")))
}

/// Independent seed for `stream` derived from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const STREAM_DATA: u64 = 1 << 32;
const STREAM_ONLINE: u64 = 2 << 32;

/// Online conditions of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSetup {
    pub x0: Vector,
    pub z0: Option<Vec<Vector>>,
    pub signals: PlantSignals,
}

/// A resolved config.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ExperimentConfig,
    pub model: PlantModel,
    pub graph: SensorGraph,
    /// Per-node `B_p` granted to the identification baseline.
    pub grants: Option<Vec<Mat>>,
}

impl Scenario {
    pub fn design_options(&self) -> DesignOptions {
        self.config.design_options()
    }

    /// Offline records of every node; node `i` uses its own seed stream.
    pub fn collect_datasets(&self, seed: u64) -> Result<Vec<NodeDataset>> {
        let exc = self.config.excitation();
        let policy = self.design_options().rank_policy();
        (0..self.model.num_nodes())
            .map(|i| {
                let s = derive_seed(seed, STREAM_DATA + i as u64);
                collect(&self.model, i, self.config.data.samples, &exc, s, policy)
            })
            .collect()
    }

    /// Designs the gains of `method`. `data` is needed by the data and
    /// identification routes.
    pub fn design(&self, method: DesignMethod, data: Option<&[NodeDataset]>) -> Result<DuioGains> {
        let opts = self.design_options();
        let need = || {
            data.ok_or_else(|| DuioError::Precondition(format!("{method:?} design needs offline data")))
        };
        match method {
            DesignMethod::Model => build_model_based_gains(&self.model, &self.graph, &opts),
            DesignMethod::Data => {
                let reports = analyze_all(need()?, &opts)?;
                build_data_driven_gains(&reports, &self.graph, &opts)
            }
            DesignMethod::Identified => {
                let grants = self.grants.as_ref().ok_or_else(|| {
                    DuioError::Design(
                        "identification baseline needs the unknown-input coupling; set design.id_grant".into(),
                    )
                })?;
                let views: Vec<_> = need()?.iter().map(|d| d.view()).collect();
                build_identified_gains(&views, grants, &self.graph, &opts)
            }
        }
    }

    /// Initial conditions and signals of the online run for `seed`.
    pub fn online(&self, seed: u64) -> Result<OnlineSetup> {
        let run = &self.config.run;
        let n = self.model.n_x();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_ONLINE);
        let x0 = match &run.x0 {
            InitialState::Random { scale } => {
                Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0) * scale)
            }
            InitialState::Fixed { value } => {
                if value.len() != n {
                    return Err(DuioError::Config(format!(
                        "run.x0 has {} entries, plant has {n} states",
                        value.len()
                    )));
                }
                Vector::from_column_slice(value)
            }
        };
        let known_initial = match run.known_input_initial {
            Some(v) => v,
            None => rng.random_range(0.0..=1.0),
        };
        let disturbance_seed = rng.next_u64();

        let preset = self.config.plant.preset.is_some();
        let mut signals = if preset {
            two_mass_spring::signals(
                known_initial,
                run.disturbance.then_some((disturbance_seed, run.disturbance_hold)),
            )
        } else {
            PlantSignals::zero(&self.model)
        };
        if preset && !run.unknown_input {
            signals.inputs[1] = SignalGenerator::Zero;
        }
        if let Some(inputs) = &run.inputs {
            signals.inputs = inputs.clone();
        }
        if let Some(d) = &run.disturbances {
            signals.disturbances = d.clone();
        }
        if !run.disturbance {
            signals.disturbances = vec![SignalGenerator::Zero; self.model.n_d()];
        }
        if signals.inputs.len() != self.model.n_u() || signals.disturbances.len() != self.model.n_d() {
            return Err(DuioError::Config(format!(
                "run signals: need {} inputs and {} disturbances",
                self.model.n_u(),
                self.model.n_d()
            )));
        }

        let z0 = match &run.z0 {
            None => None,
            Some(rows) => {
                if rows.len() != self.model.num_nodes() || rows.iter().any(|r| r.len() != n) {
                    return Err(DuioError::Config(format!(
                        "run.z0 needs {} rows of length {n}",
                        self.model.num_nodes()
                    )));
                }
                Some(rows.iter().map(|r| Vector::from_column_slice(r)).collect())
            }
        };
        Ok(OnlineSetup { x0, z0, signals })
    }
}

pub fn analyze_all(data: &[NodeDataset], opts: &DesignOptions) -> Result<Vec<DataDesignReport>> {
    data.iter()
        .enumerate()
        .map(|(i, d)| {
            analyze_node(&d.view(), opts).map_err(|e| match e {
                DuioError::Consistency { .. } | DuioError::Rank(_) => {
                    DuioError::Design(format!("node {}: {e}", i + 1))
                }
                other => other,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_round_trips_through_toml() {
        let cfg = ExperimentConfig::benchmark();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text, "mem").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn minimal_config_expands_defaults() {
        let cfg = ExperimentConfig::from_toml("[plant]\npreset = \"two-mass-spring\"\n", "mem").unwrap();
        assert_eq!(cfg.data.samples, 50);
        assert_eq!(cfg.run.horizon, 40.0);
        assert!(!cfg.design.id_grant);
        let scn = cfg.resolve().unwrap();
        assert_eq!(scn.model.num_nodes(), 5);
        assert!(scn.grants.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml(
            "[plant]\npreset = \"two-mass-spring\"\n[run]\nhorizn = 3.0\n",
            "mem",
        );
        assert!(matches!(err, Err(DuioError::Parse { .. })));
    }

    #[test]
    fn explicit_plant_and_edges() {
        let text = r#"
            [plant]
            a = [[-1.0, 0.0], [0.0, -2.0]]
            b = [[1.0], [0.0]]
            [[plant.nodes]]
            c = [[1.0, 0.0]]
            known_inputs = [0]
            b_p = [[], []]
            [[plant.nodes]]
            c = [[0.0, 1.0]]
            known_inputs = [0]
            b_p = [[], []]
            [graph]
            kind = "edges"
            edges = [[1, 2, 0.5]]
        "#;
        let scn = ExperimentConfig::from_toml(text, "mem").unwrap().resolve().unwrap();
        assert_eq!(scn.model.n_d(), 0);
        assert_eq!(scn.graph.weight(0, 1), 0.5);
        let setup = scn.online(1).unwrap();
        assert_eq!(setup.signals.inputs.len(), 1);
    }

    #[test]
    fn preset_and_matrices_conflict() {
        let text = "[plant]\npreset = \"two-mass-spring\"\na = [[1.0]]\n";
        let cfg = ExperimentConfig::from_toml(text, "mem").unwrap();
        assert!(matches!(cfg.resolve(), Err(DuioError::Config(_))));
    }

    #[test]
    fn online_setup_is_seeded() {
        let scn = ExperimentConfig::benchmark().resolve().unwrap();
        assert_eq!(scn.online(4).unwrap(), scn.online(4).unwrap());
        assert_ne!(scn.online(4).unwrap().x0, scn.online(5).unwrap().x0);
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }

    #[test]
    fn identification_needs_grant() {
        let mut cfg = ExperimentConfig::benchmark();
        cfg.design.id_grant = false;
        let scn = cfg.resolve().unwrap();
        let data = scn.collect_datasets(3).unwrap();
        assert!(matches!(
            scn.design(DesignMethod::Identified, Some(&data)),
            Err(DuioError::Design(_))
        ));
    }
}

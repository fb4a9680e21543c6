//! Data-driven DUIO design from offline records only.
//!
//! Works exclusively on [`DatasetView`]s, so the unknown-input validation
//! record of a simulated dataset is out of reach by construction.
//!
//! With `S = [U; Ydot; X]`, every solution `T = [T_u T_y T_x]` of
//! `Xdot = T S` plays the role of `((I - H C) B_m, H, (I - H C) A)` for
//! some admissible `H`. The representative returned by [`solve_data_equation`]
//! is the one with minimum-norm `T_y`, which on exact data is the
//! particular solution `H = B_p (C B_p)^+` of the model-based route.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::DatasetView;
use crate::design_model::{
    assemble, verify_hurwitz, DesignMethod, DesignOptions, DuioGains, NodeBlocks,
};
use crate::error::{DuioError, Result};
use crate::io::mat_rows;
use crate::linalg::{detectability, vstack, CMat, DetectabilityReport, Mat, RankPolicy, RankReport};
use crate::network::{build_laplacian_removing, SensorGraph};

const PENCIL_SEED: u64 = 0x5EED_0017;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvabilityReport {
    pub holds: bool,
    /// Ranks of `[U; Ydot; X]` and `[U; X; Xdot]`.
    pub lhs: RankReport,
    pub rhs: RankReport,
}

/// `rank [U; Ydot; X] == rank [U; X; Xdot]`.
pub fn test_data_solvability(ds: &DatasetView<'_>, policy: RankPolicy) -> Result<SolvabilityReport> {
    ds.check_dimensions()?;
    let lhs = policy.rank_report(&vstack(&[ds.u, ds.ydot, ds.x]));
    let rhs = policy.rank_report(&vstack(&[ds.u, ds.x, ds.xdot]));
    Ok(SolvabilityReport {
        holds: lhs.rank == rhs.rank,
        lhs,
        rhs,
    })
}

/// Number of independent unknown-input directions seen in the data.
pub fn infer_unknown_rank(ds: &DatasetView<'_>, policy: RankPolicy) -> usize {
    policy
        .rank(&vstack(&[ds.u, ds.x, ds.xdot]))
        .saturating_sub(ds.n_m() + ds.n_x())
}

/// `C = Y X^+`; requires `X` of full row rank.
pub fn recover_c(ds: &DatasetView<'_>, policy: RankPolicy) -> Result<Mat> {
    let rank = policy.rank(ds.x);
    if rank < ds.n_x() {
        return Err(DuioError::Rank(format!(
            "state record X has rank {rank} < {}",
            ds.n_x()
        )));
    }
    Ok(ds.y * policy.pinv(ds.x))
}

/// Solution family of `Xdot = [T_u T_y T_x] [U; Ydot; X]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataEquationSolution {
    pub t_u: Mat,
    pub t_y: Mat,
    pub t_x: Mat,
    /// `||Xdot - T S||_F`.
    pub residual: f64,
    pub rank_ty: usize,
    /// Minimum-Frobenius-norm solution `Xdot S^+`.
    pub min_norm: Mat,
    /// `I - S S^+`; `min_norm + Z * null_projector` solves the equation for any `Z`.
    pub null_projector: Mat,
    n_m: usize,
    n_y: usize,
}

impl DataEquationSolution {
    pub fn stacked(&self) -> Mat {
        crate::linalg::hstack(&[&self.t_u, &self.t_y, &self.t_x])
    }

    /// `Xdot S^+ + z (I - S S^+)`, split into `(T_u, T_y, T_x)`.
    pub fn family_member(&self, z: &Mat) -> Result<(Mat, Mat, Mat)> {
        if z.shape() != self.min_norm.shape() {
            return Err(DuioError::Dimension(format!(
                "family parameter must be {}x{}",
                self.min_norm.nrows(),
                self.min_norm.ncols()
            )));
        }
        Ok(self.split(&(&self.min_norm + z * &self.null_projector)))
    }

    fn split(&self, t: &Mat) -> (Mat, Mat, Mat) {
        let n = t.nrows();
        let nx = t.ncols() - self.n_m - self.n_y;
        (
            t.columns(0, self.n_m).into_owned(),
            t.columns(self.n_m, self.n_y).into_owned(),
            t.view((0, self.n_m + self.n_y), (n, nx)).into_owned(),
        )
    }
}

/// Solves the data equation and returns the minimum-norm-`T_y` representative.
pub fn solve_data_equation(ds: &DatasetView<'_>, opts: &DesignOptions) -> Result<DataEquationSolution> {
    ds.check_dimensions()?;
    let policy = opts.rank_policy();
    let s = vstack(&[ds.u, ds.ydot, ds.x]);
    let s_pinv = policy.pinv(&s);
    let min_norm = ds.xdot * &s_pinv;
    let rows = s.nrows();
    let null_projector = Mat::identity(rows, rows) - &s * &s_pinv;

    // Remove from T_y its component along the output part of the left null space of S.
    let null = policy.left_null_space(&s);
    let (n_m, n_y) = (ds.n_m(), ds.n_y());
    let null_y = null.rows(n_m, n_y).into_owned();
    let t0_y = min_norm.columns(n_m, n_y).into_owned();
    let z = -(&t0_y * &null_y) * policy.pinv(&(null_y.transpose() * &null_y));
    let t = &min_norm + z * null.transpose();

    let residual = (ds.xdot - &t * &s).norm();
    let tolerance = opts.residual_rel_tol * ds.xdot.norm().max(f64::MIN_POSITIVE);
    if residual > tolerance {
        return Err(DuioError::Consistency {
            residual,
            tolerance,
        });
    }
    let mut sol = DataEquationSolution {
        t_u: Mat::zeros(0, 0),
        t_y: Mat::zeros(0, 0),
        t_x: Mat::zeros(0, 0),
        residual,
        rank_ty: 0,
        min_norm,
        null_projector,
        n_m,
        n_y,
    };
    let (t_u, t_y, t_x) = sol.split(&t);
    sol.rank_ty = policy.rank_relative(&t_y, t.norm());
    sol.t_u = t_u;
    sol.t_y = t_y;
    sol.t_x = t_x;
    Ok(sol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDetectabilityReport {
    pub holds: bool,
    /// PBH test of the recovered pair `(T_x, C)`.
    pub pbh: DetectabilityReport,
    /// `(re, im, rank)` of `[sX - Xdot; U; Y]` at the random points.
    pub pencil: Vec<(f64, f64, usize)>,
    pub pencil_required: usize,
    pub pencil_ok: bool,
}

/// Detectability condition at one node, evaluated from data.
///
/// Decided by the PBH test of the recovered `(T_x, C)` at the eigenvalues
/// of `T_x` in the closed right half-plane, cross-checked by the rank of
/// the data pencil at random right-half-plane points.
pub fn test_data_detectability(ds: &DatasetView<'_>, opts: &DesignOptions) -> Result<DataDetectabilityReport> {
    let policy = opts.rank_policy();
    if !test_data_solvability(ds, policy)?.holds {
        return Err(DuioError::Precondition(
            "rank condition on [U; Ydot; X] fails, detectability test undefined".into(),
        ));
    }
    let sol = solve_data_equation(ds, opts)?;
    let c = recover_c(ds, policy)?;
    let pbh = detectability(&sol.t_x, &c, opts.pbh);

    let required = ds.n_x() + ds.n_m() + infer_unknown_rank(ds, policy);
    let mut rng = ChaCha8Rng::seed_from_u64(PENCIL_SEED);
    let mut pencil = Vec::with_capacity(opts.pencil_points);
    for _ in 0..opts.pencil_points {
        let s = Complex::new(rng.random_range(0.0..10.0), rng.random_range(-10.0..10.0));
        pencil.push((s.re, s.im, pencil_rank(ds, s, policy)));
    }
    let pencil_ok = pencil.iter().all(|&(_, _, r)| r == required);
    Ok(DataDetectabilityReport {
        holds: pbh.detectable && pencil_ok,
        pbh,
        pencil,
        pencil_required: required,
        pencil_ok,
    })
}

fn pencil_rank(ds: &DatasetView<'_>, s: Complex<f64>, policy: RankPolicy) -> usize {
    let n = ds.n_samples();
    let rows = ds.n_x() + ds.n_m() + ds.n_y();
    if n == 0 {
        return 0;
    }
    let mut p = CMat::zeros(rows, n);
    for k in 0..n {
        for r in 0..ds.n_x() {
            p[(r, k)] = s * ds.x[(r, k)] - ds.xdot[(r, k)];
        }
        for r in 0..ds.n_m() {
            p[(ds.n_x() + r, k)] = Complex::new(ds.u[(r, k)], 0.0);
        }
        for r in 0..ds.n_y() {
            p[(ds.n_x() + ds.n_m() + r, k)] = Complex::new(ds.y[(r, k)], 0.0);
        }
    }
    let sv = p.svd(false, false).singular_values;
    let threshold = policy.threshold(rows, n, sv.max());
    sv.iter().filter(|&&v| v > threshold && v > 0.0).count()
}

/// Everything the data route learns about one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDesignReport {
    pub solvability: SolvabilityReport,
    /// Present when [`SolvabilityReport::holds`].
    pub detectability: Option<DataDetectabilityReport>,
    #[serde(with = "mat_rows")]
    pub t_u: Mat,
    #[serde(with = "mat_rows")]
    pub t_y: Mat,
    #[serde(with = "mat_rows")]
    pub t_x: Mat,
    pub rank_ty: usize,
    /// `rank [U; X; Xdot] - n_m - n_x`.
    pub unknown_rank: usize,
    #[serde(with = "mat_rows")]
    pub c_recovered: Mat,
    /// `||Y - C X||_F`.
    pub c_residual: f64,
    pub residual_data_equation: f64,
}

impl DataDesignReport {
    pub fn blocks(&self) -> NodeBlocks {
        NodeBlocks {
            t_u: self.t_u.clone(),
            t_y: self.t_y.clone(),
            t_x: self.t_x.clone(),
            c: self.c_recovered.clone(),
        }
    }

    pub fn detectable(&self) -> bool {
        self.detectability.as_ref().is_some_and(|r| r.holds)
    }

    /// Human-readable account of every rank test.
    pub fn explain(&self, node: usize) -> String {
        let sv = |r: &RankReport| {
            r.singular_values
                .iter()
                .map(|s| format!("{s:.3e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut out = format!("node {node}\n");
        out += &format!(
            "  rank [U; Ydot; X] = {} (threshold {:.2e}): {}\n",
            self.solvability.lhs.rank,
            self.solvability.lhs.threshold,
            sv(&self.solvability.lhs)
        );
        out += &format!(
            "  rank [U; X; Xdot] = {} (threshold {:.2e}): {}\n",
            self.solvability.rhs.rank,
            self.solvability.rhs.threshold,
            sv(&self.solvability.rhs)
        );
        out += &format!("  rank condition: {}\n", pass(self.solvability.holds));
        out += &format!(
            "  data equation residual {:.3e}, rank(T_y) = {} (unknown-input rank {})\n",
            self.residual_data_equation, self.rank_ty, self.unknown_rank
        );
        if let Some(e) = &self.detectability {
            for (re, im, m) in &e.pbh.tested {
                out += &format!("  PBH at {re:+.4e}{im:+.4e}i: sigma_min/sigma_max = {m:.3e}\n");
            }
            out += &format!(
                "  pencil rank at {} random points: required {}, {}\n",
                e.pencil.len(),
                e.pencil_required,
                pass(e.pencil_ok)
            );
            out += &format!("  detectability: {}\n", pass(e.holds));
        }
        out
    }
}

fn pass(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "FAIL"
    }
}

/// Runs every per-node test and solve; fails only on malformed or
/// inconsistent data, never on a negative test outcome.
pub fn analyze_node(ds: &DatasetView<'_>, opts: &DesignOptions) -> Result<DataDesignReport> {
    let policy = opts.rank_policy();
    let solvability = test_data_solvability(ds, policy)?;
    let c_recovered = recover_c(ds, policy)?;
    let c_residual = (ds.y - &c_recovered * ds.x).norm();
    let sol = solve_data_equation(ds, opts)?;
    let detectability = if solvability.holds {
        Some(test_data_detectability(ds, opts)?)
    } else {
        None
    };
    Ok(DataDesignReport {
        solvability,
        detectability,
        t_u: sol.t_u,
        t_y: sol.t_y,
        t_x: sol.t_x,
        rank_ty: sol.rank_ty,
        unknown_rank: infer_unknown_rank(ds, policy),
        c_recovered,
        c_residual,
        residual_data_equation: sol.residual,
    })
}

/// Assembles the network gains from per-node reports.
pub fn build_data_driven_gains(
    reports: &[DataDesignReport],
    graph: &SensorGraph,
    opts: &DesignOptions,
) -> Result<DuioGains> {
    if reports.len() != graph.num_nodes() {
        return Err(DuioError::Dimension(format!(
            "{} node reports, graph has {} nodes",
            reports.len(),
            graph.num_nodes()
        )));
    }
    for (i, r) in reports.iter().enumerate() {
        if !r.solvability.holds {
            return Err(DuioError::Design(format!(
                "node {}: rank [U; Ydot; X] = {} differs from rank [U; X; Xdot] = {}",
                i + 1,
                r.solvability.lhs.rank,
                r.solvability.rhs.rank
            )));
        }
        if r.rank_ty != r.unknown_rank {
            return Err(DuioError::Design(format!(
                "node {}: rank(T_y) = {} but the data show {} unknown-input directions",
                i + 1,
                r.rank_ty,
                r.unknown_rank
            )));
        }
    }
    build_laplacian_removing(graph, 0)
        .map_err(|e| DuioError::Design(format!("communication graph: {e}")))?;
    let leader = reports
        .iter()
        .position(DataDesignReport::detectable)
        .ok_or_else(|| DuioError::Design("no node passes the data detectability test".into()))?;
    let blocks: Vec<NodeBlocks> = reports.iter().map(DataDesignReport::blocks).collect();
    let gains = assemble(DesignMethod::Data, &blocks, leader, graph, opts)?;
    verify_hurwitz(&gains, graph, opts, DuioError::Numerics)?;
    Ok(gains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{collect, Excitation, NodeDataset};
    use crate::design_model::{build_model_based_gains, decoupled_blocks};
    use crate::plant::{two_mass_spring, NodeSpec, PlantModel};

    fn bench_datasets(seed: u64) -> Vec<NodeDataset> {
        let model = two_mass_spring::model();
        (0..5)
            .map(|i| collect(&model, i, 50, &Excitation::default(), seed + i as u64, RankPolicy::default()).unwrap())
            .collect()
    }

    fn scalar(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn benchmark_rank_conditions_hold() {
        for ds in bench_datasets(1) {
            let r = test_data_solvability(&ds.view(), RankPolicy::default()).unwrap();
            assert!(r.holds);
            assert_eq!((r.lhs.rank, r.rhs.rank), (7, 7));
        }
    }

    #[test]
    fn no_unknown_input_keeps_ranks_equal() {
        let model = PlantModel::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]),
            Mat::from_column_slice(2, 1, &[0.0, 1.0]),
            Mat::zeros(2, 0),
            vec![NodeSpec {
                c: Mat::from_row_slice(1, 2, &[1.0, 0.0]),
                known_input_indices: vec![0],
                b_p: Mat::zeros(2, 0),
            }],
        )
        .unwrap();
        let ds = collect(&model, 0, 20, &Excitation::default(), 2, RankPolicy::default()).unwrap();
        let r = test_data_solvability(&ds.view(), RankPolicy::default()).unwrap();
        assert!(r.holds);
        assert_eq!(r.lhs.rank, 3);
    }

    #[test]
    fn output_blind_to_unknown_input_fails_rank_test() {
        let model = PlantModel::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.5]),
            Mat::from_column_slice(2, 1, &[1.0, 0.0]),
            Mat::zeros(2, 0),
            vec![NodeSpec {
                c: Mat::from_row_slice(1, 2, &[0.0, 1.0]),
                known_input_indices: vec![],
                b_p: Mat::from_column_slice(2, 1, &[1.0, 0.0]),
            }],
        )
        .unwrap();
        let ds = collect(&model, 0, 20, &Excitation::default(), 2, RankPolicy::default()).unwrap();
        let r = test_data_solvability(&ds.view(), RankPolicy::default()).unwrap();
        assert!(!r.holds);
        assert!(r.lhs.rank < r.rhs.rank);
        assert!(matches!(
            test_data_detectability(&ds.view(), &DesignOptions::default()),
            Err(DuioError::Precondition(_))
        ));
    }

    #[test]
    fn recovers_benchmark_output_map() {
        let ds = bench_datasets(3);
        let c = recover_c(&ds[2].view(), RankPolicy::default()).unwrap();
        assert!((c - two_mass_spring::c(2)).abs().max() < 1e-9);
        let c_dup = recover_c(&ds[2].duplicated().view(), RankPolicy::default()).unwrap();
        assert!((c_dup - two_mass_spring::c(2)).abs().max() < 1e-9);
    }

    #[test]
    fn recover_c_identity_data() {
        let x = Mat::identity(3, 3);
        let y = Mat::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let z = Mat::zeros(0, 3);
        let view = DatasetView {
            u: &z,
            y: &y,
            ydot: &y,
            x: &x,
            xdot: &x,
        };
        assert!((recover_c(&view, RankPolicy::default()).unwrap() - &y).norm() < 1e-14);
        let x_def = Mat::from_row_slice(3, 3, &[1., 0., 0., 0., 1., 0., 1., 1., 0.]);
        let view = DatasetView { x: &x_def, xdot: &x_def, ..view };
        assert!(matches!(recover_c(&view, RankPolicy::default()), Err(DuioError::Rank(_))));
    }

    #[test]
    fn data_equation_matches_model_blocks() {
        let model = two_mass_spring::model();
        for (i, ds) in bench_datasets(4).iter().enumerate() {
            let sol = solve_data_equation(&ds.view(), &DesignOptions::default()).unwrap();
            let b = decoupled_blocks(&model, i, RankPolicy::default()).unwrap();
            assert!((&sol.t_x - &b.t_x).abs().max() < 1e-7, "node {i}");
            assert!((&sol.t_y - &b.t_y).abs().max() < 1e-7, "node {i}");
            assert!((&sol.t_u - &b.t_u).abs().max() < 1e-7, "node {i}");
            assert_eq!(sol.rank_ty, 2);
        }
    }

    #[test]
    fn family_members_solve_the_data_equation() {
        let ds = &bench_datasets(6)[0];
        let sol = solve_data_equation(&ds.view(), &DesignOptions::default()).unwrap();
        let s = vstack(&[&ds.u, &ds.ydot, &ds.x]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let z = Mat::from_fn(4, 9, |_, _| rng.random_range(-1.0..1.0));
            let (tu, ty, tx) = sol.family_member(&z).unwrap();
            let t = crate::linalg::hstack(&[&tu, &ty, &tx]);
            assert!((&ds.xdot - t * &s).norm() < 1e-8 * ds.xdot.norm());
        }
    }

    #[test]
    fn scalar_system_min_norm_solution() {
        // x' = a x + b u, y = x: S = [U; Ydot; X] has a structured null direction
        let (a, b) = (-0.7, 2.0);
        let model = PlantModel::new(
            scalar(a),
            scalar(b),
            Mat::zeros(1, 0),
            vec![NodeSpec {
                c: scalar(1.0),
                known_input_indices: vec![0],
                b_p: Mat::zeros(1, 0),
            }],
        )
        .unwrap();
        let ds = collect(&model, 0, 10, &Excitation::default(), 9, RankPolicy::default()).unwrap();
        let sol = solve_data_equation(&ds.view(), &DesignOptions::default()).unwrap();
        assert!(sol.residual < 1e-12);
        // brute force: T_y must vanish, leaving T_u = b and T_x = a
        assert!(sol.t_y.norm() < 1e-9);
        assert!((sol.t_u[(0, 0)] - b).abs() < 1e-9);
        assert!((sol.t_x[(0, 0)] - a).abs() < 1e-9);
    }

    #[test]
    fn zero_derivatives_give_zero_blocks() {
        let ds = &bench_datasets(7)[1];
        let zero = Mat::zeros(4, 50);
        let view = DatasetView { xdot: &zero, ..ds.view() };
        let sol = solve_data_equation(&view, &DesignOptions::default()).unwrap();
        assert_eq!(sol.residual, 0.0);
        assert!(sol.stacked().norm() == 0.0);
    }

    #[test]
    fn unobservable_unstable_scalar_fails_detectability() {
        let model = PlantModel::new(
            scalar(1.0),
            scalar(1.0),
            Mat::zeros(1, 0),
            vec![NodeSpec {
                c: scalar(0.0),
                known_input_indices: vec![0],
                b_p: Mat::zeros(1, 0),
            }],
        )
        .unwrap();
        let exc = Excitation {
            sample_interval: 0.02,
            ..Excitation::default()
        };
        let ds = collect(&model, 0, 10, &exc, 1, RankPolicy::default()).unwrap();
        let r = test_data_detectability(&ds.view(), &DesignOptions::default()).unwrap();
        assert!(!r.holds);
    }

    #[test]
    fn hurwitz_plant_without_output_is_detectable() {
        let model = PlantModel::new(
            Mat::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
            Mat::from_column_slice(2, 1, &[1.0, 1.0]),
            Mat::zeros(2, 0),
            vec![NodeSpec {
                c: Mat::zeros(1, 2),
                known_input_indices: vec![0],
                b_p: Mat::zeros(2, 0),
            }],
        )
        .unwrap();
        let ds = collect(&model, 0, 20, &Excitation::default(), 1, RankPolicy::default()).unwrap();
        let r = test_data_detectability(&ds.view(), &DesignOptions::default()).unwrap();
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn data_gains_match_model_gains() {
        let model = two_mass_spring::model();
        let graph = SensorGraph::ring(5).unwrap();
        let opts = DesignOptions::default();
        let reports: Vec<_> = bench_datasets(8)
            .iter()
            .map(|ds| analyze_node(&ds.view(), &opts).unwrap())
            .collect();
        let data = build_data_driven_gains(&reports, &graph, &opts).unwrap();
        let model_gains = build_model_based_gains(&model, &graph, &opts).unwrap();
        assert_eq!(data.leader, model_gains.leader);
        for (a, b) in data.nodes.iter().zip(&model_gains.nodes) {
            for (x, y) in [(&a.e, &b.e), (&a.f, &b.f), (&a.l, &b.l), (&a.h, &b.h), (&a.k, &b.k)] {
                assert!((x - y).abs().max() < 1e-6);
            }
        }
    }

    #[test]
    fn works_without_validation_record() {
        let graph = SensorGraph::ring(5).unwrap();
        let opts = DesignOptions {
            gamma_override: Some(5.0),
            ..DesignOptions::default()
        };
        let reports: Vec<_> = bench_datasets(9)
            .into_iter()
            .map(|ds| {
                let ds = ds.without_validation();
                analyze_node(&ds.view(), &opts).unwrap()
            })
            .collect();
        let gains = build_data_driven_gains(&reports, &graph, &opts).unwrap();
        assert_eq!(gains.gamma, 5.0);
    }

    #[test]
    fn inconsistent_data_is_rejected() {
        let ds = &bench_datasets(10)[0];
        let mut ydot = ds.ydot.clone();
        ydot.column_mut(3).fill(0.0);
        let view = DatasetView { ydot: &ydot, ..ds.view() };
        let r16 = test_data_solvability(&view, RankPolicy::default()).unwrap();
        let solved = solve_data_equation(&view, &DesignOptions::default());
        assert!(!r16.holds || matches!(solved, Err(DuioError::Consistency { .. })));
    }
}

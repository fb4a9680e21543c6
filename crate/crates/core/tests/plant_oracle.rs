use duio::linalg::{Mat, Vector};
use duio::plant::{simulate, two_mass_spring, DerivativeMode, PlantSignals};
use duio::signal::SignalGenerator;

const W: f64 = 1.3;
const PHASE: f64 = 0.4;
const AMP: f64 = 0.7;
const CONST_INPUT: f64 = -0.3;

fn signals() -> PlantSignals {
    PlantSignals {
        inputs: vec![
            SignalGenerator::sinusoid(AMP, W, PHASE),
            SignalGenerator::Constant { value: CONST_INPUT },
        ],
        disturbances: vec![SignalGenerator::Zero],
    }
}

/// Closed form via the matrix exponential of the plant augmented with an
/// oscillator `(cos, sin)` and a constant state.
fn exact(x0: &Vector, t: f64) -> Vector {
    let model = two_mass_spring::model();
    let a = two_mass_spring::a();
    let b = model_b(&model);
    let mut aug = Mat::zeros(7, 7);
    aug.view_mut((0, 0), (4, 4)).copy_from(&a);
    for r in 0..4 {
        aug[(r, 4)] = AMP * b[(r, 0)];
        aug[(r, 6)] = b[(r, 1)];
    }
    aug[(4, 5)] = -W;
    aug[(5, 4)] = W;
    let mut s0 = Vector::zeros(7);
    s0.rows_mut(0, 4).copy_from(x0);
    s0[4] = PHASE.cos();
    s0[5] = PHASE.sin();
    s0[6] = CONST_INPUT;
    let s = (aug * t).exp() * s0;
    s.rows(0, 4).into_owned()
}

fn model_b(model: &duio::plant::PlantModel) -> Mat {
    // recover B column by column from the derivative at x = 0
    let mut b = Mat::zeros(model.n_x(), model.n_u());
    for j in 0..model.n_u() {
        let mut u = Vector::zeros(model.n_u());
        u[j] = 1.0;
        b.set_column(j, &model.derivative(&Vector::zeros(model.n_x()), &u, &Vector::zeros(model.n_d())));
    }
    b
}

fn x0() -> Vector {
    Vector::from_column_slice(&[0.4, -0.2, 0.1, 0.3])
}

#[test]
fn rk4_matches_matrix_exponential() {
    let model = two_mass_spring::model();
    for &t in &[1.0, 5.0, 12.0] {
        let traj = simulate(&model, &x0(), &signals(), t, 1e-3, DerivativeMode::Exact).unwrap();
        let err = (traj.final_state() - exact(&x0(), t)).amax();
        assert!(err < 1e-6, "t = {t}: error {err:e}");
    }
}

#[test]
fn rk4_is_fourth_order() {
    let model = two_mass_spring::model();
    let t = 5.0;
    let truth = exact(&x0(), t);
    let err = |dt: f64| {
        let traj = simulate(&model, &x0(), &signals(), t, dt, DerivativeMode::Exact).unwrap();
        (traj.final_state() - &truth).amax()
    };
    let (coarse, fine) = (err(0.05), err(0.025));
    assert!(coarse / fine >= 12.0, "ratio {}", coarse / fine);
}

#[test]
fn exact_derivatives_match_the_rhs() {
    let model = two_mass_spring::model();
    let traj = simulate(&model, &x0(), &signals(), 2.0, 1e-2, DerivativeMode::Exact).unwrap();
    let b = model_b(&model);
    for k in [0, 50, 200] {
        let t = traj.times[k];
        let u = Vector::from_column_slice(&[AMP * (W * t + PHASE).cos(), CONST_INPUT]);
        let expected = two_mass_spring::a() * traj.states.column(k) + &b * u;
        let err = (traj.state_derivatives.column(k) - expected).amax();
        assert!(err < 1e-12, "k = {k}: {err:e}");
    }
}

#[test]
fn outputs_are_c_times_state() {
    let model = two_mass_spring::model();
    let traj = simulate(&model, &x0(), &signals(), 1.0, 1e-2, DerivativeMode::Exact).unwrap();
    for (i, y) in traj.node_outputs.iter().enumerate() {
        let err = (y - two_mass_spring::c(i) * &traj.states).amax();
        assert!(err < 1e-14);
    }
}

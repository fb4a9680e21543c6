use duio::design_model::{build_model_based_gains, DesignOptions};
use duio::linalg::{Mat, Vector};
use duio::network::SensorGraph;
use duio::observer::{error_dynamics_matrix, run};
use duio::plant::{two_mass_spring, NodeSpec, PlantModel};

fn single_node_plant() -> PlantModel {
    let b = duio::linalg::hstack(&[&two_mass_spring::b_known(), &Mat::from_element(4, 1, 1.0)]);
    PlantModel::new(
        two_mass_spring::a(),
        b,
        two_mass_spring::e_dist(),
        vec![NodeSpec {
            c: two_mass_spring::c(0),
            known_input_indices: vec![0],
            b_p: two_mass_spring::b_p(0),
        }],
    )
    .unwrap()
}

#[test]
fn single_node_matches_textbook_uio() {
    let model = single_node_plant();
    let graph = SensorGraph::from_adjacency(Mat::zeros(1, 1)).unwrap();
    let gains = build_model_based_gains(&model, &graph, &DesignOptions::default()).unwrap();

    // Independent construction of the unknown-input observer.
    let a = two_mass_spring::a();
    let c = two_mass_spring::c(0);
    let bp = two_mass_spring::b_p(0);
    let h = &bp * (&c * &bp).pseudo_inverse(1e-12).unwrap();
    let p = Mat::identity(4, 4) - &h * &c;
    let e = &p * &a - &gains.injection * &c;
    let f = &p * two_mass_spring::b_known();
    let l = &gains.injection + &e * &h;
    let g = &gains.nodes[0];
    assert!((&g.h - &h).amax() < 1e-9);
    assert!((&g.e - &e).amax() < 1e-9);
    assert!((&g.f - &f).amax() < 1e-9);
    assert!((&g.l - &l).amax() < 1e-9);

    // The estimation error obeys e' = E e whatever the inputs do.
    let signals = two_mass_spring::signals(0.6, Some((3, 0.1)));
    let x0 = Vector::from_column_slice(&[0.5, -0.5, 0.2, 0.1]);
    let res = run(&model, &graph, &gains, &x0, None, &signals, 3.0, 1e-3).unwrap();
    let e0 = res.states.column(0) - res.estimates[0].column(0);
    for k in [500, 1500, 3000] {
        let t = res.times[k];
        let expected = (&e * t).exp() * &e0;
        let got = res.states.column(k) - res.estimates[0].column(k);
        let err = (got - expected).amax();
        assert!(err < 1e-9, "t = {t}: {err:e}");
    }
}

#[test]
fn network_error_follows_matrix_exponential() {
    let model = two_mass_spring::model();
    let graph = SensorGraph::ring(5).unwrap();
    let opts = DesignOptions {
        gamma_override: Some(5.0),
        ..DesignOptions::default()
    };
    let gains = build_model_based_gains(&model, &graph, &opts).unwrap();
    let (acl, abscissa) = error_dynamics_matrix(&gains, &graph).unwrap();
    assert!(abscissa < -1.0);

    let signals = two_mass_spring::signals(0.9, Some((5, 0.1)));
    let x0 = Vector::from_column_slice(&[1.0, -0.3, 0.6, 0.2]);
    let res = run(&model, &graph, &gains, &x0, None, &signals, 8.0, 1e-3).unwrap();
    let e0 = res.stacked_errors().column(0).into_owned();
    let mut worst = 0.0f64;
    for k in (0..res.len()).step_by(400) {
        let expected = (&acl * res.times[k]).exp() * &e0;
        worst = worst.max((res.stacked_errors().column(k) - expected).amax());
    }
    assert!(worst < 1e-8 * e0.amax().max(1.0), "{worst:e}");
    // decay envelope
    let last = *res.error_norms.iter().map(|n| n.last().unwrap()).max_by(|a, b| a.total_cmp(b)).unwrap();
    assert!(last < e0.norm() * (abscissa * 8.0).exp() * 1e3);
}

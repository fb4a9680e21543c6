use duio::design_model::DesignMethod;
use duio::experiment::ExperimentConfig;
use duio::metrics::{compute_mse_mae, monte_carlo_compare, time_average};
use duio::observer::run;

#[test]
fn compare_is_deterministic_per_seed() {
    let scn = ExperimentConfig::benchmark().resolve().unwrap();
    let a = monte_carlo_compare(&scn, 2, 17).unwrap();
    let b = monte_carlo_compare(&scn, 2, 17).unwrap();
    assert_eq!(a.table_csv(), b.table_csv());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = monte_carlo_compare(&scn, 2, 18).unwrap();
    assert_ne!(a.experiment_seeds, c.experiment_seeds);
}

#[test]
fn datasets_are_reproducible() {
    let scn = ExperimentConfig::benchmark().resolve().unwrap();
    let a = scn.collect_datasets(5).unwrap();
    let b = scn.collect_datasets(5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0].x, a[1].x);
}

#[test]
fn time_average_refines() {
    let scn = ExperimentConfig::benchmark().resolve().unwrap();
    let gains = scn.design(DesignMethod::Model, None).unwrap();
    let online = scn.online(3).unwrap();
    let mse = |dt: f64| {
        let res = run(&scn.model, &scn.graph, &gains, &online.x0, None, &online.signals, 10.0, dt).unwrap();
        compute_mse_mae(&res).unwrap().mean_mse()
    };
    let (coarse, fine) = (mse(1e-3), mse(5e-4));
    assert!(((coarse - fine) / fine).abs() < 5e-3, "{coarse} vs {fine}");
}

#[test]
fn trapezoid_is_exact_for_linear_signals() {
    let t: Vec<f64> = (0..=10).map(|k| k as f64 * 0.3).collect();
    let v: Vec<f64> = t.iter().map(|x| 2.0 * x + 1.0).collect();
    let avg = time_average(&t, &v).unwrap();
    assert!((avg - (3.0 + 1.0)).abs() < 1e-12);
    assert!(time_average(&t[..1], &v[..1]).is_err());
}

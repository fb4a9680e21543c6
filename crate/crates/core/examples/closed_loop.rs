//! Runs the observer network online and prints the estimation errors.
//!
//! `cargo run --release --example closed_loop [out_dir]`

use duio::design_model::DesignMethod;
use duio::experiment::ExperimentConfig;
use duio::metrics::compute_mse_mae;
use duio::observer::{error_dynamics_matrix, run, RunSummary};

fn main() -> duio::Result<()> {
    let cfg = ExperimentConfig::benchmark();
    let scn = cfg.resolve()?;
    let data = scn.collect_datasets(cfg.seed)?;
    let gains = scn.design(DesignMethod::Data, Some(&data))?;
    let online = scn.online(cfg.seed)?;
    let (horizon, dt) = (cfg.run.horizon, cfg.run.dt);
    let res = run(
        &scn.model,
        &scn.graph,
        &gains,
        &online.x0,
        online.z0.as_deref(),
        &online.signals,
        horizon,
        dt,
    )?;

    for k in (0..res.len()).step_by(5000) {
        let e: Vec<String> = res.error_norms.iter().map(|n| format!("{:.2e}", n[k])).collect();
        println!("t = {:>5.1}: |e_i| = [{}]", res.times[k], e.join(", "));
    }
    let metrics = compute_mse_mae(&res)?;
    println!("mse {:.4e}, mae {:.4e}", metrics.mean_mse(), metrics.mean_mae());

    if let Some(dir) = std::env::args().nth(1) {
        let (_, abscissa) = error_dynamics_matrix(&gains, &scn.graph)?;
        let summary = RunSummary {
            horizon,
            dt,
            samples: res.len(),
            final_error_norms: res.final_error_norms(),
            final_spread: res.final_spread(),
            spectral_abscissa: abscissa,
            mse: metrics.mse.clone(),
            mae: metrics.mae.clone(),
        };
        res.write(dir.as_ref(), &summary)?;
        println!("wrote {dir}");
    }
    Ok(())
}

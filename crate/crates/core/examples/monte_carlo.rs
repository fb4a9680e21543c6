//! Monte Carlo comparison of the three design routes.
//!
//! `cargo run --release --example monte_carlo [experiments]`

use duio::experiment::ExperimentConfig;
use duio::metrics::monte_carlo_compare;

fn main() -> duio::Result<()> {
    let k: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(10);
    let cfg = ExperimentConfig::benchmark();
    let scn = cfg.resolve()?;
    let summary = monte_carlo_compare(&scn, k, cfg.seed)?;
    print!("{}", summary.table_markdown());
    Ok(())
}

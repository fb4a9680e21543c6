//! Runs the offline experiment at every node and checks the rank assumption.
//!
//! `cargo run --example collect_data [out_dir]`

use duio::datagen::check_rank_assumption;
use duio::experiment::ExperimentConfig;

fn main() -> duio::Result<()> {
    let cfg = ExperimentConfig::benchmark();
    let scn = cfg.resolve()?;
    let data = scn.collect_datasets(cfg.seed)?;
    let policy = scn.design_options().rank_policy();
    for (i, ds) in data.iter().enumerate() {
        let rep = check_rank_assumption(ds, policy)?;
        println!("node {}: {} samples, {rep:?}", i + 1, ds.n_samples());
    }
    if let Some(dir) = std::env::args().nth(1) {
        for (i, ds) in data.iter().enumerate() {
            ds.save(&std::path::Path::new(&dir).join(format!("node{}", i + 1)), i)?;
        }
        println!("saved to {dir}");
    }
    Ok(())
}

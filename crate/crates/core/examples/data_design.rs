//! Data-driven design next to the model-based one.

use duio::design_model::DesignMethod;
use duio::experiment::{analyze_all, ExperimentConfig};

fn main() -> duio::Result<()> {
    let cfg = ExperimentConfig::benchmark();
    let scn = cfg.resolve()?;
    let data = scn.collect_datasets(cfg.seed)?;

    for (i, rep) in analyze_all(&data, &scn.design_options())?.iter().enumerate() {
        println!("{}", rep.explain(i));
    }

    let by_data = scn.design(DesignMethod::Data, Some(&data))?;
    let by_model = scn.design(DesignMethod::Model, None)?;
    let gap = by_data
        .nodes
        .iter()
        .zip(&by_model.nodes)
        .map(|(a, b)| {
            [(&a.e, &b.e), (&a.f, &b.f), (&a.l, &b.l), (&a.h, &b.h), (&a.k, &b.k)]
                .iter()
                .map(|(x, y)| (*x - *y).amax())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    println!("largest entry gap between data and model gains: {gap:.2e}");
    Ok(())
}

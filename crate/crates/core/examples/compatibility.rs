//! Screens online samples against the offline data of one node.

use duio::datagen::{CompatibilityChecker, OnlineSample};
use duio::experiment::ExperimentConfig;
use duio::linalg::Vector;

fn main() -> duio::Result<()> {
    let cfg = ExperimentConfig::benchmark();
    let scn = cfg.resolve()?;
    let data = scn.collect_datasets(cfg.seed)?;
    let ds = &data[0];
    let checker = CompatibilityChecker::new(&ds.view(), scn.design_options().rank_policy());

    let view = ds.view();
    let k = view.n_samples() / 2;
    let genuine = OnlineSample {
        u: view.u.column(k).into_owned(),
        y: view.y.column(k).into_owned(),
        ydot: view.ydot.column(k).into_owned(),
        x: view.x.column(k).into_owned(),
        xdot: view.xdot.column(k).into_owned(),
    };
    let mut tampered = genuine.clone();
    tampered.xdot += Vector::from_element(tampered.xdot.len(), 0.5);

    for (name, s) in [("recorded sample", &genuine), ("tampered sample", &tampered)] {
        println!("{name}: {:?}", checker.check(s)?);
    }
    Ok(())
}

//! Integrates the two-mass-spring plant and prints a few samples.
//!
//! `cargo run --example simulate_plant [out.csv]`

use duio::linalg::Vector;
use duio::plant::{simulate, two_mass_spring, DerivativeMode};

fn main() -> duio::Result<()> {
    let model = two_mass_spring::model();
    let signals = two_mass_spring::signals(0.8, Some((7, 0.1)));
    let x0 = Vector::from_column_slice(&[0.5, 0.0, -0.5, 0.0]);
    let traj = simulate(&model, &x0, &signals, 10.0, 1e-3, DerivativeMode::Exact)?;

    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "t", "x1", "x2", "x3", "x4");
    for k in (0..traj.len()).step_by(1000) {
        let x = traj.states.column(k);
        println!(
            "{:>6.2} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            traj.times[k], x[0], x[1], x[2], x[3]
        );
    }
    for (i, y) in traj.node_outputs.iter().enumerate() {
        println!("node {} output at t = 10: {:.5?}", i + 1, y.column(y.ncols() - 1).as_slice());
    }
    if let Some(path) = std::env::args().nth(1) {
        traj.write_csv(path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}

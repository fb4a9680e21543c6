//! Laplacian spectra of the standard topologies.

use duio::network::{build_laplacian, check_reduced_hurwitz, SensorGraph};

fn main() -> duio::Result<()> {
    let m = 5;
    let graphs = [
        ("ring", SensorGraph::ring(m)?),
        ("path", SensorGraph::path(m)?),
        ("star", SensorGraph::star(m)?),
        ("complete", SensorGraph::complete(m)?),
    ];
    for (name, g) in &graphs {
        let bundle = build_laplacian(g)?;
        let (ok, lam) = check_reduced_hurwitz(&bundle);
        println!("{name:>8}: spectrum {:.4?}", bundle.spectrum);
        println!(
            "          algebraic connectivity {:.4}, reduced lambda_min {lam:.4} (positive: {ok})",
            bundle.algebraic_connectivity()
        );
    }

    // A graph with an isolated node is rejected.
    let broken = SensorGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0)]);
    match broken.and_then(|g| build_laplacian(&g)) {
        Ok(_) => println!("disconnected graph accepted?"),
        Err(e) => println!("disconnected graph: {e}"),
    }
    Ok(())
}

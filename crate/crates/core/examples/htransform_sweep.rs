//! Conditioning on survival up to `t + r` approaches the h-transform as
//! `r` grows.

use superlab::qprocess::{htransform_sweep, QConfig};
use superlab::simulate::{Scheme, SimConfig};
use superlab::spectral::triplet_for;
use superlab::{MeasureVector, ModelSpec};

fn main() -> superlab::Result<()> {
    let spec = ModelSpec::feller(1.0, 1.0);
    let tr = triplet_for(&spec)?;
    let mut sim = SimConfig::new(0.05, 40_000, 5, vec![]);
    sim.scheme = Scheme::SplitExact;
    let mu = MeasureVector::dirac(1, 0, 10.0);
    let sweep = htransform_sweep(
        &spec,
        &tr,
        &mu,
        4.0,
        &[0.0, 1.0, 2.0, 4.0, 8.0],
        &QConfig::new(sim),
    )?;

    println!(
        "h-transform weight mean {:.4} +- {:.4}",
        sweep.weight_mean.value, sweep.weight_mean.stderr
    );
    let labels: Vec<String> = sweep.panel.iter().map(|p| p.to_string()).collect();
    println!("{:>4}  {}", "r", labels.join("  "));
    for row in &sweep.rows {
        let cells: Vec<String> = row
            .difference
            .iter()
            .zip(&row.exact)
            .map(|(d, e)| format!("{:+.4} ({:+.4})", d.value, e))
            .collect();
        println!("{:>4}  {}", row.r, cells.join("  "));
    }
    println!(
        "monotone {} converged {} passed {}",
        sweep.monotone, sweep.converged, sweep.passed
    );
    Ok(())
}

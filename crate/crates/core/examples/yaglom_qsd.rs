//! Yaglom limit of the Feller diffusion from a large initial mass and the
//! quasi-stationarity restart check.

use superlab::qprocess::{qsd_check, yaglom_estimate, QConfig};
use superlab::simulate::{Scheme, SimConfig};
use superlab::spectral::triplet_for;
use superlab::{MeasureVector, ModelSpec};

fn main() -> superlab::Result<()> {
    let spec = ModelSpec::feller(1.0, 1.0);
    let tr = triplet_for(&spec)?;
    let mut sim = SimConfig::new(0.05, 50_000, 11, vec![]);
    sim.scheme = Scheme::SplitExact;
    let config = QConfig::new(sim);
    let mu = MeasureVector::dirac(1, 0, 40.0);

    let y = yaglom_estimate(&spec, &tr, &mu, 8.0, &config)?;
    println!(
        "survival at t = {}: {:.5} +- {:.5} (exact {:.5}), ess {:.0}",
        y.t, y.survival.value, y.survival.stderr, y.survival_exact, y.law.ess
    );
    // the Yaglom law of this model is exponential with mean 1
    println!("mean mass {:.4}", y.law.mean(&[1.0]).value);
    if let Some(w) = &y.warning {
        println!("warning: {w}");
    }

    let qsd = qsd_check(&spec, &tr, &y, &[0.5, 1.0, 2.0], &config)?;
    for row in &qsd.rows {
        println!(
            "r = {}: restart survival {:.4} +- {:.4}, e^(lambda r) = {:.4}, pass {}",
            row.r, row.survival.value, row.survival.stderr, row.target, row.passed
        );
    }
    Ok(())
}

//! Extinction curve, the survival constant `K` and the rate-ratio table.

use superlab::cumulant::{extinction_curve, kappa_deterministic, rate_ratio};
use superlab::lab::shipped_models;
use superlab::spectral::triplet_for;

fn main() -> superlab::Result<()> {
    for (name, spec) in shipped_models()? {
        let tr = triplet_for(&spec)?;
        // a persistent model has no finite extinction curve
        match kappa_deterministic(&spec, &tr, 20.0, 1e-10) {
            Ok(k) => println!(
                "{name:<14} K = {:.6} +- {:.1e} ({:?})",
                k.kappa, k.uncertainty, k.regime
            ),
            Err(e) => println!("{name:<14} {e}"),
        }
    }

    let spec = superlab::ModelSpec::feller(1.0, 1.0);
    let tr = triplet_for(&spec)?;
    let curve = extinction_curve(&spec, &[0.5, 1.0, 2.0, 4.0], 1e-10)?;
    print!("{}", curve.to_csv());
    let table = rate_ratio(&spec, &tr, &[10.0], &[0.0, 1.0, 5.0, 10.0], 1e-10)?;
    print!("{}", table.to_csv());
    Ok(())
}

//! The `(t, r)` panel of conditioned Laplace functionals, which settles at
//! the `Q_{inf,inf}` value for a finite L log L functional.

use superlab::qprocess::{double_limit_panel, QConfig};
use superlab::simulate::{Scheme, SimConfig};
use superlab::spectral::triplet_for;
use superlab::{MeasureVector, ModelSpec};

fn main() -> superlab::Result<()> {
    let spec = ModelSpec::feller(1.0, 1.0);
    let tr = triplet_for(&spec)?;
    let mut sim = SimConfig::new(0.05, 40_000, 3, vec![]);
    sim.scheme = Scheme::SplitExact;
    let mu = MeasureVector::dirac(1, 0, 20.0);
    let f = superlab::FunctionVector::new(tr.phi.clone());
    let panel = double_limit_panel(
        &spec,
        &tr,
        &mu,
        &f,
        &[1.0, 2.0, 4.0, 6.0, 8.0],
        &[0.0, 1.0, 4.0, 8.0],
        &QConfig::new(sim),
    )?;

    print!("{}", panel.to_csv());
    println!("target {:?}", panel.target);
    println!(
        "corner spread {:.4} (se {:.4}), stabilized {}",
        panel.corner_spread, panel.corner_stderr, panel.stabilized
    );
    for row in &panel.rows {
        println!(
            "t = {}: scaled survival {:.4} (exact {:.4}), phi-mass {:.3} (exact {:.3})",
            row.t,
            row.scaled_survival.value,
            row.scaled_survival_exact,
            row.phi_mass.value,
            row.phi_mass_exact
        );
    }
    Ok(())
}

//! The spine decomposition and the h-transform of the `nu`-started process
//! give the same law at time `t`.

use superlab::lab::shipped_models;
use superlab::qprocess::default_panel;
use superlab::spectral::triplet_for;
use superlab::spine::{spine_vs_htransform, SpineConfig};

fn main() -> superlab::Result<()> {
    let (_, spec) = shipped_models()?
        .into_iter()
        .find(|(n, _)| *n == "atoms")
        .expect("shipped");
    let tr = triplet_for(&spec)?;
    let config = SpineConfig::new(0.02, 20_000, 4);
    let report = spine_vs_htransform(&spec, &tr, 2.0, &default_panel(), &config, 100_000)?;
    println!(
        "weight mean {:.4} +- {:.4}",
        report.weight_mean.value, report.weight_mean.stderr
    );
    for row in &report.rows {
        println!(
            "{:<8} spine {:.4} +- {:.4}  h-transform {:.4} +- {:.4}  factorized {:.4}  pass {}",
            row.point.to_string(),
            row.spine.value,
            row.spine.stderr,
            row.htransform.value,
            row.htransform.stderr,
            row.factorized.value,
            row.passed
        );
    }
    Ok(())
}

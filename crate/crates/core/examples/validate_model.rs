//! Validates every shipped model and reports Grey's condition.

use superlab::lab::shipped_models;
use superlab::model::{grey_condition, validate_model};

fn main() -> superlab::Result<()> {
    for (name, spec) in shipped_models()? {
        let report = validate_model(&spec)?;
        let grey = grey_condition(&spec, None);
        println!(
            "{name:<14} n={} valid={} grey={:?} ({})",
            spec.n,
            report.passed(),
            grey.verdict,
            grey.source
        );
        for c in report.failures() {
            println!("    failed: {c:?}");
        }
    }
    Ok(())
}

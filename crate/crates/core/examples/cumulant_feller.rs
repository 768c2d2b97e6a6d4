//! Cumulant flow of the Feller diffusion against its closed form
//! `V_t f = b f / ((b + c f) e^{bt} - c f)`, with `psi(z) = b z + c z^2`.

use superlab::cumulant::solve_cumulant_on;
use superlab::{FunctionVector, ModelSpec};

fn main() -> superlab::Result<()> {
    let (b, c) = (1.0, 1.0);
    let spec = ModelSpec::feller(b, c);
    let times: Vec<f64> = (1..=8).map(|k| 0.5 * k as f64).collect();
    let f = 1.0;
    let sol = solve_cumulant_on(&spec, &FunctionVector::new(vec![f]), &times, 1e-10)?;
    println!(
        "{:>5} {:>14} {:>14} {:>10}",
        "t", "V_t f", "closed form", "rel err"
    );
    for (t, v) in sol.times.iter().zip(&sol.values) {
        let exact = b * f / ((b + c * f) * (b * t).exp() - c * f);
        let got = v.values()[0];
        println!(
            "{t:>5} {got:>14.10} {exact:>14.10} {:>10.1e}",
            (got - exact).abs() / exact
        );
    }
    println!("{:?}", sol.stats);
    Ok(())
}

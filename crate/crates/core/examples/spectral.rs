//! Perron triplet, spectral gap, spine generator and the L log L
//! functional of a three-type model.

use superlab::lab::shipped_models;
use superlab::spectral::{h2_remainder, l_log_l_functional, spine_generator, triplet_for};

fn main() -> superlab::Result<()> {
    let (_, spec) = shipped_models()?
        .into_iter()
        .find(|(n, _)| *n == "three_type")
        .expect("shipped");
    let tr = triplet_for(&spec)?;
    println!("lambda = {:.6}", tr.lambda);
    println!("gap    = {:.6}", tr.gap);
    println!("phi    = {:?}", tr.phi);
    println!("nu     = {:?}", tr.nu);

    let gen = spine_generator(&spec, &tr)?;
    println!(
        "spine stationary law {:?}, residual {:.1e}",
        gen.nu_tilde, gen.stationarity_residual
    );
    println!("L log L functional = {:.6}", l_log_l_functional(&spec, &tr));

    let grid: Vec<f64> = (1..=5).map(|k| k as f64 / tr.gap).collect();
    print!("{}", h2_remainder(&spec, &tr, &grid)?.to_csv());
    Ok(())
}

//! Runs the twelve acceptance criteria and prints one line per criterion.
//!
//! `ACCEPT_SCALE` scales the Monte-Carlo sample sizes, `ACCEPT_SEED` replaces
//! the default seed and `ACCEPT_ONLY` takes a comma-separated list of
//! criterion numbers. Exits nonzero on any failure.

use superlab::lab::{criterion, AcceptOptions};

fn main() {
    let mut opts = AcceptOptions::default();
    if let Ok(s) = std::env::var("ACCEPT_SCALE") {
        opts.scale = s.parse().expect("ACCEPT_SCALE must be a number");
    }
    if let Ok(s) = std::env::var("ACCEPT_SEED") {
        opts.seed = s.parse().expect("ACCEPT_SEED must be an integer");
    }
    let ids: Vec<u8> = match std::env::var("ACCEPT_ONLY") {
        Ok(list) => list
            .split(',')
            .map(|s| s.trim().parse().expect("criterion number"))
            .collect(),
        Err(_) => (1..=12).collect(),
    };
    let mut failed = Vec::new();
    for id in ids {
        let report = criterion(id, &opts);
        for row in &report.rows {
            println!(
                "    {:<60} target {:>13.6e}  estimate {:>13.6e}  tol {:>10.3e}  {}",
                row.label,
                row.target,
                row.estimate,
                row.tolerance,
                row.status()
            );
        }
        println!("{}", report.line());
        if !report.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}

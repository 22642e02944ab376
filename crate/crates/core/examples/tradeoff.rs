//! Privacy (one minus the learning adversary's success) against clustering
//! utility over the budget grid, and where the two curves cross.
//!
//!     cargo run --release --example tradeoff -- [config.toml]

use std::path::Path;

use ldprec::experiment::{self, ExperimentConfig, Intersection};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let config = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::from_path(Path::new(&path))?,
        None => ExperimentConfig::default(),
    };
    let out = experiment::run_tradeoff(&config)?;
    println!("{:>6} {:>8} {:>8}", "eps", "utility", "privacy");
    for r in &out.report.records {
        println!(
            "{:>6} {:>8.3} {:>8.3}",
            r.epsilon,
            r.clustering_utility.unwrap_or(f64::NAN),
            r.privacy.unwrap_or(f64::NAN)
        );
    }
    match out.report.intersection {
        Some(Intersection::Found { epsilon, utility, privacy }) => {
            println!("curves cross at eps = {epsilon:.3} (utility {utility:.3}, privacy {privacy:.3})")
        }
        _ => println!("no intersection within the grid"),
    }
    Ok(())
}

//! Parameter sweeps: clustering utility against the privacy budget, the
//! filter size or the hash count.
//!
//!     cargo run --release --example sweep -- [epsilon|bloom_size|hash_count] [config.toml]

use std::path::Path;

use ldprec::experiment::{self, ExperimentConfig, SweepKind};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind: SweepKind = args.first().map(String::as_str).unwrap_or("epsilon").parse()?;
    let config = match args.get(1) {
        Some(path) => ExperimentConfig::from_path(Path::new(path))?,
        None => ExperimentConfig::default(),
    };
    let out = experiment::run_sweep(&config, kind)?;
    println!("{:>8} {:>5} {:>3} {:>8} {:>8} {:>8}", "eps", "m", "k", "utility", "basic", "music");
    for r in &out.report.records {
        let music = r.decoder.iter().find(|c| c.category == "music").map_or(f64::NAN, |c| c.accuracy);
        println!(
            "{:>8.3} {:>5} {:>3} {:>8.3} {:>8.3} {:>8.3}",
            r.epsilon,
            r.m,
            r.k,
            r.clustering_utility.unwrap_or(f64::NAN),
            r.basic_success.unwrap_or(f64::NAN),
            music
        );
    }
    println!("finished in {:.1}s", out.info.total_seconds);
    Ok(())
}

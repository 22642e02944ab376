//! Runs the full pipeline (generate, perturb, decode, cluster) and writes
//! `report.json`, `run_info.json` and `pipeline.csv`.
//!
//!     cargo run --release --example pipeline -- [config.toml] [out_dir]

use std::path::{Path, PathBuf};

use ldprec::experiment::{self, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let config = match args.first() {
        Some(path) => ExperimentConfig::from_path(Path::new(path))?,
        None => ExperimentConfig::default(),
    };
    let out = experiment::run_pipeline(&config)?;
    let record = &out.report.records[0];
    println!("config hash {}", out.report.config_hash);
    println!("eps1 {} eps2 {:.4} m {} k {}", record.epsilon1, record.epsilon2, record.m, record.k);
    for c in &record.decoder {
        println!("  {:<8} accuracy {:.3}  weighted f1 {:.3}", c.category, c.accuracy, c.weighted_f1);
    }
    println!("clustering utility {:.3}", record.clustering_utility.unwrap_or(f64::NAN));
    for s in &out.info.stages {
        println!("  {:<24} {:>7.2}s", s.stage, s.seconds);
    }
    let dir = args.get(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(&config.out_dir));
    experiment::write_outputs(&out, &dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}

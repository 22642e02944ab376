use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ldprec::attacks;
use ldprec::bloom;
use ldprec::decoder::{self, Sample};
use ldprec::experiment::{self, ExperimentConfig, RunOutput, SweepKind};
use ldprec::perturb::{ClientState, ReportRecord};
use ldprec::rng;
use ldprec::LabeledDataset;

#[derive(Parser)]
#[command(name = "ldprec", version, about = "LDP-perturbed recommendation experiments")]
struct Cli {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// 80000 profiles, 20000 training and 10000 test samples.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labeled dataset.
    Generate,
    /// Bloom-encode every profile of a dataset (one hex vector per line).
    Encode {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Perturb every profile of a dataset into report records (JSON lines).
    Perturb {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train one decoder per category from a dataset and its reports.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        reports: Option<PathBuf>,
    },
    /// Elbow scan and clustering of the clean profiles.
    Cluster,
    /// Run an adversary game over the configured grid.
    Attack {
        #[arg(value_enum)]
        game: Game,
    },
    /// Perturb, decode and cluster at the configured privacy level.
    Pipeline,
    /// Sweep the privacy budget, the filter size or the hash count.
    Sweep {
        #[arg(value_enum, default_value = "epsilon")]
        over: Sweep,
    },
    /// Privacy and utility curves over the budget grid with their crossing.
    Tradeoff,
}

#[derive(Clone, Copy, ValueEnum)]
enum Game {
    Basic,
    Advanced,
    Averaging,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sweep {
    Epsilon,
    BloomSize,
    HashCount,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.display().to_string();
    }
    config.full_scale |= cli.full_scale;
    Ok(config)
}

fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    LabeledDataset::read_from(BufReader::new(file), None).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn finish(out: RunOutput, dir: &Path) -> Result<()> {
    experiment::write_outputs(&out, dir)?;
    println!("{}", out.report.to_csv().trim_end());
    if let Some(i) = out.report.intersection {
        println!("intersection: {}", serde_json::to_string(&i)?);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    let dir = PathBuf::from(&config.out_dir);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let dataset_path = |p: &Option<PathBuf>| p.clone().unwrap_or_else(|| dir.join("dataset.txt"));

    match &cli.command {
        Command::Generate => {
            let (dataset, _) = experiment::generate(&config).context("stage `generate` failed")?;
            write_file(&dir.join("dataset.txt"), &dataset.to_text())?;
        }
        Command::Encode { input } => {
            let dataset = read_dataset(&dataset_path(input))?;
            let params = config.bloom_params()?;
            let mut lines = String::new();
            for p in &dataset.profiles {
                let bv = bloom::encode(p.values(&dataset.taxonomy), &params).context("stage `encode` failed")?;
                lines.push_str(&bv.to_hex_string());
                lines.push('\n');
            }
            write_file(&dir.join("encoded.txt"), &lines)?;
        }
        Command::Perturb { input } => {
            let dataset = read_dataset(&dataset_path(input))?;
            let bloom = config.bloom_params()?;
            let privacy = config.privacy.resolve(bloom.k).context("stage `privacy` failed")?;
            let state = ClientState::new(rng::derive_seed(config.seed, &[rng::tag_str("clients")]));
            let path = dir.join("reports.jsonl");
            let mut out = BufWriter::new(fs::File::create(&path)?);
            for (i, p) in dataset.profiles.iter().enumerate() {
                let id = format!("client-{i}");
                let report = state
                    .perturb_report(&id, &p.values(&dataset.taxonomy), &bloom, &privacy)
                    .context("stage `perturb` failed")?;
                writeln!(out, "{}", ReportRecord::new(&id, &report, &bloom, &privacy)?.to_line()?)?;
            }
            out.flush()?;
        }
        Command::Train { dataset, reports } => {
            let data = read_dataset(&dataset_path(dataset))?;
            let reports_path = reports.clone().unwrap_or_else(|| dir.join("reports.jsonl"));
            let file = fs::File::open(&reports_path).with_context(|| format!("opening {}", reports_path.display()))?;
            let mut bits = Vec::new();
            for line in BufReader::new(file).lines() {
                let line = line?;
                if !line.trim().is_empty() {
                    bits.push(ReportRecord::from_line(&line)?.bits);
                }
            }
            if bits.len() != data.profiles.len() {
                anyhow::bail!("{} reports for {} profiles", bits.len(), data.profiles.len());
            }
            let (_, train, test) = config.data_sizes();
            let train = train.min(bits.len());
            let test_end = (train + test).min(bits.len());
            let tax = &data.taxonomy;
            let models = experiment::train_decoders(
                tax,
                &bits[..train],
                &data.profiles[..train],
                &config.decoder,
                rng::derive_seed(config.seed, &[rng::tag_str("decoder")]),
            )
            .context("stage `train` failed")?;
            let models_dir = dir.join("models");
            fs::create_dir_all(&models_dir)?;
            let mut metrics = String::from("category,accuracy,weighted_f1,macro_f1\n");
            for (c, (model, cat)) in models.iter().zip(tax.categories()).enumerate() {
                write_file(&models_dir.join(format!("{}.txt", cat.name)), &model.to_text()?)?;
                if test_end > train {
                    let test_set: Vec<Sample> = bits[train..test_end]
                        .iter()
                        .zip(&data.profiles[train..test_end])
                        .map(|(b, p)| (b.clone(), p.selections[c]))
                        .collect();
                    let rep = decoder::evaluate(model, &test_set).context("stage `evaluate` failed")?;
                    metrics.push_str(&format!(
                        "{},{},{},{}\n",
                        cat.name,
                        rep.accuracy,
                        rep.weighted_f1(),
                        rep.macro_f1()
                    ));
                    write_file(&dir.join(format!("confusion_{}.csv", cat.name)), &rep.confusion_csv(&cat.classes))?;
                }
            }
            write_file(&dir.join("decoder_metrics.csv"), &metrics)?;
            print!("{metrics}");
        }
        Command::Cluster => {
            let elbow = experiment::run_elbow(&config)?;
            write_file(&dir.join("elbow.csv"), &elbow.to_csv())?;
            write_file(&dir.join("clusters.csv"), &elbow.clustering.to_csv())?;
            print!("{}", elbow.to_csv());
            match elbow.elbow {
                Some(k) => println!("elbow at K = {k}"),
                None => println!("elbow undetermined (fewer than 3 K values)"),
            }
        }
        Command::Attack { game } => match game {
            Game::Basic => {
                let rows = experiment::run_basic_attack_grid(&config)?;
                let refs: Vec<_> = rows.iter().map(|(e, k, r)| (*e, *k, r)).collect();
                let csv = attacks::attack_grid_csv(&refs);
                write_file(&dir.join("attack_basic.csv"), &csv)?;
                print!("{csv}");
            }
            Game::Advanced => {
                let rows = experiment::run_advanced_attack_grid(&config)?;
                let refs: Vec<_> = rows.iter().map(|(e, k, r)| (*e, *k, r)).collect();
                let csv = attacks::attack_grid_csv(&refs);
                write_file(&dir.join("attack_advanced.csv"), &csv)?;
                print!("{csv}");
            }
            Game::Averaging => {
                let (dataset, _) = experiment::generate(&config).context("stage `generate` failed")?;
                let values = dataset.profiles[0].values(&dataset.taxonomy);
                let bloom = config.bloom_params()?;
                let privacy = config.privacy.resolve(bloom.k)?;
                let outcome = attacks::run_averaging_game(
                    &values,
                    &privacy,
                    &bloom,
                    config.attack.averaging_observations,
                    rng::derive_seed(config.seed, &[rng::tag_str("averaging")]),
                )
                .context("stage `attack-averaging` failed")?;
                write_file(&dir.join("attack_averaging.json"), &serde_json::to_string_pretty(&outcome)?)?;
                println!(
                    "verdict: {:?}; hamming to clean filter {}, to permanent output {}",
                    outcome.verdict, outcome.hamming_to_clean, outcome.hamming_to_permanent
                );
            }
        },
        Command::Pipeline => finish(experiment::run_pipeline(&config)?, &dir)?,
        Command::Sweep { over } => {
            let kind = match over {
                Sweep::Epsilon => SweepKind::Epsilon,
                Sweep::BloomSize => SweepKind::BloomSize,
                Sweep::HashCount => SweepKind::HashCount,
            };
            finish(experiment::run_sweep(&config, kind)?, &dir)?
        }
        Command::Tradeoff => finish(experiment::run_tradeoff(&config)?, &dir)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

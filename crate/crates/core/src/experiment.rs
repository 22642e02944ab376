//! End-to-end experiment runners: configuration, the perturb → decode →
//! cluster pipeline, parameter sweeps, the privacy/utility trade-off and
//! the CSV/JSON outputs they emit.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{self, AdvancedGame, AttackResult, AttackSetup};
use crate::bloom::{self, BloomParams};
use crate::clustering::{self, ClusteringResult, KmeansOptions};
use crate::decoder::{self, MlpConfig, MlpModel, Sample};
use crate::error::{Error, Result, StageContext};
use crate::perturb::{self, unbounded, ClientState, PrivacyParams, PrivacySpec};
use crate::profile::{self, ArchetypeMixture, BuiltinTaxonomy, LabeledDataset, Taxonomy};
use crate::rng;
use crate::BitVector;

pub const FULL_SCALE_PROFILES: usize = 80_000;
pub const FULL_SCALE_TRAIN: usize = 20_000;
pub const FULL_SCALE_TEST: usize = 10_000;
pub const DEFAULT_FP_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Total profiles; the first `train` label the decoders, the next `test`
    /// score them and everything after `train` is clustered.
    pub profiles: usize,
    pub train: usize,
    pub test: usize,
    /// Number of user archetypes mixed into the synthetic profiles.
    pub archetypes: usize,
    /// Probability that a profile keeps its archetype's class in a category.
    pub fidelity: f64,
    pub class_weights: Option<Vec<Vec<f64>>>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            profiles: 8000,
            train: 2000,
            test: 1000,
            archetypes: 5,
            fidelity: 0.8,
            class_weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BloomConfig {
    /// Explicit filter size. At most one of `m` and `f_p` may be set; with
    /// neither the filter is sized for a false-positive rate of 0.1.
    pub m: Option<usize>,
    pub f_p: Option<f64>,
    /// Hash count; the optimal count for the filter size when absent.
    pub k: Option<usize>,
    pub hash_seed: u64,
}

impl Default for BloomConfig {
    fn default() -> Self {
        BloomConfig {
            m: None,
            f_p: None,
            k: None,
            hash_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSettings {
    pub hidden1: usize,
    pub hidden2: usize,
    pub dropout: [f64; 2],
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for DecoderSettings {
    fn default() -> Self {
        let d = MlpConfig::new(1, 2, 0);
        DecoderSettings {
            hidden1: d.hidden1_size,
            hidden2: d.hidden2_size,
            dropout: d.dropout_rates,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
        }
    }
}

impl DecoderSettings {
    pub fn mlp(&self, input_size: usize, output_size: usize, seed: u64) -> MlpConfig {
        MlpConfig {
            hidden1_size: self.hidden1,
            hidden2_size: self.hidden2,
            dropout_rates: self.dropout,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            ..MlpConfig::new(input_size, output_size, seed)
        }
    }
}

/// What the decoded side of the clustering sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// One-hot blocks of the decoded profile.
    Hard,
    /// The decoders' class probabilities.
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    /// Number of clusters.
    #[serde(rename = "K")]
    pub clusters: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub features: FeatureMode,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        let o = KmeansOptions::default();
        ClusteringConfig {
            clusters: 5,
            k_min: 1,
            k_max: 10,
            restarts: o.restarts,
            max_iters: o.max_iters,
            tol: o.tol,
            features: FeatureMode::Hard,
        }
    }
}

impl ClusteringConfig {
    pub fn options(&self) -> KmeansOptions {
        KmeansOptions {
            max_iters: self.max_iters,
            tol: self.tol,
            restarts: self.restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub ks: Vec<usize>,
    pub ms: Vec<usize>,
    /// Budget held fixed while the filter size or hash count varies.
    pub fixed_epsilon: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            epsilons: vec![0.1, 0.3, 0.5, 0.8, 1.2, 1.6, 2.0, 2.4],
            ks: vec![3, 5, 7, 9],
            ms: vec![48, 96, 144, 192],
            fixed_epsilon: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Category targeted by the advanced adversary and whose classes form
    /// the basic adversary's candidate set.
    pub category: String,
    /// Basic-game trials per grid point; 0 skips the game.
    pub basic_trials: usize,
    /// Whether sweeps also run the advanced game at every grid point.
    pub advanced: bool,
    pub averaging_observations: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            category: "music".into(),
            basic_trials: 2000,
            advanced: false,
            averaging_observations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub taxonomy: BuiltinTaxonomy,
    pub seed: u64,
    pub out_dir: String,
    pub full_scale: bool,
    pub data: DataConfig,
    pub bloom: BloomConfig,
    pub privacy: PrivacySpec,
    pub decoder: DecoderSettings,
    pub clustering: ClusteringConfig,
    pub sweep: SweepConfig,
    pub attack: AttackConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            taxonomy: BuiltinTaxonomy::Preference,
            seed: 42,
            out_dir: "out".into(),
            full_scale: false,
            data: DataConfig::default(),
            bloom: BloomConfig::default(),
            privacy: PrivacySpec::epsilon(2.0),
            decoder: DecoderSettings::default(),
            clustering: ClusteringConfig::default(),
            sweep: SweepConfig::default(),
            attack: AttackConfig::default(),
        }
    }
}

/// One point of an experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub privacy: PrivacySpec,
    pub m: usize,
    pub k: usize,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::param(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::param(format!("config: {e}")))
    }

    pub fn taxonomy(&self) -> Taxonomy {
        profile::builtin_taxonomy(self.taxonomy)
    }

    /// Data sizes after applying the full-scale switch.
    pub fn data_sizes(&self) -> (usize, usize, usize) {
        if self.full_scale {
            (FULL_SCALE_PROFILES, FULL_SCALE_TRAIN, FULL_SCALE_TEST)
        } else {
            (self.data.profiles, self.data.train, self.data.test)
        }
    }

    /// Hex SHA-256 of the canonical JSON form of the configuration, output
    /// directory excluded.
    pub fn config_hash(&self) -> String {
        let canonical = ExperimentConfig {
            out_dir: String::new(),
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let (profiles, train, test) = self.data_sizes();
        if train == 0 || test == 0 {
            return Err(Error::param("train and test sizes must be >= 1"));
        }
        if train + test > profiles {
            return Err(Error::param(format!(
                "train ({train}) + test ({test}) exceed the {profiles} profiles"
            )));
        }
        let tax = self.taxonomy();
        if tax.category(&self.attack.category).is_none() {
            return Err(Error::param(format!("unknown attack category `{}`", self.attack.category)));
        }
        if self.clustering.clusters == 0 || self.clustering.clusters > profiles - train {
            return Err(Error::param("cluster count must be in 1..=clustered profiles"));
        }
        self.bloom_params()?;
        Ok(())
    }

    /// Filter parameters of the base configuration.
    pub fn bloom_params(&self) -> Result<BloomParams> {
        let n = self.taxonomy().total_classes();
        let m = match (self.bloom.m, self.bloom.f_p) {
            (Some(_), Some(_)) => return Err(Error::param("set at most one of bloom.m and bloom.f_p")),
            (Some(m), None) => m,
            (None, f_p) => bloom::optimal_m(n, f_p.unwrap_or(DEFAULT_FP_RATE))?,
        };
        self.bloom_with(m, self.bloom.k)
    }

    fn bloom_with(&self, m: usize, k: Option<usize>) -> Result<BloomParams> {
        let n = self.taxonomy().total_classes();
        let k = match k {
            Some(k) => k,
            None => bloom::optimal_k(m, n)?,
        };
        let f_p = match self.bloom.m {
            None => self.bloom.f_p.unwrap_or(DEFAULT_FP_RATE),
            Some(_) => expected_fp_rate(m, k, n),
        };
        BloomParams::new(m, k, n, f_p, self.bloom.hash_seed)
    }

    fn base_point(&self) -> Result<GridPoint> {
        let b = self.bloom_params()?;
        Ok(GridPoint {
            privacy: self.privacy,
            m: b.m,
            k: b.k,
        })
    }
}

/// `(1 - e^{-kn/m})^k`, clamped into the open unit interval.
fn expected_fp_rate(m: usize, k: usize, n: usize) -> f64 {
    let r = (1.0 - (-(k as f64) * n as f64 / m as f64).exp()).powi(k as i32);
    r.clamp(1e-12, 1.0 - 1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: String,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
}

/// Measurements at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub config_hash: String,
    /// The requested budget, or ε₁ when the noise was given directly.
    #[serde(with = "unbounded")]
    pub epsilon: f64,
    pub m: usize,
    pub k: usize,
    pub f: f64,
    pub p: f64,
    pub q: f64,
    #[serde(with = "unbounded")]
    pub epsilon1: f64,
    #[serde(with = "unbounded")]
    pub epsilon2: f64,
    pub p_prime: f64,
    pub q_prime: f64,
    pub decoder: Vec<CategoryMetrics>,
    pub clustering_utility: Option<f64>,
    pub basic_success: Option<f64>,
    pub advanced_success: Option<f64>,
    pub privacy: Option<f64>,
}

impl GridRecord {
    fn sort_key(&self) -> (f64, usize, usize, f64) {
        (self.epsilon, self.m, self.k, self.f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Intersection {
    Found { epsilon: f64, utility: f64, privacy: f64 },
    NoIntersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Pipeline,
    SweepEpsilon,
    SweepBloomSize,
    SweepHashCount,
    Tradeoff,
}

impl ExperimentKind {
    pub fn csv_name(self) -> &'static str {
        match self {
            ExperimentKind::Pipeline => "pipeline.csv",
            ExperimentKind::SweepEpsilon => "sweep_epsilon.csv",
            ExperimentKind::SweepBloomSize => "sweep_bloom_size.csv",
            ExperimentKind::SweepHashCount => "sweep_hash_count.csv",
            ExperimentKind::Tradeoff => "tradeoff.csv",
        }
    }
}

/// Deterministic experiment output: identical for identical config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub taxonomy: String,
    pub profiles: usize,
    pub train: usize,
    pub test: usize,
    pub records: Vec<GridRecord>,
    pub intersection: Option<Intersection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Run provenance that varies between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub config_hash: String,
    pub seed: u64,
    pub unix_timestamp: u64,
    pub total_seconds: f64,
    pub stages: Vec<StageTiming>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub info: RunInfo,
}

#[derive(Default)]
struct Timer {
    stages: Vec<StageTiming>,
}

impl Timer {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().stage(stage);
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    fn absorb(&mut self, prefix: &str, other: Timer) {
        for s in other.stages {
            self.stages.push(StageTiming {
                stage: format!("{prefix}/{}", s.stage),
                seconds: s.seconds,
            });
        }
    }
}

/// The dataset, its clean features and the clean clustering every grid
/// point is compared against.
pub struct Prepared {
    pub taxonomy: Taxonomy,
    pub dataset: LabeledDataset,
    pub archetype_labels: Vec<usize>,
    pub clean_features: Vec<Vec<f64>>,
    pub clean_clustering: ClusteringResult,
}

/// Generates the synthetic archetype dataset for a configuration.
pub fn generate(config: &ExperimentConfig) -> Result<(LabeledDataset, Vec<usize>)> {
    let taxonomy = config.taxonomy();
    let (profiles, _, _) = config.data_sizes();
    let mixture = ArchetypeMixture::spread(&taxonomy, config.data.archetypes, config.data.fidelity)?;
    profile::generate_archetype_dataset(
        &taxonomy,
        &mixture,
        profiles,
        config.data.class_weights.as_deref(),
        rng::derive_seed(config.seed, &[rng::tag_str("dataset")]),
    )
}

fn kmeans_seed(config: &ExperimentConfig) -> u64 {
    rng::derive_seed(config.seed, &[rng::tag_str("kmeans")])
}

fn prepare(config: &ExperimentConfig, timer: &mut Timer) -> Result<Prepared> {
    config.validate().stage("config")?;
    let taxonomy = config.taxonomy();
    let (_, train, _) = config.data_sizes();
    let (dataset, archetype_labels) = timer.time("generate", || generate(config))?;
    let clean_features = dataset.profiles[train..]
        .iter()
        .map(|p| clustering::one_hot(&taxonomy, p))
        .collect::<Result<Vec<_>>>()
        .stage("features")?;
    let c = &config.clustering;
    let clean_clustering = timer.time("cluster-clean", || {
        clustering::kmeans_best_of(&clean_features, c.clusters, kmeans_seed(config), c.max_iters, c.tol, c.restarts)
    })?;
    Ok(Prepared {
        taxonomy,
        dataset,
        archetype_labels,
        clean_features,
        clean_clustering,
    })
}

#[derive(Debug, Clone, Copy)]
struct Wants {
    utility: bool,
    basic: bool,
    advanced: bool,
}

fn point_tags(point: &GridPoint, label: &str) -> Vec<u64> {
    let privacy = match point.privacy {
        PrivacySpec::Direct { f, p, q } => [f.to_bits(), p.to_bits(), q.to_bits()],
        PrivacySpec::Epsilon { epsilon, p, q } => [epsilon.to_bits(), p.to_bits(), q.to_bits()],
    };
    let mut tags = vec![rng::tag_str(label)];
    tags.extend(privacy);
    tags.push(point.m as u64);
    tags.push(point.k as u64);
    tags
}

/// Trains one decoder per category on labeled reports.
pub fn train_decoders(
    taxonomy: &Taxonomy,
    reports: &[BitVector],
    profiles: &[profile::Profile],
    settings: &DecoderSettings,
    seed: u64,
) -> Result<Vec<MlpModel>> {
    if reports.len() != profiles.len() {
        return Err(Error::DimensionMismatch {
            expected: profiles.len(),
            actual: reports.len(),
        });
    }
    let m = reports.first().map(|r| r.len()).ok_or_else(|| Error::EmptyInput("no training reports".into()))?;
    taxonomy
        .categories()
        .par_iter()
        .enumerate()
        .map(|(c, cat)| {
            let data: Vec<Sample> = reports
                .iter()
                .zip(profiles)
                .map(|(r, p)| (r.clone(), p.selections[c]))
                .collect();
            let cfg = settings.mlp(m, cat.classes.len(), rng::derive_seed(seed, &[c as u64]));
            decoder::train(&data, &cfg)
        })
        .collect()
}

fn decoded_features(
    taxonomy: &Taxonomy,
    models: &[MlpModel],
    reports: &[BitVector],
    mode: FeatureMode,
) -> Result<Vec<Vec<f64>>> {
    reports
        .par_iter()
        .map(|r| match mode {
            FeatureMode::Hard => clustering::one_hot(taxonomy, &decoder::decode_profile(taxonomy, models, r)?),
            FeatureMode::Soft => clustering::soft_features(taxonomy, &decoder::decode_profile_soft(taxonomy, models, r)?),
        })
        .collect()
}

fn run_point(
    config: &ExperimentConfig,
    prep: &Prepared,
    point: GridPoint,
    wants: Wants,
    config_hash: &str,
) -> Result<(GridRecord, Timer)> {
    let mut timer = Timer::default();
    let (_, train, test) = config.data_sizes();
    let bloom = config.bloom_with(point.m, Some(point.k)).stage("bloom")?;
    let privacy = point.privacy.resolve(point.k).stage("privacy")?;
    let budget = privacy.budget().stage("privacy")?;
    let tax = &prep.taxonomy;

    let mut decoder_metrics = Vec::new();
    let mut utility = None;
    if wants.utility {
        let state = ClientState::new(rng::derive_seed(config.seed, &point_tags(&point, "clients")));
        let reports = timer.time("perturb", || {
            perturb::perturb_profiles(&state, &prep.dataset, "client-", &bloom, &privacy)
        })?;
        let models = timer.time("train", || {
            train_decoders(
                tax,
                &reports[..train],
                &prep.dataset.profiles[..train],
                &config.decoder,
                rng::derive_seed(config.seed, &point_tags(&point, "decoder")),
            )
        })?;
        timer.time("evaluate", || {
            for (c, (model, cat)) in models.iter().zip(tax.categories()).enumerate() {
                let test_set: Vec<Sample> = reports[train..train + test]
                    .iter()
                    .zip(&prep.dataset.profiles[train..train + test])
                    .map(|(r, p)| (r.clone(), p.selections[c]))
                    .collect();
                let rep = decoder::evaluate(model, &test_set)?;
                decoder_metrics.push(CategoryMetrics {
                    category: cat.name.clone(),
                    accuracy: rep.accuracy,
                    weighted_f1: rep.weighted_f1(),
                    macro_f1: rep.macro_f1(),
                });
            }
            Ok(())
        })?;
        let features = timer.time("decode", || {
            decoded_features(tax, &models, &reports[train..], config.clustering.features)
        })?;
        let c = &config.clustering;
        utility = Some(timer.time("cluster", || {
            let decoded =
                clustering::kmeans_best_of(&features, c.clusters, kmeans_seed(config), c.max_iters, c.tol, c.restarts)?;
            clustering::matched_accuracy(&prep.clean_clustering.assignments, &decoded.assignments, c.clusters)
        })?);
    }

    let mut basic_success = None;
    if wants.basic && config.attack.basic_trials > 0 {
        basic_success = Some(timer.time("attack-basic", || {
            let setup = basic_setup(tax, &config.attack.category, bloom, privacy)?;
            attacks::run_basic_game(
                &setup,
                config.attack.basic_trials,
                rng::derive_seed(config.seed, &point_tags(&point, "basic")),
            )
            .map(|r| r.success_rate)
        })?);
    }

    let mut advanced_success = None;
    if wants.advanced {
        advanced_success = Some(timer.time("attack-advanced", || {
            run_advanced(config, tax, &bloom, &privacy, rng::derive_seed(config.seed, &point_tags(&point, "advanced")))
                .map(|r| r.success_rate)
        })?);
    }

    let record = GridRecord {
        config_hash: config_hash.to_string(),
        epsilon: match point.privacy {
            PrivacySpec::Epsilon { epsilon, .. } => epsilon,
            PrivacySpec::Direct { .. } => budget.epsilon1,
        },
        m: bloom.m,
        k: bloom.k,
        f: privacy.f,
        p: privacy.p,
        q: privacy.q,
        epsilon1: budget.epsilon1,
        epsilon2: budget.epsilon2,
        p_prime: budget.p_prime,
        q_prime: budget.q_prime,
        decoder: decoder_metrics,
        clustering_utility: utility,
        basic_success,
        advanced_success,
        privacy: advanced_success.map(|s| 1.0 - s),
    };
    Ok((record, timer))
}

/// Basic-game setup whose candidates are the classes of one category.
pub fn basic_setup(
    taxonomy: &Taxonomy,
    category: &str,
    bloom: BloomParams,
    privacy: PrivacyParams,
) -> Result<AttackSetup> {
    let (_, cat) = taxonomy
        .category(category)
        .ok_or_else(|| Error::param(format!("unknown category `{category}`")))?;
    AttackSetup::new(cat.classes.clone(), bloom, privacy)
}

fn run_advanced(
    config: &ExperimentConfig,
    taxonomy: &Taxonomy,
    bloom: &BloomParams,
    privacy: &PrivacyParams,
    seed: u64,
) -> Result<AttackResult> {
    let (_, train, test) = config.data_sizes();
    let game = AdvancedGame {
        category: config.attack.category.clone(),
        train_size: train,
        test_size: test,
        class_weights: config.data.class_weights.clone(),
    };
    let decoder_config = config.decoder.mlp(bloom.m, 2, 0);
    attacks::run_advanced_game(taxonomy, &game, privacy, bloom, &decoder_config, seed).map(|o| o.result)
}

fn run_grid(config: &ExperimentConfig, kind: ExperimentKind, points: Vec<GridPoint>, wants: Wants) -> Result<RunOutput> {
    let start = Instant::now();
    let config_hash = config.config_hash();
    let mut timer = Timer::default();
    let prep = prepare(config, &mut timer)?;
    let results = points
        .par_iter()
        .map(|p| run_point(config, &prep, *p, wants, &config_hash))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::with_capacity(results.len());
    for (i, (record, t)) in results.into_iter().enumerate() {
        timer.absorb(&format!("point{i}"), t);
        records.push(record);
    }
    records.sort_by(|a, b| {
        let (ka, kb) = (a.sort_key(), b.sort_key());
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)).then(ka.2.cmp(&kb.2)).then(ka.3.total_cmp(&kb.3))
    });
    let (profiles, train, test) = config.data_sizes();
    let report = ExperimentReport {
        kind,
        config_hash: config_hash.clone(),
        seed: config.seed,
        taxonomy: prep.taxonomy.name.clone(),
        profiles,
        train,
        test,
        records,
        intersection: None,
    };
    let info = RunInfo {
        config_hash,
        seed: config.seed,
        unix_timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        total_seconds: start.elapsed().as_secs_f64(),
        stages: timer.stages,
    };
    Ok(RunOutput { report, info })
}

/// Generates, perturbs, decodes and clusters once at the configured privacy level.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<RunOutput> {
    let point = config.base_point().stage("config")?;
    run_grid(
        config,
        ExperimentKind::Pipeline,
        vec![point],
        Wants {
            utility: true,
            basic: config.attack.basic_trials > 0,
            advanced: config.attack.advanced,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Epsilon,
    BloomSize,
    HashCount,
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" => Ok(SweepKind::Epsilon),
            "bloom_size" | "bloom-size" => Ok(SweepKind::BloomSize),
            "hash_count" | "hash-count" => Ok(SweepKind::HashCount),
            other => Err(Error::param(format!("unknown sweep `{other}`"))),
        }
    }
}

fn sweep_points(config: &ExperimentConfig, kind: SweepKind) -> Result<Vec<GridPoint>> {
    let base = config.base_point()?;
    let fixed = config.privacy.with_epsilon(config.sweep.fixed_epsilon);
    let points: Vec<GridPoint> = match kind {
        SweepKind::Epsilon => config
            .sweep
            .epsilons
            .iter()
            .map(|&e| GridPoint {
                privacy: config.privacy.with_epsilon(e),
                ..base
            })
            .collect(),
        SweepKind::BloomSize => config
            .sweep
            .ms
            .iter()
            .map(|&m| {
                let b = config.bloom_with(m, config.bloom.k)?;
                Ok(GridPoint {
                    privacy: fixed,
                    m,
                    k: b.k,
                })
            })
            .collect::<Result<_>>()?,
        SweepKind::HashCount => config
            .sweep
            .ks
            .iter()
            .map(|&k| GridPoint { privacy: fixed, k, ..base })
            .collect(),
    };
    if points.is_empty() {
        return Err(Error::EmptyInput(format!("the {kind:?} grid is empty")));
    }
    Ok(points)
}

/// One pipeline run per grid point on a shared dataset, re-perturbed at each point.
pub fn run_sweep(config: &ExperimentConfig, kind: SweepKind) -> Result<RunOutput> {
    let points = sweep_points(config, kind).stage("config")?;
    let kind = match kind {
        SweepKind::Epsilon => ExperimentKind::SweepEpsilon,
        SweepKind::BloomSize => ExperimentKind::SweepBloomSize,
        SweepKind::HashCount => ExperimentKind::SweepHashCount,
    };
    run_grid(
        config,
        kind,
        points,
        Wants {
            utility: true,
            basic: config.attack.basic_trials > 0,
            advanced: config.attack.advanced,
        },
    )
}

/// Linear interpolation of the first crossing of two curves sampled on the
/// same increasing grid.
pub fn find_intersection(xs: &[f64], utility: &[f64], privacy: &[f64]) -> Intersection {
    let diff: Vec<f64> = utility.iter().zip(privacy).map(|(u, p)| u - p).collect();
    for i in 0..xs.len() {
        if diff[i] == 0.0 {
            return Intersection::Found {
                epsilon: xs[i],
                utility: utility[i],
                privacy: privacy[i],
            };
        }
        if i + 1 < xs.len() && diff[i].signum() != diff[i + 1].signum() && diff[i + 1] != 0.0 {
            let t = diff[i] / (diff[i] - diff[i + 1]);
            let lerp = |a: f64, b: f64| a + t * (b - a);
            return Intersection::Found {
                epsilon: lerp(xs[i], xs[i + 1]),
                utility: lerp(utility[i], utility[i + 1]),
                privacy: lerp(privacy[i], privacy[i + 1]),
            };
        }
    }
    Intersection::NoIntersection
}

/// Utility (clustering agreement) and privacy (1 − advanced-adversary
/// success) over the budget grid, plus their crossing point.
pub fn run_tradeoff(config: &ExperimentConfig) -> Result<RunOutput> {
    let eps = &config.sweep.epsilons;
    let lo = eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if eps.is_empty() || lo > 0.1 || hi < 2.4 {
        return Err(Error::Stage {
            stage: "config",
            source: Box::new(Error::param("the trade-off grid must span at least [0.1, 2.4]")),
        });
    }
    let points = sweep_points(config, SweepKind::Epsilon).stage("config")?;
    let mut out = run_grid(
        config,
        ExperimentKind::Tradeoff,
        points,
        Wants {
            utility: true,
            basic: false,
            advanced: true,
        },
    )?;
    let records = &out.report.records;
    let xs: Vec<f64> = records.iter().map(|r| r.epsilon).collect();
    let u: Vec<f64> = records.iter().map(|r| r.clustering_utility.unwrap_or(f64::NAN)).collect();
    let p: Vec<f64> = records.iter().map(|r| r.privacy.unwrap_or(f64::NAN)).collect();
    out.report.intersection = Some(find_intersection(&xs, &u, &p));
    Ok(out)
}

/// WCSS for each K in the configured range on the clean features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowReport {
    pub scan: Vec<(usize, f64)>,
    pub elbow: Option<usize>,
    pub clustering: ClusteringResult,
}

pub fn run_elbow(config: &ExperimentConfig) -> Result<ElbowReport> {
    let mut timer = Timer::default();
    let prep = prepare(config, &mut timer)?;
    let c = &config.clustering;
    let scan = clustering::elbow_scan(&prep.clean_features, c.k_min, c.k_max, kmeans_seed(config), &c.options())
        .stage("elbow")?;
    Ok(ElbowReport {
        elbow: clustering::elbow_point(&scan),
        scan,
        clustering: prep.clean_clustering,
    })
}

/// Basic-game success for every (ε, k) of the sweep grids at the configured filter size.
pub fn run_basic_attack_grid(config: &ExperimentConfig) -> Result<Vec<(f64, usize, AttackResult)>> {
    config.validate().stage("config")?;
    if config.attack.basic_trials == 0 {
        return Err(Error::param("attack.basic_trials must be >= 1")).stage("config");
    }
    let tax = config.taxonomy();
    let m = config.bloom_params()?.m;
    let grid: Vec<(f64, usize)> = config
        .sweep
        .epsilons
        .iter()
        .flat_map(|&e| config.sweep.ks.iter().map(move |&k| (e, k)))
        .collect();
    if grid.is_empty() {
        return Err(Error::EmptyInput("empty attack grid".into())).stage("config");
    }
    grid.par_iter()
        .map(|&(e, k)| {
            let bloom = config.bloom_with(m, Some(k))?;
            let privacy = config.privacy.with_epsilon(e).resolve(k)?;
            let setup = basic_setup(&tax, &config.attack.category, bloom, privacy)?;
            let seed = rng::derive_seed(config.seed, &[rng::tag_str("basic-grid"), e.to_bits(), k as u64]);
            Ok((e, k, attacks::run_basic_game(&setup, config.attack.basic_trials, seed)?))
        })
        .collect::<Result<Vec<_>>>()
        .stage("attack-basic")
}

/// Advanced-game success at every ε of the sweep grid.
pub fn run_advanced_attack_grid(config: &ExperimentConfig) -> Result<Vec<(f64, usize, AttackResult)>> {
    config.validate().stage("config")?;
    let tax = config.taxonomy();
    let bloom = config.bloom_params()?;
    config
        .sweep
        .epsilons
        .par_iter()
        .map(|&e| {
            let privacy = config.privacy.with_epsilon(e).resolve(bloom.k)?;
            let seed = rng::derive_seed(config.seed, &[rng::tag_str("advanced-grid"), e.to_bits()]);
            Ok((e, bloom.k, run_advanced(config, &tax, &bloom, &privacy, seed)?))
        })
        .collect::<Result<Vec<_>>>()
        .stage("attack-advanced")
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn num(x: f64) -> String {
    if x.is_infinite() {
        "unbounded".into()
    } else {
        x.to_string()
    }
}

impl ExperimentReport {
    /// One row per record. Per-category decoder accuracies follow the fixed columns.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "epsilon,epsilon1,epsilon2,m,k,f,p,q,p_prime,q_prime,clustering_utility,basic_success,advanced_success,privacy",
        );
        if let Some(first) = self.records.first() {
            for c in &first.decoder {
                write!(s, ",{}_accuracy", c.category).unwrap();
            }
        }
        s.push('\n');
        for r in &self.records {
            write!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                num(r.epsilon),
                num(r.epsilon1),
                num(r.epsilon2),
                r.m,
                r.k,
                r.f,
                r.p,
                r.q,
                r.p_prime,
                r.q_prime,
                opt(r.clustering_utility),
                opt(r.basic_success),
                opt(r.advanced_success),
                opt(r.privacy)
            )
            .unwrap();
            for c in &r.decoder {
                write!(s, ",{}", c.accuracy).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl ElbowReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("K,wcss\n");
        for (k, w) in &self.scan {
            writeln!(s, "{k},{w}").unwrap();
        }
        s
    }
}

const RECORD_FIELDS: &[(&str, &str)] = &[
    ("config_hash", "string"),
    ("epsilon", "budget"),
    ("m", "integer"),
    ("k", "integer"),
    ("f", "number"),
    ("p", "number"),
    ("q", "number"),
    ("epsilon1", "budget"),
    ("epsilon2", "budget"),
    ("p_prime", "number"),
    ("q_prime", "number"),
    ("decoder", "array"),
    ("clustering_utility", "number?"),
    ("basic_success", "number?"),
    ("advanced_success", "number?"),
    ("privacy", "number?"),
];

const REPORT_FIELDS: &[(&str, &str)] = &[
    ("kind", "string"),
    ("config_hash", "string"),
    ("seed", "integer"),
    ("taxonomy", "string"),
    ("profiles", "integer"),
    ("train", "integer"),
    ("test", "integer"),
    ("records", "array"),
    ("intersection", "object?"),
];

fn check_fields(obj: &serde_json::Value, fields: &[(&str, &str)], at: &str) -> Result<()> {
    use serde_json::Value;
    let map = obj
        .as_object()
        .ok_or_else(|| Error::param(format!("{at}: expected an object")))?;
    for (name, ty) in fields {
        let v = map
            .get(*name)
            .ok_or_else(|| Error::param(format!("{at}: missing field `{name}`")))?;
        let ok = match (*ty, v) {
            ("string", Value::String(_)) => true,
            ("integer", Value::Number(n)) => n.is_u64(),
            ("number", Value::Number(_)) => true,
            ("number?", Value::Number(_) | Value::Null) => true,
            ("budget", Value::Number(_)) => true,
            ("budget", Value::String(s)) => s == "unbounded",
            ("array", Value::Array(_)) => true,
            ("object?", Value::Object(_) | Value::Null) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::param(format!("{at}: field `{name}` is not of type {ty}")));
        }
    }
    Ok(())
}

/// Checks field presence and JSON types of a serialized report.
pub fn validate_report_json(value: &serde_json::Value) -> Result<()> {
    check_fields(value, REPORT_FIELDS, "report")?;
    let hash = value["config_hash"].as_str().unwrap_or_default();
    for (i, r) in value["records"].as_array().into_iter().flatten().enumerate() {
        let at = format!("records[{i}]");
        check_fields(r, RECORD_FIELDS, &at)?;
        if r["config_hash"].as_str() != Some(hash) {
            return Err(Error::param(format!("{at}: config hash differs from the report's")));
        }
    }
    Ok(())
}

/// Writes `report.json`, `run_info.json` and the kind's CSV into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), out.report.to_json()?)?;
    std::fs::write(dir.join("run_info.json"), serde_json::to_string_pretty(&out.info)?)?;
    std::fs::write(dir.join(out.report.kind.csv_name()), out.report.to_csv())?;
    Ok(())
}

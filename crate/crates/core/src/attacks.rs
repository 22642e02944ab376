//! Adversary games against perturbed reports.
//!
//! * basic: Bayesian guess of a single encoded preference from one report;
//! * advanced: a trained decoder recovering one category of full profiles;
//! * averaging: many reports of one client averaged bit by bit.

use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloom::{self, BitVector, BloomParams};
use crate::decoder::{self, ClassificationReport, MlpConfig, Sample};
use crate::error::{Error, Result};
use crate::perturb::{self, ClientState, PrivacyParams};
use crate::profile::{self, Taxonomy};
use crate::rng;

/// Probability that a perturbed bit reads 1 under the single-round model
/// with per-bit budget `ε / 2Δ`.
pub fn single_bit_flip_prob(epsilon: f64, delta: usize, original_bit: bool) -> f64 {
    let e = (epsilon / (2.0 * delta as f64)).exp();
    if original_bit {
        e / (e + 1.0)
    } else {
        1.0 / (e + 1.0)
    }
}

/// Per-bit likelihood model used by the Bayesian adversary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ChannelModel {
    /// The true two-round channel `(p', q')` of the configured noise.
    Exact,
    /// The single-round abstraction with budget `epsilon` and `Δ = delta`.
    Abstract { epsilon: f64, delta: usize },
}

#[derive(Debug, Clone)]
pub struct AttackSetup {
    pub universe: Vec<String>,
    pub bloom: BloomParams,
    pub privacy: PrivacyParams,
    pub prior: Vec<f64>,
    pub model: ChannelModel,
    encodings: Vec<BitVector>,
}

impl AttackSetup {
    /// Uniform prior, exact channel.
    pub fn new(universe: Vec<String>, bloom: BloomParams, privacy: PrivacyParams) -> Result<Self> {
        let n = universe.len();
        Self::with_prior(universe, bloom, privacy, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn with_prior(
        universe: Vec<String>,
        bloom: BloomParams,
        privacy: PrivacyParams,
        prior: Vec<f64>,
    ) -> Result<Self> {
        if universe.len() < 2 {
            return Err(Error::param("the preference universe needs at least 2 values"));
        }
        if prior.len() != universe.len() {
            return Err(Error::DimensionMismatch {
                expected: universe.len(),
                actual: prior.len(),
            });
        }
        if prior.iter().any(|p| !(*p >= 0.0)) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::param("prior must be nonnegative and sum to 1"));
        }
        if privacy.k != bloom.k {
            return Err(Error::param("privacy and bloom hash counts differ"));
        }
        let encodings = universe
            .iter()
            .map(|v| bloom::encode([v.as_str()], &bloom))
            .collect::<Result<Vec<_>>>()?;
        Ok(AttackSetup {
            universe,
            bloom,
            privacy,
            prior,
            model: ChannelModel::Exact,
            encodings,
        })
    }

    pub fn with_model(mut self, model: ChannelModel) -> Self {
        self.model = model;
        self
    }

    pub fn encoding(&self, index: usize) -> &BitVector {
        &self.encodings[index]
    }

    fn bit_probs(&self) -> (f64, f64) {
        match self.model {
            ChannelModel::Exact => self.privacy.channel(),
            ChannelModel::Abstract { epsilon, delta } => (
                single_bit_flip_prob(epsilon, delta, false),
                single_bit_flip_prob(epsilon, delta, true),
            ),
        }
    }
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Maximum a posteriori guess of the encoded value, computed in the log domain.
/// Returns the index into the universe and the normalized posterior.
pub fn bayes_guess(setup: &AttackSetup, observed: &BitVector) -> Result<(usize, Vec<f64>)> {
    if observed.len() != setup.bloom.m {
        return Err(Error::DimensionMismatch {
            expected: setup.bloom.m,
            actual: observed.len(),
        });
    }
    let (p1_given0, p1_given1) = setup.bit_probs();
    // log-probability of an observed bit given the clean bit
    let table = [
        [ln_or_neg_inf(1.0 - p1_given0), ln_or_neg_inf(p1_given0)],
        [ln_or_neg_inf(1.0 - p1_given1), ln_or_neg_inf(p1_given1)],
    ];
    let obs: Vec<bool> = observed.iter().collect();
    let log_post: Vec<f64> = setup
        .encodings
        .iter()
        .zip(&setup.prior)
        .map(|(enc, &pi)| {
            let ll: f64 = obs
                .iter()
                .enumerate()
                .map(|(i, &o)| table[enc.get(i) as usize][o as usize])
                .sum();
            ln_or_neg_inf(pi) + ll
        })
        .collect();
    let max = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::param("observation has zero likelihood under every candidate"));
    }
    let weights: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let posterior: Vec<f64> = weights.iter().map(|w| w / total).collect();
    Ok((decoder::argmax(&log_post), posterior))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// `(guess, truth)` per trial.
    pub log: Vec<(usize, usize)>,
}

impl AttackResult {
    pub fn from_log(log: Vec<(usize, usize)>) -> Self {
        let trials = log.len();
        let successes = log.iter().filter(|(g, t)| g == t).count();
        AttackResult {
            trials,
            successes,
            success_rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            log,
        }
    }
}

/// Repeated single-preference guessing: each trial samples a value from the
/// prior, perturbs its filter through both rounds and asks for a guess.
pub fn run_basic_game(setup: &AttackSetup, trials: usize, seed: u64) -> Result<AttackResult> {
    if trials == 0 {
        return Err(Error::param("trials must be >= 1"));
    }
    let prior = WeightedIndex::new(&setup.prior).map_err(|e| Error::param(e.to_string()))?;
    let log = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::substream(seed, &[rng::tag_str("basic-game"), t as u64]);
            let truth = prior.sample(&mut r);
            let b_prime = perturb::prr(&setup.encodings[truth], setup.privacy.f, &mut r)?;
            let report = perturb::irr(&b_prime, setup.privacy.p, setup.privacy.q, &mut r)?;
            let (guess, _) = bayes_guess(setup, &report)?;
            Ok((guess, truth))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackResult::from_log(log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvancedGame {
    pub category: String,
    pub train_size: usize,
    pub test_size: usize,
    pub class_weights: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvancedOutcome {
    pub result: AttackResult,
    pub report: ClassificationReport,
}

/// Labeled reports for one category: fresh profiles, each perturbed as its
/// own client.
pub fn labeled_reports(
    taxonomy: &Taxonomy,
    category: usize,
    count: usize,
    class_weights: Option<&[Vec<f64>]>,
    bloom: &BloomParams,
    privacy: &PrivacyParams,
    seed: u64,
) -> Result<Vec<Sample>> {
    let dataset = profile::generate_dataset(taxonomy, count, class_weights, seed)?;
    let state = ClientState::new(rng::derive_seed(seed, &[rng::tag_str("clients")]));
    let reports = perturb::perturb_profiles(&state, &dataset, "c", bloom, privacy)?;
    Ok(reports
        .into_iter()
        .zip(&dataset.profiles)
        .map(|(bv, p)| (bv, p.selections[category]))
        .collect())
}

/// An adversary holding labeled perturbed profiles trains the decoder and is
/// scored by its accuracy on fresh reports.
pub fn run_advanced_game(
    taxonomy: &Taxonomy,
    game: &AdvancedGame,
    privacy: &PrivacyParams,
    bloom: &BloomParams,
    decoder_config: &MlpConfig,
    seed: u64,
) -> Result<AdvancedOutcome> {
    if game.train_size == 0 || game.test_size == 0 {
        return Err(Error::param("train and test sizes must be >= 1"));
    }
    let (cat, category) = taxonomy
        .category(&game.category)
        .ok_or_else(|| Error::param(format!("unknown category `{}`", game.category)))?;
    let weights = game.class_weights.as_deref();
    let train = labeled_reports(
        taxonomy,
        cat,
        game.train_size,
        weights,
        bloom,
        privacy,
        rng::derive_seed(seed, &[rng::tag_str("adv-train")]),
    )?;
    let test = labeled_reports(
        taxonomy,
        cat,
        game.test_size,
        weights,
        bloom,
        privacy,
        rng::derive_seed(seed, &[rng::tag_str("adv-test")]),
    )?;
    let config = MlpConfig {
        input_size: bloom.m,
        output_size: category.classes.len(),
        seed: rng::derive_seed(seed, &[rng::tag_str("adv-model")]),
        ..decoder_config.clone()
    };
    let model = decoder::train(&train, &config)?;
    let mut log = Vec::with_capacity(test.len());
    for (bv, y) in &test {
        log.push((decoder::predict(&model, bv)?.0, *y));
    }
    let truth: Vec<usize> = log.iter().map(|(_, t)| *t).collect();
    let guesses: Vec<usize> = log.iter().map(|(g, _)| *g).collect();
    let report = ClassificationReport::from_predictions(&truth, &guesses, category.classes.len())?;
    Ok(AdvancedOutcome {
        result: AttackResult::from_log(log),
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingVerdict {
    /// The estimate matches the clean filter only because the permanent
    /// round left it unchanged.
    CleanRecoveredWithoutPermanentNoise,
    /// The estimate matches the memoized permanent output, not the clean filter.
    PermanentOnly,
    /// The estimate matches neither exactly.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingOutcome {
    pub observations: usize,
    pub per_bit_means: Vec<f64>,
    pub threshold: f64,
    pub estimate: BitVector,
    pub clean: BitVector,
    pub permanent: BitVector,
    pub hamming_to_clean: usize,
    pub hamming_to_permanent: usize,
    pub verdict: AveragingVerdict,
}

/// Collects `observations` reports from one client with a fixed preference
/// set, averages them per bit and thresholds at `(p' + q') / 2`.
pub fn run_averaging_game(
    client_values: &[&str],
    privacy: &PrivacyParams,
    bloom: &BloomParams,
    observations: usize,
    seed: u64,
) -> Result<AveragingOutcome> {
    if observations == 0 {
        return Err(Error::param("observations must be >= 1"));
    }
    let state = ClientState::new(seed);
    let client = "target";
    let mut ones = vec![0u64; bloom.m];
    for _ in 0..observations {
        let report = state.perturb_report(client, client_values, bloom, privacy)?;
        for i in report.bits.ones_indices() {
            ones[i] += 1;
        }
    }
    let permanent = state
        .memoized(client, client_values, bloom)
        .expect("memo populated by the first report");
    let clean = bloom::encode(client_values.iter().copied(), bloom)?;
    let per_bit_means: Vec<f64> = ones.iter().map(|&c| c as f64 / observations as f64).collect();
    let (p_prime, q_prime) = privacy.channel();
    let threshold = (p_prime + q_prime) / 2.0;
    let estimate = BitVector::from_indices(
        bloom.m,
        per_bit_means
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > threshold)
            .map(|(i, _)| i),
    );
    let hamming_to_clean = estimate.hamming(&clean);
    let hamming_to_permanent = estimate.hamming(&permanent);
    let verdict = if estimate == permanent && permanent == clean {
        AveragingVerdict::CleanRecoveredWithoutPermanentNoise
    } else if estimate == permanent {
        AveragingVerdict::PermanentOnly
    } else {
        AveragingVerdict::Inconclusive
    };
    Ok(AveragingOutcome {
        observations,
        per_bit_means,
        threshold,
        estimate,
        clean,
        permanent,
        hamming_to_clean,
        hamming_to_permanent,
        verdict,
    })
}

/// One row per grid point: `epsilon,k,trials,successes,success_rate`.
pub fn attack_grid_csv(rows: &[(f64, usize, &AttackResult)]) -> String {
    let mut s = String::from("epsilon,k,trials,successes,success_rate\n");
    for (eps, k, r) in rows {
        writeln!(s, "{eps},{k},{},{},{}", r.trials, r.successes, r.success_rate).unwrap();
    }
    s
}

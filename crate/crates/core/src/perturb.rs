//! Two-round randomized response over Bloom filters.
//!
//! The permanent round (PRR) runs once per client and preference set and is
//! memoized in [`ClientState`]; the instantaneous round (IRR) draws fresh
//! noise for every report. Budgets are accounted per round.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bloom::{self, BitVector, BloomParams};
use crate::error::{Error, Result};
use crate::rng;

/// PRR output: each bit is 1 w.p. f/2, 0 w.p. f/2, and kept w.p. 1-f.
pub fn prr<R: Rng + ?Sized>(b: &BitVector, f: f64, rng: &mut R) -> Result<BitVector> {
    check_unit("f", f)?;
    let half = f / 2.0;
    let mut out = b.clone();
    for i in 0..b.len() {
        let u: f64 = rng.gen();
        if u < half {
            out.set(i, true);
        } else if u < f {
            out.set(i, false);
        }
    }
    Ok(out)
}

/// IRR output: a bit reads 1 w.p. `q` where the input is 1 and w.p. `p` where it is 0.
pub fn irr<R: Rng + ?Sized>(b_prime: &BitVector, p: f64, q: f64, rng: &mut R) -> Result<BitVector> {
    check_unit("p", p)?;
    check_unit("q", q)?;
    let mut out = BitVector::zeros(b_prime.len());
    for i in 0..b_prime.len() {
        let threshold = if b_prime.get(i) { q } else { p };
        if rng.gen::<f64>() < threshold {
            out.set(i, true);
        }
    }
    Ok(out)
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::param(format!("{name} = {x} outside [0,1]")))
    }
}

/// Long-term budget of the permanent round, `k ln((1 - f/2) / (f/2))`.
/// Returns `f64::INFINITY` for `f = 0` (no permanent noise).
pub fn epsilon1_of_f(f: f64, k: usize) -> Result<f64> {
    check_unit("f", f)?;
    if k == 0 {
        return Err(Error::param("hash count k must be positive"));
    }
    if f == 0.0 {
        return Ok(f64::INFINITY);
    }
    let half = f / 2.0;
    Ok(k as f64 * ((1.0 - half) / half).ln())
}

/// Inverse of [`epsilon1_of_f`]: `f = 2 / (1 + e^(ε/k))`.
pub fn f_of_epsilon1(epsilon: f64, k: usize) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    if k == 0 {
        return Err(Error::param("hash count k must be positive"));
    }
    Ok(2.0 / (1.0 + (epsilon / k as f64).exp()))
}

/// End-to-end probabilities that a reported bit reads 1 given the clean
/// Bloom bit was 0 (`p'`) or 1 (`q'`).
pub fn channel_probs(f: f64, p: f64, q: f64) -> (f64, f64) {
    let half = f / 2.0;
    let p_prime = half * q + (1.0 - half) * p;
    let q_prime = (1.0 - half) * q + half * p;
    (p_prime, q_prime)
}

/// Per-report budget `k ln(q'(1-p') / (p'(1-q')))`.
///
/// A channel with `q' = p'` carries no information and scores 0. `p' = 0`
/// or `q' = 1` makes the ratio unbounded (`f64::INFINITY`).
pub fn epsilon2_of(f: f64, p: f64, q: f64, k: usize) -> Result<f64> {
    check_unit("f", f)?;
    check_unit("p", p)?;
    check_unit("q", q)?;
    let (p_prime, q_prime) = channel_probs(f, p, q);
    if q_prime < p_prime {
        return Err(Error::InvalidChannel { p_prime, q_prime });
    }
    if q_prime == p_prime {
        return Ok(0.0);
    }
    if p_prime == 0.0 || q_prime == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(k as f64 * ((q_prime * (1.0 - p_prime)) / (p_prime * (1.0 - q_prime))).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub f: f64,
    pub p: f64,
    pub q: f64,
    pub k: usize,
}

impl PrivacyParams {
    pub fn new(f: f64, p: f64, q: f64, k: usize) -> Result<Self> {
        let params = PrivacyParams { f, p, q, k };
        params.check(false)?;
        Ok(params)
    }

    /// Like [`PrivacyParams::new`] but admits the useless `p = q` channel.
    pub fn new_degenerate(f: f64, p: f64, q: f64, k: usize) -> Result<Self> {
        let params = PrivacyParams { f, p, q, k };
        params.check(true)?;
        Ok(params)
    }

    /// No noise in either round.
    pub fn noiseless(k: usize) -> Self {
        PrivacyParams { f: 0.0, p: 0.0, q: 1.0, k }
    }

    /// Permanent noise derived from a long-term budget ε₁, with the given IRR pair.
    pub fn from_epsilon1(epsilon1: f64, p: f64, q: f64, k: usize) -> Result<Self> {
        Self::new(f_of_epsilon1(epsilon1, k)?, p, q, k)
    }

    fn check(&self, allow_equal: bool) -> Result<()> {
        check_unit("f", self.f)?;
        check_unit("p", self.p)?;
        check_unit("q", self.q)?;
        if self.k == 0 {
            return Err(Error::param("hash count k must be positive"));
        }
        let ok = if allow_equal { self.p <= self.q } else { self.p < self.q };
        if !ok {
            return Err(Error::param(format!(
                "IRR needs p < q (got p = {}, q = {})",
                self.p, self.q
            )));
        }
        Ok(())
    }

    pub fn channel(&self) -> (f64, f64) {
        channel_probs(self.f, self.p, self.q)
    }

    pub fn budget(&self) -> Result<BudgetReport> {
        let (p_prime, q_prime) = self.channel();
        Ok(BudgetReport {
            epsilon1: epsilon1_of_f(self.f, self.k)?,
            epsilon2: epsilon2_of(self.f, self.p, self.q, self.k)?,
            p_prime,
            q_prime,
        })
    }
}

/// How a configuration expresses its privacy level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PrivacySpec {
    /// Explicit noise parameters.
    Direct { f: f64, p: f64, q: f64 },
    /// A single budget taken as the permanent-round ε₁.
    Epsilon {
        epsilon: f64,
        #[serde(default = "default_p")]
        p: f64,
        #[serde(default = "default_q")]
        q: f64,
    },
}

pub const DEFAULT_P: f64 = 0.5;
pub const DEFAULT_Q: f64 = 0.75;

fn default_p() -> f64 {
    DEFAULT_P
}

fn default_q() -> f64 {
    DEFAULT_Q
}

impl PrivacySpec {
    pub fn epsilon(epsilon: f64) -> Self {
        PrivacySpec::Epsilon {
            epsilon,
            p: DEFAULT_P,
            q: DEFAULT_Q,
        }
    }

    pub fn resolve(&self, k: usize) -> Result<PrivacyParams> {
        match *self {
            PrivacySpec::Direct { f, p, q } => PrivacyParams::new(f, p, q, k),
            PrivacySpec::Epsilon { epsilon, p, q } => PrivacyParams::from_epsilon1(epsilon, p, q, k),
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        match *self {
            PrivacySpec::Direct { p, q, .. } | PrivacySpec::Epsilon { p, q, .. } => {
                PrivacySpec::Epsilon { epsilon, p, q }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    #[serde(with = "unbounded")]
    pub epsilon1: f64,
    #[serde(with = "unbounded")]
    pub epsilon2: f64,
    pub p_prime: f64,
    pub q_prime: f64,
}

/// Serializes infinite budgets as the string `"unbounded"`.
pub mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() {
            s.serialize_str("unbounded")
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) if s == "unbounded" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad budget `{s}`"))),
        }
    }
}

/// Digest of a preference set that ignores order and duplicates and is
/// bound to the filter parameters.
pub fn preference_digest(values: &[&str], bloom: &BloomParams) -> u64 {
    let mut sorted: Vec<&str> = values.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut h = Sha256::new();
    h.update(format!("m={};k={};seed={}", bloom.m, bloom.k, bloom.hash_seed).as_bytes());
    for v in sorted {
        h.update((v.len() as u64).to_le_bytes());
        h.update(v.as_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// One report produced by a client.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub bits: BitVector,
    pub session_counter: u64,
}

/// Per-client memo of permanent-round outputs plus session counters.
///
/// The memoized vector for a (client, preference set) is computed once from
/// a substream of `rng_seed` and never replaced.
#[derive(Debug)]
pub struct ClientState {
    rng_seed: u64,
    memo: RwLock<HashMap<(String, u64), Arc<BitVector>>>,
    sessions: Mutex<HashMap<String, u64>>,
}

impl ClientState {
    pub fn new(rng_seed: u64) -> Self {
        ClientState {
            rng_seed,
            memo: RwLock::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// The memoized permanent output, computing and storing it on first use.
    pub fn permanent(
        &self,
        client_id: &str,
        values: &[&str],
        bloom: &BloomParams,
        f: f64,
    ) -> Result<Arc<BitVector>> {
        let digest = preference_digest(values, bloom);
        let key = (client_id.to_string(), digest);
        if let Some(b) = self.memo.read().get(&key) {
            return Ok(Arc::clone(b));
        }
        let clean = bloom::encode(values.iter().copied(), bloom)?;
        let mut stream = rng::substream(
            self.rng_seed,
            &[rng::tag_str("prr"), rng::tag_str(client_id), digest],
        );
        let fresh = Arc::new(prr(&clean, f, &mut stream)?);
        let mut memo = self.memo.write();
        Ok(Arc::clone(memo.entry(key).or_insert(fresh)))
    }

    /// Test hook: the stored permanent output, if any.
    pub fn memoized(&self, client_id: &str, values: &[&str], bloom: &BloomParams) -> Option<BitVector> {
        let key = (client_id.to_string(), preference_digest(values, bloom));
        self.memo.read().get(&key).map(|b| (**b).clone())
    }

    pub fn memo_len(&self) -> usize {
        self.memo.read().len()
    }

    fn next_session(&self, client_id: &str) -> u64 {
        let mut sessions = self.sessions.lock();
        let counter = sessions.entry(client_id.to_string()).or_insert(0);
        let current = *counter;
        *counter += 1;
        current
    }

    /// Encodes, applies (or reuses) the permanent round, then draws a fresh
    /// instantaneous report.
    pub fn perturb_report(
        &self,
        client_id: &str,
        values: &[&str],
        bloom: &BloomParams,
        privacy: &PrivacyParams,
    ) -> Result<Report> {
        if privacy.k != bloom.k {
            return Err(Error::param(format!(
                "privacy k = {} differs from bloom k = {}",
                privacy.k, bloom.k
            )));
        }
        let b_prime = self.permanent(client_id, values, bloom, privacy.f)?;
        let session_counter = self.next_session(client_id);
        let mut stream = rng::substream(
            self.rng_seed,
            &[rng::tag_str("irr"), rng::tag_str(client_id), session_counter],
        );
        let bits = irr(&b_prime, privacy.p, privacy.q, &mut stream)?;
        Ok(Report {
            bits,
            session_counter,
        })
    }
}

/// Serialized form of one report (one JSON object per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub client_id: String,
    pub bits: BitVector,
    pub m: usize,
    pub k: usize,
    pub f: f64,
    pub p: f64,
    pub q: f64,
    #[serde(with = "unbounded")]
    pub epsilon1: f64,
    #[serde(with = "unbounded")]
    pub epsilon2: f64,
    pub session_counter: u64,
}

impl ReportRecord {
    pub fn new(client_id: &str, report: &Report, bloom: &BloomParams, privacy: &PrivacyParams) -> Result<Self> {
        let budget = privacy.budget()?;
        Ok(ReportRecord {
            client_id: client_id.to_string(),
            bits: report.bits.clone(),
            m: bloom.m,
            k: privacy.k,
            f: privacy.f,
            p: privacy.p,
            q: privacy.q,
            epsilon1: budget.epsilon1,
            epsilon2: budget.epsilon2,
            session_counter: report.session_counter,
        })
    }

    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let rec: ReportRecord = serde_json::from_str(line)?;
        if rec.bits.len() != rec.m {
            return Err(Error::DimensionMismatch {
                expected: rec.m,
                actual: rec.bits.len(),
            });
        }
        Ok(rec)
    }
}

/// Perturbs every profile of a dataset as if each came from its own client
/// (`<prefix><index>`), returning one report per profile in order.
pub fn perturb_profiles(
    state: &ClientState,
    dataset: &crate::profile::LabeledDataset,
    client_prefix: &str,
    bloom: &BloomParams,
    privacy: &PrivacyParams,
) -> Result<Vec<BitVector>> {
    use rayon::prelude::*;
    dataset
        .profiles
        .par_iter()
        .enumerate()
        .map(|(i, profile)| {
            let values = profile.values(&dataset.taxonomy);
            state
                .perturb_report(&format!("{client_prefix}{i}"), &values, bloom, privacy)
                .map(|r| r.bits)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn frac_ones(bv: &BitVector) -> f64 {
        bv.count_ones() as f64 / bv.len() as f64
    }

    #[test]
    fn prr_edge_cases() {
        let mut r = rng::substream(1, &[]);
        let b = BitVector::from_indices(100, [1, 5, 70]);
        assert_eq!(prr(&b, 0.0, &mut r).unwrap(), b);
        assert!(prr(&b, 1.5, &mut r).is_err());
        assert!(prr(&b, -0.1, &mut r).is_err());

        let full = prr(&BitVector::zeros(100_000), 1.0, &mut r).unwrap();
        assert!((0.495..=0.505).contains(&frac_ones(&full)));
        let half = prr(&BitVector::ones(100_000), 0.5, &mut r).unwrap();
        assert_abs_diff_eq!(frac_ones(&half), 0.75, epsilon = 0.005);
    }

    #[test]
    fn irr_edge_cases() {
        let mut r = rng::substream(2, &[]);
        let b = BitVector::from_indices(64, [0, 9, 63]);
        assert_eq!(irr(&b, 0.0, 1.0, &mut r).unwrap(), b);
        assert_eq!(irr(&b, 1.0, 1.0, &mut r).unwrap(), BitVector::ones(64));
        let out = irr(&BitVector::ones(100_000), 0.5, 0.75, &mut r).unwrap();
        assert_abs_diff_eq!(frac_ones(&out), 0.75, epsilon = 0.005);
        assert!(irr(&b, 0.5, 1.2, &mut r).is_err());
    }

    #[test]
    fn budgets() {
        assert_abs_diff_eq!(epsilon1_of_f(0.5, 2).unwrap(), 2.0 * 3f64.ln(), epsilon = 1e-12);
        assert_eq!(epsilon1_of_f(1.0, 7).unwrap(), 0.0);
        assert!(epsilon1_of_f(0.0, 2).unwrap().is_infinite());
        for i in 1..10 {
            let f = i as f64 / 10.0;
            for k in [1, 3, 15] {
                let back = f_of_epsilon1(epsilon1_of_f(f, k).unwrap(), k).unwrap();
                assert!((back - f).abs() < 1e-12);
            }
        }
        assert_abs_diff_eq!(f_of_epsilon1(3f64.ln(), 1).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f_of_epsilon1(0.8, 4).unwrap(), 2.0 / (1.0 + 0.2f64.exp()), epsilon = 1e-15);
        assert!((f_of_epsilon1(0.8, 4).unwrap() - 0.9003).abs() < 1e-4);
        assert!(f_of_epsilon1(1e4, 1).unwrap() < 1e-100);
        assert!(f_of_epsilon1(0.0, 1).is_err());
        assert!(f_of_epsilon1(-1.0, 1).is_err());
    }

    #[test]
    fn channel() {
        assert_eq!(channel_probs(0.0, 0.3, 0.8), (0.3, 0.8));
        let (a, b) = channel_probs(1.0, 0.3, 0.8);
        assert_abs_diff_eq!(a, 0.55, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.55, epsilon = 1e-15);
        let (pp, qp) = channel_probs(0.5, 0.5, 0.75);
        assert_abs_diff_eq!(pp, 0.5625, epsilon = 1e-15);
        assert_abs_diff_eq!(qp, 0.6875, epsilon = 1e-15);

        let e2 = epsilon2_of(0.5, 0.5, 0.75, 2).unwrap();
        let oracle = 2.0 * ((0.6875 * 0.4375) / (0.5625 * 0.3125f64)).ln();
        assert_abs_diff_eq!(e2, oracle, epsilon = 1e-12);
        assert!((e2 - 1.07429).abs() < 1e-5);
        assert_eq!(epsilon2_of(1.0, 0.2, 0.9, 3).unwrap(), 0.0);
        assert!(epsilon2_of(0.0, 0.0, 1.0, 3).unwrap().is_infinite());
        assert!(matches!(epsilon2_of(0.2, 0.8, 0.3, 3), Err(Error::InvalidChannel { .. })));
    }

    #[test]
    fn epsilon2_monotone_in_q() {
        let (f, p, k) = (0.4, 0.3, 3);
        let grid: Vec<f64> = (0..=60).map(|i| 0.31 + i as f64 * 0.01).collect();
        let vals: Vec<f64> = grid.iter().map(|&q| epsilon2_of(f, p, q, k).unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn privacy_param_validation() {
        assert!(PrivacyParams::new(0.5, 0.75, 0.5, 2).is_err());
        assert!(PrivacyParams::new(0.5, 0.5, 0.5, 2).is_err());
        assert!(PrivacyParams::new_degenerate(0.5, 0.5, 0.5, 2).is_ok());
        assert!(PrivacyParams::new(0.5, 0.5, 0.75, 0).is_err());
        let spec = PrivacySpec::epsilon(3f64.ln());
        let params = spec.resolve(1).unwrap();
        assert_abs_diff_eq!(params.f, 0.5, epsilon = 1e-15);
        assert_eq!((params.p, params.q), (DEFAULT_P, DEFAULT_Q));
    }

    fn bloom() -> BloomParams {
        BloomParams::new(144, 3, 27, 0.1, 42).unwrap()
    }

    #[test]
    fn memoized_permanent_output_is_reused() {
        let state = ClientState::new(9);
        let bp = bloom();
        let pp = PrivacyParams::new(0.5, 0.5, 0.75, 3).unwrap();
        let values = ["Action", "Jazz"];
        let r1 = state.perturb_report("alice", &values, &bp, &pp).unwrap();
        let stored = state.memoized("alice", &values, &bp).unwrap();
        let r2 = state.perturb_report("alice", &["Jazz", "Action"], &bp, &pp).unwrap();
        assert_eq!(state.memoized("alice", &values, &bp).unwrap(), stored);
        assert_eq!(state.memo_len(), 1);
        assert_eq!((r1.session_counter, r2.session_counter), (0, 1));
        assert_ne!(r1.bits, r2.bits);
        state.perturb_report("bob", &values, &bp, &pp).unwrap();
        assert_eq!(state.memo_len(), 2);
    }

    #[test]
    fn noiseless_report_is_clean_filter() {
        let state = ClientState::new(1);
        let bp = bloom();
        let r = state
            .perturb_report("c", &["Rock"], &bp, &PrivacyParams::noiseless(3))
            .unwrap();
        assert_eq!(r.bits, bloom::encode(["Rock"], &bp).unwrap());
    }

    #[test]
    fn mismatched_hash_count_is_rejected() {
        let state = ClientState::new(1);
        let pp = PrivacyParams::new(0.5, 0.5, 0.75, 4).unwrap();
        assert!(state.perturb_report("c", &["Rock"], &bloom(), &pp).is_err());
    }

    #[test]
    fn report_record_round_trip() {
        let state = ClientState::new(5);
        let bp = bloom();
        let pp = PrivacyParams::new(0.5, 0.5, 0.75, 3).unwrap();
        let r = state.perturb_report("dana", &["Pop"], &bp, &pp).unwrap();
        let rec = ReportRecord::new("dana", &r, &bp, &pp).unwrap();
        let line = rec.to_line().unwrap();
        assert_eq!(ReportRecord::from_line(&line).unwrap(), rec);
        assert_eq!(ReportRecord::from_line(&line).unwrap().to_line().unwrap(), line);

        let open = PrivacyParams::noiseless(3);
        let rec = ReportRecord::new("e", &r, &bp, &open).unwrap();
        let line = rec.to_line().unwrap();
        assert!(line.contains("\"epsilon1\":\"unbounded\""));
        assert!(ReportRecord::from_line(&line).unwrap().epsilon1.is_infinite());
    }

    proptest! {
        #[test]
        fn epsilon1_strictly_decreasing_in_f(a in 0.01f64..0.99, d in 0.001f64..0.5, k in 1usize..20) {
            let b = (a + d).min(1.0);
            prop_assume!(b > a);
            prop_assert!(epsilon1_of_f(a, k).unwrap() > epsilon1_of_f(b, k).unwrap());
            prop_assert!(f_of_epsilon1(a, k).unwrap() > f_of_epsilon1(a + d, k).unwrap());
        }

        #[test]
        fn channel_orders_bits(f in 0.0f64..0.999, p in 0.0f64..1.0, q in 0.0f64..1.0) {
            prop_assume!(q > p);
            let (pp, qp) = channel_probs(f, p, q);
            prop_assert!((0.0..=1.0).contains(&pp) && (0.0..=1.0).contains(&qp));
            prop_assert!(qp > pp);
        }

        #[test]
        fn perturbation_is_reproducible(seed: u64, f in 0.0f64..=1.0) {
            let b = BitVector::from_indices(80, [3, 17, 40]);
            let x = prr(&b, f, &mut rng::substream(seed, &[])).unwrap();
            let y = prr(&b, f, &mut rng::substream(seed, &[])).unwrap();
            prop_assert_eq!(x, y);
        }
    }
}

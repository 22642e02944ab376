//! Bloom filter sizing, hashing and encoding of preference values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::mix64;

/// Fixed-length bit array. Used for the clean Bloom filter, its permanent
/// perturbation and every instantaneous report.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut bv = Self::zeros(len);
        for i in 0..len {
            bv.set(i, true);
        }
        bv
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut bv = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            bv.set(i, b);
        }
        bv
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut bv = Self::zeros(len);
        for i in indices {
            bv.set(i, true);
        }
        bv
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn ones_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    /// True when every set bit of `other` is also set here.
    pub fn is_superset_of(&self, other: &BitVector) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & b == *b)
    }

    pub fn hamming(&self, other: &BitVector) -> usize {
        assert_eq!(self.len, other.len, "hamming distance needs equal lengths");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Writes the bits as 0.0/1.0 into `out`.
    pub fn write_f64(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.len);
        for (i, o) in out.iter_mut().enumerate() {
            *o = if self.get(i) { 1.0 } else { 0.0 };
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len];
        self.write_f64(&mut v);
        v
    }

    /// Packs bit `i` into byte `i / 8` at position `i % 8` (least significant first).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = vec![0u8; self.len.div_ceil(8)];
        for i in self.ones_indices() {
            bytes[i / 8] |= 1 << (i % 8);
        }
        bytes
    }

    pub fn from_bytes(len: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::DimensionMismatch {
                expected: len.div_ceil(8),
                actual: bytes.len(),
            });
        }
        let mut bv = Self::zeros(len);
        for (b, byte) in bytes.iter().enumerate() {
            for j in 0..8 {
                if byte >> j & 1 == 1 {
                    let i = b * 8 + j;
                    if i >= len {
                        return Err(Error::param(format!("padding bit {i} set beyond length {len}")));
                    }
                    bv.set(i, true);
                }
            }
        }
        Ok(bv)
    }

    /// `<len>:<lowercase hex of the packed bytes>`.
    pub fn to_hex_string(&self) -> String {
        format!("{}:{}", self.len, hex::encode(self.to_bytes()))
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector(")?;
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex_string())
    }
}

impl FromStr for BitVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (len, hex_part) = s
            .split_once(':')
            .ok_or_else(|| Error::param(format!("bit vector `{s}` lacks `len:` prefix")))?;
        let len: usize = len
            .parse()
            .map_err(|_| Error::param(format!("bad bit vector length `{len}`")))?;
        if hex_part.chars().any(|c| c.is_ascii_uppercase()) {
            return Err(Error::param("bit vector hex must be lowercase"));
        }
        let bytes = hex::decode(hex_part).map_err(|e| Error::param(e.to_string()))?;
        BitVector::from_bytes(len, &bytes)
    }
}

impl Serialize for BitVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex_string())
    }
}

impl<'de> Deserialize<'de> for BitVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Optimal filter size for `n` elements at false-positive rate `f_p`:
/// `ceil(-n ln f_p / (ln 2)^2)`.
pub fn optimal_m(n: usize, f_p: f64) -> Result<usize> {
    if n == 0 {
        return Err(Error::param("element count n must be positive"));
    }
    if !(f_p > 0.0 && f_p < 1.0) {
        return Err(Error::param(format!("false-positive rate {f_p} outside (0,1)")));
    }
    let ln2 = std::f64::consts::LN_2;
    Ok((-(n as f64) * f_p.ln() / (ln2 * ln2)).ceil() as usize)
}

/// Optimal hash count `max(1, round_half_up(m/n · ln 2))`.
pub fn optimal_k(m: usize, n: usize) -> Result<usize> {
    if m == 0 || n == 0 {
        return Err(Error::param("m and n must be positive"));
    }
    let k = (m as f64 / n as f64 * std::f64::consts::LN_2 + 0.5).floor() as usize;
    Ok(k.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BloomParams {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub f_p: f64,
    pub hash_seed: u64,
}

impl BloomParams {
    pub fn new(m: usize, k: usize, n: usize, f_p: f64, hash_seed: u64) -> Result<Self> {
        let p = BloomParams { m, k, n, f_p, hash_seed };
        p.validate()?;
        Ok(p)
    }

    /// Sizes the filter from its expected load and target false-positive rate.
    pub fn optimal(n: usize, f_p: f64, hash_seed: u64) -> Result<Self> {
        let m = optimal_m(n, f_p)?;
        let k = optimal_k(m, n)?;
        Self::new(m, k, n, f_p, hash_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 || self.n == 0 {
            return Err(Error::param(format!(
                "bloom params need m, k, n >= 1 (m={}, k={}, n={})",
                self.m, self.k, self.n
            )));
        }
        if !(self.f_p > 0.0 && self.f_p < 1.0) {
            return Err(Error::param(format!("false-positive rate {} outside (0,1)", self.f_p)));
        }
        Ok(())
    }

    pub fn hasher(&self) -> DoubleHasher {
        DoubleHasher::new(self.hash_seed)
    }
}

/// Maps a value to its `k` filter positions.
pub trait IndexHasher {
    fn indices(&self, value: &str, m: usize, k: usize) -> Vec<usize>;
}

/// Seeded FNV-1a over `bytes`.
pub fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ mix64(seed);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Double hashing: `index_i = (h_a + i·h_b) mod m` with `h_b` forced odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DoubleHasher {
    seed: u64,
}

impl DoubleHasher {
    const SALT_A: u64 = 0x5bd1_e995_7f4a_7c15;
    const SALT_B: u64 = 0x2545_f491_4f6c_dd1d;

    pub fn new(seed: u64) -> Self {
        DoubleHasher { seed }
    }

    pub fn base_hashes(&self, value: &str) -> (u64, u64) {
        let a = mix64(fnv1a64(value.as_bytes(), self.seed ^ Self::SALT_A));
        let b = mix64(fnv1a64(value.as_bytes(), self.seed ^ Self::SALT_B)) | 1;
        (a, b)
    }
}

impl IndexHasher for DoubleHasher {
    fn indices(&self, value: &str, m: usize, k: usize) -> Vec<usize> {
        let (a, b) = self.base_hashes(value);
        let m = m as u128;
        (0..k as u128)
            .map(|i| ((a as u128 + i * b as u128) % m) as usize)
            .collect()
    }
}

fn check_values<'a, I>(values: I) -> Result<Vec<&'a str>>
where
    I: IntoIterator<Item = &'a str>,
{
    let values: Vec<&str> = values.into_iter().collect();
    if values.is_empty() {
        return Err(Error::EmptyInput("no values to encode".into()));
    }
    if values.iter().any(|v| v.is_empty()) {
        return Err(Error::param("empty preference value"));
    }
    Ok(values)
}

/// Encodes values into an `m`-bit filter with a caller-supplied hasher.
pub fn encode_with<'a, I, H>(values: I, m: usize, k: usize, hasher: &H) -> Result<BitVector>
where
    I: IntoIterator<Item = &'a str>,
    H: IndexHasher + ?Sized,
{
    let values = check_values(values)?;
    if m == 0 || k == 0 {
        return Err(Error::param("m and k must be positive"));
    }
    let mut bv = BitVector::zeros(m);
    for v in values {
        for i in hasher.indices(v, m, k) {
            bv.set(i, true);
        }
    }
    Ok(bv)
}

/// Encodes a set of preference values into a Bloom filter.
pub fn encode<'a, I>(values: I, params: &BloomParams) -> Result<BitVector>
where
    I: IntoIterator<Item = &'a str>,
{
    params.validate()?;
    encode_with(values, params.m, params.k, &params.hasher())
}

/// Membership test: all `k` positions of `value` are set.
pub fn contains(bv: &BitVector, value: &str, params: &BloomParams) -> Result<bool> {
    if bv.len() != params.m {
        return Err(Error::DimensionMismatch {
            expected: params.m,
            actual: bv.len(),
        });
    }
    Ok(params
        .hasher()
        .indices(value, params.m, params.k)
        .into_iter()
        .all(|i| bv.get(i)))
}

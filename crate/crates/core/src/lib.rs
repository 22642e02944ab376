//! Privacy-preserving recommendation with local differential privacy.
//!
//! Clients encode their preference profile into a Bloom filter and perturb it
//! twice (a memoized permanent randomized response, then a fresh
//! instantaneous one per report). The recommender decodes the noisy reports
//! with one neural classifier per category and clusters the decoded profiles.
//! The crate also ships the adversary games used to measure privacy and the
//! experiment runners that sweep privacy budgets and filter parameters.
//!
//! ```
//! use ldprec::bloom::{self, BloomParams};
//! use ldprec::perturb::{ClientState, PrivacyParams};
//!
//! let bloom = BloomParams::new(144, 3, 27, 0.1, 7).unwrap();
//! let privacy = PrivacyParams::from_epsilon1(2.0, 0.5, 0.75, 3).unwrap();
//! let client = ClientState::new(42);
//! let report = client
//!     .perturb_report("alice", &["Action", "Jazz"], &bloom, &privacy)
//!     .unwrap();
//! assert_eq!(report.bits.len(), 144);
//! ```

pub mod attacks;
pub mod bloom;
pub mod clustering;
pub mod decoder;
pub mod error;
pub mod experiment;
pub mod perturb;
pub mod profile;
pub mod rng;
pub mod stats;

pub use bloom::{BitVector, BloomParams};
pub use error::{Error, Result};
pub use perturb::{ClientState, PrivacyParams, PrivacySpec};
pub use profile::{LabeledDataset, Profile, Taxonomy};

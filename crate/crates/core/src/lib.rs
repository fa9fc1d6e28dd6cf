//! Social bias as divergence from a reference distribution.
//!
//! A bias measurement takes the strength of association between a target
//! concept and each of `k` social groups, normalizes those strengths into a
//! categorical distribution, and reports its divergence from a reference
//! distribution that encodes the chosen notion of "no bias". Association
//! strengths can come from a text corpus ([`text`]), static word embeddings
//! ([`embeddings`]), or contextual vectors ([`contextual`]); the
//! composition itself lives in [`framework`]. [`protocol`] runs the
//! validity and reliability checks over any of these sources.
//!
//! ```
//! use divdist::framework::{bias_value, AssociationVector, Distribution, Divergence, Normalizer};
//!
//! let s = AssociationVector::new(vec![75.0, 25.0]).unwrap();
//! let p0 = Distribution::uniform(2).unwrap();
//! let b = bias_value(&s, &p0, Normalizer::Sum, Divergence::L1).unwrap();
//! assert_eq!(b, 0.5);
//! ```

pub mod contextual;
pub mod embeddings;
pub mod error;
pub mod framework;
pub mod lexicon;
pub mod protocol;
pub mod report;
pub mod stats;
pub mod synth;
pub mod text;

use std::path::PathBuf;

pub use error::{Error, Result};

/// Environment variable that relocates the bundled data directory.
pub const DATA_DIR_ENV: &str = "DIVDIST_DATA_DIR";

/// Bundled lexicons, stereotype configuration, and fixtures.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data")))
}

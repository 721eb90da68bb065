//! Simulated additive secret-sharing engine.
//!
//! Linear operations are local to each party's shares. Nonlinear operations
//! (multiplication, comparison, shuffling) go through an arithmetic black box
//! that reconstructs its inputs in isolation and hands every party a fresh
//! random sharing of the result.

mod engine;
pub mod field;
mod hybrid;
pub mod net;
mod oblivious;
mod relational;
pub mod share;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::Engine;
pub use field::Fp;
pub use net::{Endpoint, MsgClass, Network, Payload, TranscriptRecord};
pub use oblivious::SORT_SENTINEL;
pub use relational::AggSpec;
pub use share::{SharedCol, SharedRelation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MpcError {
    #[error("channel deadlock in step `{step}`")]
    Deadlock { step: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("shape mismatch: {left} rows vs {right} rows")]
    ShapeMismatch { left: usize, right: usize },
    #[error("relation `{relation}` has no column `{column}`")]
    MissingColumn { relation: String, column: String },
    #[error("value {value} in `{relation}` is outside the supported range")]
    ValueOutOfRange { relation: String, value: i64 },
    #[error("relation `{0}` still carries secret row flags and cannot be revealed")]
    FlaggedReveal(String),
}

/// Nonlinear work performed, by primitive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub mul: u64,
    pub eq: u64,
    pub lt: u64,
    pub shuffle_units: u64,
    pub sort_compares: u64,
    pub select_units: u64,
}

impl OpCounters {
    /// Black-box multiplications and comparisons.
    pub fn nonlinear(&self) -> u64 {
        self.mul + self.eq + self.lt
    }

    pub fn is_zero(&self) -> bool {
        *self == OpCounters::default()
    }

    pub fn add(&mut self, other: &OpCounters) {
        self.mul += other.mul;
        self.eq += other.eq;
        self.lt += other.lt;
        self.shuffle_units += other.shuffle_units;
        self.sort_compares += other.sort_compares;
        self.select_units += other.select_units;
    }

    pub fn minus(&self, earlier: &OpCounters) -> OpCounters {
        OpCounters {
            mul: self.mul - earlier.mul,
            eq: self.eq - earlier.eq,
            lt: self.lt - earlier.lt,
            shuffle_units: self.shuffle_units - earlier.shuffle_units,
            sort_compares: self.sort_compares - earlier.sort_compares,
            select_units: self.select_units - earlier.select_units,
        }
    }
}

/// Cost units charged for one oblivious shuffle of `n` rows: `n * ceil(log2 n)`.
pub fn shuffle_units(n: usize) -> u64 {
    if n <= 1 {
        return 0;
    }
    let log = usize::BITS - (n - 1).leading_zeros();
    n as u64 * log as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_unit_values() {
        assert_eq!(shuffle_units(0), 0);
        assert_eq!(shuffle_units(1), 0);
        assert_eq!(shuffle_units(2), 2);
        assert_eq!(shuffle_units(3), 6);
        assert_eq!(shuffle_units(100), 700);
        assert_eq!(shuffle_units(128), 896);
    }
}

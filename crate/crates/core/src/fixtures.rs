//! Bundled example queries.

use crate::ir::{build_dag, parse_document, QueryDag};

pub const CREDIT_SCORES: &str = include_str!("../fixtures/credit_scores.json");
pub const MARKET_CONCENTRATION: &str = include_str!("../fixtures/market_concentration.json");
pub const ASPIRIN_COUNT: &str = include_str!("../fixtures/aspirin_count.json");
pub const COMORBIDITY: &str = include_str!("../fixtures/comorbidity.json");

/// All bundled queries as `(name, document)` pairs.
pub const ALL: &[(&str, &str)] = &[
    ("credit_scores", CREDIT_SCORES),
    ("market_concentration", MARKET_CONCENTRATION),
    ("aspirin_count", ASPIRIN_COUNT),
    ("comorbidity", COMORBIDITY),
];

/// Parses and validates a bundled query.
pub fn load(text: &str) -> QueryDag {
    build_dag(&parse_document(text).expect("bundled query parses")).expect("bundled query is valid")
}

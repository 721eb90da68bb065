//! Compiler and simulated multi-party runtime for relational queries over
//! data held by several mutually distrusting parties.

pub mod ir;
pub mod clear;
pub mod fixtures;
pub mod analysis;
pub mod mpc;
pub mod orchestrator;
pub mod plan;
pub mod rewrite;

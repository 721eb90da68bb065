//! Runs compiled queries across simulated parties and audits what each
//! party observed.

pub mod audit;
pub mod gen;
pub mod ledger;
mod run;
pub mod verify;

pub use audit::{audit, Violation};
pub use run::{load_inputs, run, RunError, RunResult};
pub use verify::{verify, VerifyOptions, VerifyReport};

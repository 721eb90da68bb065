//! Randomized differential testing: compiled runs with and without rewrites
//! against the single-site oracle, plus a leakage audit of every run.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::audit::audit;
use super::gen::{generate_inputs, rows_per_input};
use super::run::run;
use crate::clear::{oracle_execute, Table};
use crate::ir::{OpKind, QueryDag};
use crate::rewrite::{compile, CompileError, CompileOptions, Compiled};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyOptions {
    pub trials: usize,
    pub seed: u64,
    /// Upper bound on rows per party in ordinary trials.
    pub max_rows: usize,
    /// Rows per party in every tenth trial.
    pub large_rows: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { trials: 20, seed: 1, max_rows: 100, large_rows: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub input_rows: BTreeMap<String, usize>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub trials: Vec<TrialReport>,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.failure.is_some()).count()
    }
}

/// Output tables whose input is an explicit sort must also come out in
/// order.
fn check_output(dag: &QueryDag, name: &str, got: &Table, want: &Table) -> Result<(), String> {
    if !got.same_multiset(want) {
        return Err(format!("output `{name}` differs: got {:?}, want {:?}", got.sorted_rows(), want.sorted_rows()));
    }
    let node = dag.by_name(name).expect("output exists");
    if let OpKind::SortBy { column } = &dag.node(node.inputs[0]).kind {
        let keys = got.column(column).map_err(|e| e.to_string())?;
        if keys.windows(2).any(|w| w[0] > w[1]) {
            return Err(format!("output `{name}` is not sorted by `{column}`"));
        }
    }
    Ok(())
}

fn trial(original: &QueryDag, variants: &[(&str, &Compiled)], inputs: &crate::clear::InputTables, seed: u64) -> Result<(), String> {
    let want = oracle_execute(original, inputs).map_err(|e| format!("oracle: {e}"))?;
    for (label, compiled) in variants {
        let result = run(&compiled.dag, inputs, seed).map_err(|e| format!("{label}: {e}"))?;
        for (name, table) in &want {
            let got = result.outputs.get(name).ok_or_else(|| format!("{label}: output `{name}` missing"))?;
            check_output(original, name, got, table).map_err(|e| format!("{label}: {e}"))?;
        }
        let violations = audit(&compiled.dag, &result.ledger);
        if let Some(v) = violations.first() {
            return Err(format!("{label}: {} leakage violations, first: {:?} ({})", violations.len(), v.event, v.reason));
        }
    }
    Ok(())
}

/// Runs `opts.trials` randomized trials. Trial 0 uses empty inputs; every
/// tenth trial uses `opts.large_rows` rows per party.
pub fn verify(dag: &QueryDag, opts: VerifyOptions) -> Result<VerifyReport, CompileError> {
    let with = compile(dag, CompileOptions { rewrites: true })?;
    let without = compile(dag, CompileOptions { rewrites: false })?;
    let variants = [("rewrites", &with), ("no-rewrites", &without)];
    let mut report = VerifyReport::default();
    for t in 0..opts.trials {
        let mut rng = ChaCha20Rng::seed_from_u64(opts.seed.wrapping_add(t as u64));
        let per_party = match t {
            0 => 0,
            t if t % 10 == 9 => opts.large_rows,
            _ => rng.gen_range(1..=opts.max_rows.max(1)),
        };
        let rows = rows_per_input(dag, per_party, &mut rng);
        let inputs = generate_inputs(dag, &rows, &mut rng);
        let failure = trial(dag, &variants, &inputs, rng.gen()).err();
        report.trials.push(TrialReport { trial: t, input_rows: rows, failure });
    }
    Ok(report)
}

//! Random input relations shaped so that filters, groupings and joins all
//! produce non-trivial results.

use std::collections::BTreeMap;

use rand::Rng;

use crate::clear::{InputTables, Table};
use crate::ir::{OpKind, QueryDag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Role {
    /// Compared against small constants.
    Filter,
    Group,
    JoinKey,
    Value,
}

/// The most constraining use of every column name anywhere in the DAG.
fn roles(dag: &QueryDag) -> BTreeMap<String, Role> {
    let mut out: BTreeMap<String, Role> = BTreeMap::new();
    let mut note = |c: &str, r: Role| {
        let e = out.entry(c.to_string()).or_insert(r);
        *e = (*e).min(r);
    };
    for n in dag.nodes.values() {
        match &n.kind {
            OpKind::Filter { column, .. } => note(column, Role::Filter),
            OpKind::Aggregate { group, .. } => group.iter().for_each(|g| note(g, Role::Group)),
            OpKind::Distinct => dag.input_meta(n.id, 0).column_names().iter().for_each(|c| note(c, Role::Group)),
            OpKind::Join { left, right } => left.iter().chain(right).for_each(|k| note(k, Role::JoinKey)),
            _ => {}
        }
    }
    out
}

/// `rows[input]` rows for every Input node.
pub fn generate_inputs<R: Rng>(dag: &QueryDag, rows: &BTreeMap<String, usize>, rng: &mut R) -> InputTables {
    let roles = roles(dag);
    let total: usize = rows.values().sum();
    let mut out = InputTables::new();
    for n in dag.nodes.values() {
        if !matches!(n.kind, OpKind::Input { .. }) {
            continue;
        }
        let count = rows.get(&n.name).copied().unwrap_or(0);
        let schema = n.out_meta.column_names();
        let hi: Vec<i64> = schema
            .iter()
            .map(|c| match roles.get(c).copied().unwrap_or(Role::Value) {
                Role::Filter => 4,
                Role::Group => (total / 2).max(2) as i64,
                Role::JoinKey => (2 * total).max(4) as i64,
                Role::Value => 100,
            })
            .collect();
        let data = (0..count).map(|_| hi.iter().map(|h| rng.gen_range(1..=*h)).collect()).collect();
        out.insert(n.name.clone(), Table::new(schema, data));
    }
    out
}

/// Splits roughly `per_party` rows across each party's inputs.
pub fn rows_per_input<R: Rng>(dag: &QueryDag, per_party: usize, rng: &mut R) -> BTreeMap<String, usize> {
    let mut by_party: BTreeMap<_, Vec<String>> = BTreeMap::new();
    for n in dag.nodes.values() {
        if let OpKind::Input { at } = n.kind {
            by_party.entry(at).or_default().push(n.name.clone());
        }
    }
    let mut out = BTreeMap::new();
    for names in by_party.values() {
        let share = per_party / names.len().max(1);
        for name in names {
            let n = if share == 0 { 0 } else { rng.gen_range(share / 2..=share).max(1) };
            out.insert(name.clone(), n);
        }
    }
    out
}


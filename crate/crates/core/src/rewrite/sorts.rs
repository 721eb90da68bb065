//! Tracks which relations are already sorted and skips oblivious sorts on
//! them.

use super::RewriteTrace;
use crate::ir::{ExecMode, OpKind, QueryDag};

/// Column the output of each operator is sorted by, given its input order.
fn sorted_output(dag: &QueryDag, id: crate::ir::NodeId) -> Option<String> {
    let n = dag.node(id);
    let input = |i: usize| dag.node(n.inputs[i]).out_meta.sorted_by.clone();
    match (&n.kind, n.exec) {
        (OpKind::Input { .. } | OpKind::Concat, _) => None,
        (OpKind::SortBy { column }, _) => Some(column.clone()),
        (OpKind::Filter { .. } | OpKind::Output { .. }, _) => input(0),
        (OpKind::Multiply { .. } | OpKind::Divide { .. } | OpKind::ScalarMul { .. } | OpKind::Enumerate { .. }, _) => input(0),
        (OpKind::Project { columns, shuffle }, _) => input(0).filter(|c| !shuffle && columns.contains(c)),
        (OpKind::Aggregate { group, .. }, ExecMode::Clear(_)) => group.first().cloned(),
        (OpKind::Aggregate { .. }, _) => None,
        (OpKind::Join { .. }, ExecMode::Clear(_)) => input(0),
        (OpKind::Join { left, .. }, ExecMode::PublicJoin { .. }) => left.first().cloned(),
        (OpKind::Join { .. }, _) => None,
        (OpKind::Distinct, _) => None,
    }
}

/// Annotates sort order on every relation and, when `elide` is set, marks
/// MPC sorts and MPC aggregations whose input is already sorted by the key.
pub fn eliminate_sorts(dag: &QueryDag, elide: bool, trace: &mut RewriteTrace) -> QueryDag {
    let mut out = dag.clone();
    for id in dag.topo_order().expect("validated DAG") {
        let sorted = sorted_output(&out, id);
        out.node_mut(id).out_meta.sorted_by = sorted;
        let n = out.node(id);
        if !elide || n.exec != ExecMode::Mpc {
            continue;
        }
        let input_sorted = n.inputs.first().and_then(|i| out.node(*i).out_meta.sorted_by.clone());
        let key = match &n.kind {
            OpKind::SortBy { column } => Some(column.clone()),
            OpKind::Aggregate { group, .. } if group.len() == 1 => Some(group[0].clone()),
            _ => None,
        };
        if key.is_some() && key == input_sorted && !n.elide_sort {
            let name = n.name.clone();
            out.node_mut(id).elide_sort = true;
            trace.push("eliminate_sorts", "input-already-sorted", vec![name.clone()], vec![name]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rewrite::{compile, CompileOptions};

    #[test]
    fn public_join_order_survives_filters() {
        let c = compile(&fixtures::load(fixtures::ASPIRIN_COUNT), CompileOptions::default()).unwrap();
        let groups = c.dag.by_name("distinct_patients#groups").unwrap();
        assert!(groups.elide_sort);
        assert_eq!(c.trace.count("input-already-sorted"), 1);
    }

    #[test]
    fn no_elision_without_rewrites() {
        let c = compile(&fixtures::load(fixtures::ASPIRIN_COUNT), CompileOptions { rewrites: false }).unwrap();
        assert!(c.dag.nodes.values().all(|n| !n.elide_sort));
    }

    #[test]
    fn shuffled_aggregate_output_is_unsorted() {
        let c = compile(&fixtures::load(fixtures::COMORBIDITY), CompileOptions::default()).unwrap();
        let ranked = c.dag.by_name("ranked").unwrap();
        assert_eq!(ranked.exec, ExecMode::Mpc);
        assert!(!ranked.elide_sort);
    }
}

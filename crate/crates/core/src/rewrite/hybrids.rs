//! Replaces MPC joins and aggregations with hybrid protocols when a party
//! is trusted with the key columns.

use super::RewriteTrace;
use crate::ir::{ExecMode, OpKind, PartyId, QueryDag, TrustSet};

fn column_trust(dag: &QueryDag, node: crate::ir::NodeId, input: usize, column: &str) -> TrustSet {
    dag.input_meta(node, input).column(column).map(|c| c.trust.clone()).unwrap_or_default()
}

/// A join whose key columns every party may see becomes a public join
/// coordinated by the lowest party. Otherwise, if the query designates a
/// selectively-trusted party and that party is trusted with both key
/// columns, the join becomes a hybrid join. Grouped aggregations whose key
/// column the designated party is trusted with become hybrid aggregations.
pub fn insert_hybrids(dag: &QueryDag, trace: &mut RewriteTrace) -> QueryDag {
    let mut out = dag.clone();
    let everyone = TrustSet::full(dag.party_count());
    for n in dag.nodes.values() {
        if n.pinned || n.exec != ExecMode::Mpc {
            continue;
        }
        let mode = match &n.kind {
            OpKind::Join { left, right } if left.len() == 1 && right.len() == 1 => {
                let lt = column_trust(dag, n.id, 0, &left[0]);
                let rt = column_trust(dag, n.id, 1, &right[0]);
                if everyone.is_subset(&lt) && everyone.is_subset(&rt) {
                    Some((ExecMode::PublicJoin { party: PartyId(0) }, "public-key-join"))
                } else {
                    dag.stp
                        .filter(|s| lt.contains(*s) && rt.contains(*s))
                        .map(|stp| (ExecMode::HybridJoin { stp }, "trusted-key-join"))
                }
            }
            OpKind::Aggregate { group, .. } if group.len() == 1 => dag
                .stp
                .filter(|s| column_trust(dag, n.id, 0, &group[0]).contains(*s))
                .map(|stp| (ExecMode::HybridAgg { stp }, "trusted-key-aggregation")),
            _ => None,
        };
        if let Some((mode, rule)) = mode {
            let node = out.node_mut(n.id);
            node.exec = mode;
            node.pinned = true;
            trace.push("insert_hybrids", rule, vec![n.name.clone()], vec![n.name.clone()]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::analyze;
    use crate::fixtures;
    use crate::ir::TrustSet;

    #[test]
    fn empty_trust_never_produces_hybrids() {
        let mut dag = fixtures::load(fixtures::CREDIT_SCORES);
        for n in dag.nodes.values_mut() {
            for c in &mut n.out_meta.columns {
                c.trust = TrustSet::empty();
            }
        }
        let mut trace = RewriteTrace::default();
        let d = insert_hybrids(&analyze(&dag), &mut trace);
        assert!(trace.entries.is_empty());
        assert!(d.nodes.values().all(|n| !n.exec.is_hybrid()));
    }

    #[test]
    fn public_keys_give_public_join() {
        let mut trace = RewriteTrace::default();
        let d = insert_hybrids(&analyze(&fixtures::load(fixtures::ASPIRIN_COUNT)), &mut trace);
        assert_eq!(d.by_name("joined").unwrap().exec, ExecMode::PublicJoin { party: PartyId(0) });
    }

    #[test]
    fn no_designated_party_no_hybrid() {
        let mut dag = fixtures::load(fixtures::CREDIT_SCORES);
        dag.stp = None;
        let mut trace = RewriteTrace::default();
        let d = insert_hybrids(&analyze(&dag), &mut trace);
        assert!(d.nodes.values().all(|n| !n.exec.is_hybrid()));
    }
}

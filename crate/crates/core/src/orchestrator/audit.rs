//! Checks a run's leakage ledger against what the compiled query allows
//! each party to learn.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ledger::{LeakItem, LeakageEvent, Ledger};
use crate::analysis::reveal_authorized;
use crate::ir::{ExecMode, OpKind, PartyId, QueryDag};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub event: LeakageEvent,
    pub reason: String,
}

/// Relations each party may see in full: its own inputs, relations it is
/// authorized to receive, outputs addressed to it, and whatever it computes
/// in the clear from those.
pub fn full_views(dag: &QueryDag) -> BTreeMap<PartyId, BTreeSet<String>> {
    let order = dag.topo_order().expect("validated DAG");
    dag.party_ids()
        .map(|p| {
            let mut seen = BTreeSet::new();
            for id in &order {
                let n = dag.node(*id);
                let ok = match (&n.kind, n.exec) {
                    (OpKind::Input { at }, _) => *at == p,
                    (OpKind::Output { to }, _) => to.contains(&p),
                    (_, ExecMode::Clear(q)) if q == p => {
                        n.inputs.iter().all(|i| seen.contains(&dag.node(*i).name))
                    }
                    _ => false,
                };
                if ok || reveal_authorized(dag, *id, p).is_some() {
                    seen.insert(n.name.clone());
                }
            }
            (p, seen)
        })
        .collect()
}

/// Every ledger event that the compiled DAG does not authorize.
pub fn audit(dag: &QueryDag, ledger: &Ledger) -> Vec<Violation> {
    let views = full_views(dag);
    let mut out = Vec::new();
    for ev in &ledger.events {
        let p = ev.observer;
        let node = dag.by_name(ev.item.relation());
        let reason = match (&ev.item, node) {
            (_, None) => Some("relation is not part of the query".to_string()),
            (LeakItem::ColumnValues { relation, column }, Some(n)) => {
                let trusted = n.out_meta.column(column).is_some_and(|c| c.trust.contains(p));
                (!trusted && !views[&p].contains(relation))
                    .then(|| format!("{} may not see column `{column}`", dag.party_name(p)))
            }
            (LeakItem::Cardinality { .. }, Some(_)) => None,
            (LeakItem::Permutation { .. }, Some(n)) => (!matches!(n.exec, ExecMode::HybridAgg { .. } | ExecMode::PublicJoin { .. }))
                .then(|| "ordering revealed outside a hybrid operator".to_string()),
            (LeakItem::Output { .. }, Some(n)) => match &n.kind {
                OpKind::Output { to } if to.contains(&p) => None,
                _ => Some(format!("{} is not a recipient", dag.party_name(p))),
            },
        };
        if let Some(reason) = reason {
            out.push(Violation { event: ev.clone(), reason });
        }
    }
    out
}

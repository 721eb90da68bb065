//! Ownership and trust propagation, and the MPC frontier.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ir::{
    column_deps, AggFunc, ExecMode, NodeId, OpKind, Owner, PartyId, QueryDag, RevealReason, TrustSet,
};

/// Sets every node's owner and storage location, in topological order.
pub fn propagate_ownership(dag: &QueryDag) -> QueryDag {
    let mut out = dag.clone();
    let all: BTreeSet<PartyId> = dag.party_ids().collect();
    for id in dag.topo_order().expect("validated DAG") {
        let node = out.node(id);
        let owner = match (&node.kind, node.pinned, node.exec) {
            (OpKind::Input { at }, _, _) => Owner::Single(*at),
            (_, true, ExecMode::Clear(p)) => Owner::Single(p),
            (_, true, _) => Owner::Partitioned,
            _ => {
                let owners: BTreeSet<Owner> = node
                    .inputs
                    .iter()
                    .map(|i| out.node(*i).out_meta.owner)
                    .filter(|o| *o != Owner::Public)
                    .collect();
                match owners.len() {
                    0 => Owner::Public,
                    1 => *owners.iter().next().unwrap(),
                    _ => Owner::Partitioned,
                }
            }
        };
        let stored_at = match (&node.kind, owner) {
            (OpKind::Output { to }, _) => to.iter().copied().collect(),
            (_, Owner::Single(p)) => [p].into_iter().collect(),
            _ => all.clone(),
        };
        let meta = &mut out.node_mut(id).out_meta;
        meta.owner = owner;
        meta.stored_at = stored_at;
        meta.row_count_public = true;
    }
    out
}

/// Sets every column's trust set to the intersection of the trust sets of
/// the columns it depends on. Input columns are trusted to their storing
/// party; output columns to their recipients.
pub fn propagate_trust(dag: &QueryDag) -> QueryDag {
    let mut out = dag.clone();
    let full = TrustSet::full(dag.party_count());
    for id in dag.topo_order().expect("validated DAG") {
        let node = out.node(id);
        let trust: Vec<TrustSet> = match &node.kind {
            OpKind::Input { at } => node
                .out_meta
                .columns
                .iter()
                .map(|c| {
                    let mut t = c.trust.clone();
                    t.insert(*at);
                    t
                })
                .collect(),
            kind => {
                let deps = column_deps(&out, id);
                let mut trust: Vec<TrustSet> = deps
                    .iter()
                    .map(|d| {
                        d.iter().fold(full.clone(), |acc, (i, col)| {
                            let meta = &out.node(node.inputs[*i]).out_meta;
                            acc.intersect(&meta.column(col).expect("dependency column exists").trust)
                        })
                    })
                    .collect();
                if let OpKind::Output { to } = kind {
                    for t in &mut trust {
                        for p in to {
                            t.insert(*p);
                        }
                    }
                }
                trust
            }
        };
        for (c, t) in out.node_mut(id).out_meta.columns.iter_mut().zip(trust) {
            c.trust = t;
        }
    }
    out
}

/// Assigns execution modes: relations without an owner run under MPC,
/// everything else in the clear at its owner. Pinned nodes keep their mode.
pub fn mark_mpc(dag: &QueryDag) -> QueryDag {
    let mut out = dag.clone();
    let lowest = PartyId(0);
    for node in out.nodes.values_mut() {
        if node.pinned {
            continue;
        }
        node.exec = match (&node.kind, node.out_meta.owner) {
            (OpKind::Output { to }, _) => ExecMode::Clear(to[0]),
            (_, Owner::Single(p)) => ExecMode::Clear(p),
            (_, Owner::Public) => ExecMode::Clear(lowest),
            (_, Owner::Partitioned) => ExecMode::Mpc,
        };
    }
    out
}

/// Runs ownership propagation, trust propagation and MPC marking.
pub fn analyze(dag: &QueryDag) -> QueryDag {
    mark_mpc(&propagate_trust(&propagate_ownership(dag)))
}

/// Whether the input of a unary operator can be recovered from its output.
pub fn is_reversible(dag: &QueryDag, id: NodeId) -> bool {
    let node = dag.node(id);
    match &node.kind {
        OpKind::Multiply { .. }
        | OpKind::Divide { .. }
        | OpKind::ScalarMul { .. }
        | OpKind::Enumerate { .. }
        | OpKind::Output { .. } => true,
        OpKind::Project { columns, .. } => {
            let input: BTreeSet<String> = dag.input_meta(id, 0).column_names().into_iter().collect();
            columns.len() == input.len() && columns.iter().all(|c| input.contains(c))
        }
        _ => false,
    }
}

/// Decides whether party `r` may learn the full relation produced by `u`:
/// either `r` is trusted with every column, or the relation can be derived
/// from relations `r` is already authorized to learn.
pub fn reveal_authorized(dag: &QueryDag, u: NodeId, r: PartyId) -> Option<RevealReason> {
    let node = dag.node(u);
    if node.out_meta.columns.iter().all(|c| c.trust.contains(r)) {
        return Some(RevealReason::Trust);
    }
    if dag.is_flagged(u) {
        return None;
    }
    let consumers = dag.consumers(u);
    if consumers.is_empty() {
        return None;
    }
    let mut reason = RevealReason::Reversible;
    for c in consumers {
        let cn = dag.node(c);
        match &cn.kind {
            OpKind::Output { to } if to.contains(&r) => {}
            OpKind::Aggregate { func: AggFunc::Count, group, .. } if covers_all(dag, u, group) => {
                reveal_authorized(dag, c, r)?;
                reason = RevealReason::CountLeaf;
            }
            _ if cn.inputs.len() == 1 && is_reversible(dag, c) => {
                reveal_authorized(dag, c, r)?;
            }
            _ => return None,
        }
    }
    Some(reason)
}

fn covers_all(dag: &QueryDag, u: NodeId, group: &[String]) -> bool {
    let cols: BTreeSet<String> = dag.node(u).out_meta.column_names().into_iter().collect();
    let group: BTreeSet<String> = group.iter().cloned().collect();
    cols == group
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnReport {
    pub name: String,
    pub trust: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: String,
    pub owner: String,
    pub columns: Vec<ColumnReport>,
    pub mpc: bool,
}

/// Per-node summary of an analyzed DAG, in topological order.
pub fn report(dag: &QueryDag) -> Vec<NodeReport> {
    let name = |p: PartyId| dag.party_name(p).to_string();
    dag.topo_order()
        .expect("validated DAG")
        .into_iter()
        .map(|id| {
            let n = dag.node(id);
            NodeReport {
                node: n.name.clone(),
                owner: match n.out_meta.owner {
                    Owner::Single(p) => name(p),
                    Owner::Partitioned => "partitioned".into(),
                    Owner::Public => "public".into(),
                },
                columns: n
                    .out_meta
                    .columns
                    .iter()
                    .map(|c| ColumnReport { name: c.name.clone(), trust: c.trust.iter().map(name).collect() })
                    .collect(),
                mpc: n.exec == ExecMode::Mpc,
            }
        })
        .collect()
}

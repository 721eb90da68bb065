//! Moves operators below concatenations of single-party relations so they
//! run locally in the clear at each party.

use super::{new_node, remove_dead, CompileError, RewriteTrace};
use crate::analysis::analyze;
use crate::ir::{AggFunc, NodeId, OpKind, Owner, PartyId, QueryDag};

enum Site {
    /// Distributive operator over a concat: one clone per concat input.
    Distribute { node: NodeId, parts: Vec<(NodeId, PartyId)> },
    /// Grouped aggregate over a concat: local pre-aggregation plus a
    /// secondary sum.
    Split { node: NodeId, parts: Vec<(NodeId, PartyId)> },
}

/// The concat inputs of `concat` and their owners, if all are owned by a
/// single party and the concat itself is not.
fn local_parts(dag: &QueryDag, concat: NodeId) -> Option<Vec<(NodeId, PartyId)>> {
    let c = dag.node(concat);
    if !matches!(c.kind, OpKind::Concat) || c.out_meta.owner != Owner::Partitioned {
        return None;
    }
    c.inputs
        .iter()
        .map(|i| match dag.node(*i).out_meta.owner {
            Owner::Single(p) => Some((*i, p)),
            _ => None,
        })
        .collect()
}

fn withheld_consent(dag: &QueryDag) -> Vec<String> {
    dag.party_ids()
        .filter(|p| !dag.consent.get(p).copied().unwrap_or(false))
        .map(|p| dag.party_name(p).to_string())
        .collect()
}

fn find_site(dag: &QueryDag) -> Result<Option<Site>, CompileError> {
    for n in dag.nodes.values() {
        if n.pinned || n.inputs.len() != 1 {
            continue;
        }
        let Some(parts) = local_parts(dag, n.inputs[0]) else { continue };
        match &n.kind {
            // A pushed-down filter makes the MPC input size depend on the
            // data, so it needs the same consent; without it the filter
            // stays under MPC.
            OpKind::Filter { .. } if !withheld_consent(dag).is_empty() => {}
            kind if kind.is_distributive() => return Ok(Some(Site::Distribute { node: n.id, parts })),
            OpKind::Aggregate { group, secondary: false, .. } if !group.is_empty() => {
                let withheld = withheld_consent(dag);
                if !withheld.is_empty() {
                    return Err(CompileError::ConsentRequired { node: n.name.clone(), parties: withheld });
                }
                return Ok(Some(Site::Split { node: n.id, parts }));
            }
            _ => {}
        }
    }
    Ok(None)
}

fn apply(dag: &mut QueryDag, site: Site, trace: &mut RewriteTrace) -> Result<(), CompileError> {
    match site {
        Site::Distribute { node, parts } => {
            let original = dag.node(node).clone();
            let mut clones = Vec::new();
            for (input, party) in parts {
                let name = format!("{}@{}", original.name, dag.party_name(party));
                clones.push(new_node(dag, &name, original.kind.clone(), vec![input]));
            }
            let n = dag.node_mut(node);
            n.kind = OpKind::Concat;
            n.inputs = clones.clone();
            let after = clones.iter().map(|c| dag.node(*c).name.clone()).chain([original.name.clone()]).collect();
            trace.push("push_down", "distributive-over-concat", vec![original.name], after);
        }
        Site::Split { node, parts } => {
            let original = dag.node(node).clone();
            let OpKind::Aggregate { func, out, group, over, .. } = original.kind.clone() else { unreachable!() };
            let mut locals = Vec::new();
            for (input, party) in parts {
                let name = format!("{}@{}", original.name, dag.party_name(party));
                let kind = OpKind::Aggregate { func, out: out.clone(), group: group.clone(), over: over.clone(), secondary: false };
                locals.push(new_node(dag, &name, kind, vec![input]));
            }
            let concat = new_node(dag, &format!("{}#parts", original.name), OpKind::Concat, locals.clone());
            let n = dag.node_mut(node);
            n.kind = OpKind::Aggregate { func: AggFunc::Sum, out: out.clone(), group, over: Some(out), secondary: true };
            n.inputs = vec![concat];
            let mut after: Vec<String> = locals.iter().map(|c| dag.node(*c).name.clone()).collect();
            after.push(dag.node(concat).name.clone());
            after.push(original.name.clone());
            trace.push("push_down", "aggregation-split", vec![original.name], after);
        }
    }
    remove_dead(dag);
    dag.rederive_schemas()?;
    Ok(())
}

/// Applies push-down rewrites until none fires. Splitting an aggregation
/// reveals per-party group counts to the MPC and requires every party's
/// consent; without it compilation fails.
pub fn push_down(dag: &QueryDag, trace: &mut RewriteTrace) -> Result<QueryDag, CompileError> {
    let mut d = analyze(dag);
    while let Some(site) = find_site(&d)? {
        apply(&mut d, site, trace)?;
        d = analyze(&d);
    }
    Ok(d)
}

//! Moves MPC operators near the outputs into the clear at the recipient
//! when the recipient may learn their inputs anyway.

use std::collections::BTreeSet;

use super::{new_node, CompileError, RewriteTrace};
use crate::analysis::{analyze, is_reversible, reveal_authorized};
use crate::ir::{AggFunc, AuthorizedReveal, ExecMode, NodeId, OpKind, PartyId, QueryDag};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PushUpMode {
    /// Every applicable push-up.
    Full,
    /// Only lifts divisions, which have no MPC protocol.
    RequiredOnly,
}

/// The single party all consumers of `id` run at, if there is one. Outputs
/// count only when they go to exactly that party.
fn common_recipient(dag: &QueryDag, id: NodeId) -> Option<PartyId> {
    let mut party = None;
    let consumers = dag.consumers(id);
    if consumers.is_empty() {
        return None;
    }
    for c in consumers {
        let cn = dag.node(c);
        let p = match (&cn.kind, cn.exec) {
            (OpKind::Output { to }, _) if to.len() == 1 => to[0],
            (OpKind::Output { .. }, _) => return None,
            (_, ExecMode::Clear(p)) => p,
            _ => return None,
        };
        if party.replace(p).is_some_and(|old| old != p) {
            return None;
        }
    }
    party
}

fn lift(dag: &mut QueryDag, region: &BTreeSet<NodeId>, r: PartyId) {
    let mut reveals = Vec::new();
    for x in region {
        for u in &dag.node(*x).inputs {
            if region.contains(u) || dag.node(*u).exec == ExecMode::Clear(r) {
                continue;
            }
            if let Some(reason) = reveal_authorized(dag, *u, r) {
                reveals.push(AuthorizedReveal { node: *u, party: r, reason });
            }
        }
    }
    for x in region {
        let n = dag.node_mut(*x);
        n.exec = ExecMode::Clear(r);
        n.pinned = true;
    }
    for rv in reveals {
        if !dag.authorized_reveals.contains(&rv) {
            dag.authorized_reveals.push(rv);
        }
    }
}

/// One lift or count-leaf rewrite, if any applies.
fn step(dag: &mut QueryDag, trace: &mut RewriteTrace) -> bool {
    let order = dag.topo_order().expect("validated DAG");
    for id in order.into_iter().rev() {
        let n = dag.node(id).clone();
        if n.pinned || n.exec != ExecMode::Mpc || matches!(n.kind, OpKind::Input { .. } | OpKind::Output { .. }) {
            continue;
        }
        let Some(r) = common_recipient(dag, id) else { continue };
        if let OpKind::Aggregate { func, group, .. } = &n.kind {
            let to_output = dag.consumers(id).iter().all(|c| matches!(dag.node(*c).kind, OpKind::Output { .. }));
            if *func == AggFunc::Count && to_output && !dag.is_flagged(n.inputs[0]) {
                // The recipient learns the group keys with multiplicity:
                // exactly what the count reveals.
                let keys = new_node(
                    dag,
                    &format!("{}#keys", n.name),
                    OpKind::Project { columns: group.clone(), shuffle: !group.is_empty() },
                    n.inputs.clone(),
                );
                dag.node_mut(id).inputs = vec![keys];
                dag.rederive_schemas().expect("projection of grouped columns");
                *dag = analyze(dag);
                lift(dag, &[id].into_iter().collect(), r);
                trace.push("push_up", "count-leaf", vec![n.name.clone()], vec![dag.node(keys).name.clone(), n.name]);
                return true;
            }
            continue;
        }
        if n.inputs.iter().all(|u| reveal_authorized(dag, *u, r).is_some()) {
            let rule = if is_reversible(dag, id) { "reversible-push-up" } else { "trusted-push-up" };
            lift(dag, &[id].into_iter().collect(), r);
            trace.push("push_up", rule, vec![n.name.clone()], vec![n.name]);
            return true;
        }
    }
    false
}

/// Lifts a division left under MPC together with everything downstream of
/// it. Fails when the lifted region's inputs cannot be revealed.
fn lift_division(dag: &mut QueryDag, trace: &mut RewriteTrace) -> Result<bool, CompileError> {
    let Some(div) = dag
        .nodes
        .values()
        .find(|n| n.exec == ExecMode::Mpc && matches!(n.kind, OpKind::Divide { .. }))
        .map(|n| n.id)
    else {
        return Ok(false);
    };
    let name = dag.node(div).name.clone();
    let unsupported = |reason: &str| CompileError::UnsupportedUnderMpc { node: name.clone(), reason: reason.into() };
    let mut region: BTreeSet<NodeId> = dag.descendants(div);
    region.insert(div);
    let mut recipients = BTreeSet::new();
    for x in &region {
        if let OpKind::Output { to } = &dag.node(*x).kind {
            recipients.extend(to.iter().copied());
        }
    }
    region.retain(|x| !matches!(dag.node(*x).kind, OpKind::Output { .. }));
    let r = match recipients.len() {
        1 => *recipients.iter().next().unwrap(),
        _ => return Err(unsupported("division feeds outputs for more than one party")),
    };
    for x in &region {
        for u in &dag.node(*x).inputs {
            if region.contains(u) || dag.node(*u).exec == ExecMode::Clear(r) {
                continue;
            }
            if reveal_authorized(dag, *u, r).is_none() {
                return Err(unsupported(&format!(
                    "division inputs cannot be revealed to {}",
                    dag.party_name(r)
                )));
            }
        }
    }
    lift(dag, &region, r);
    let mut lifted: Vec<String> = region.iter().map(|x| dag.node(*x).name.clone()).collect();
    lifted.sort();
    trace.push("push_up", "division-to-recipient", vec![name], lifted);
    Ok(true)
}

pub fn push_up(dag: &QueryDag, mode: PushUpMode, trace: &mut RewriteTrace) -> Result<QueryDag, CompileError> {
    let mut d = analyze(dag);
    loop {
        if mode == PushUpMode::Full {
            while step(&mut d, trace) {
                d = analyze(&d);
            }
        }
        if !lift_division(&mut d, trace)? {
            return Ok(d);
        }
        d = analyze(&d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rewrite::insert_hybrids;

    fn prepared(text: &str) -> QueryDag {
        let dag = fixtures::load(text);
        insert_hybrids(&analyze(&dag), &mut RewriteTrace::default())
    }

    #[test]
    fn division_lifts_to_recipient() {
        let mut trace = RewriteTrace::default();
        let d = push_up(&prepared(fixtures::CREDIT_SCORES), PushUpMode::Full, &mut trace).unwrap();
        assert_eq!(d.by_name("avg_scores").unwrap().exec, ExecMode::Clear(PartyId(0)));
        let avg_in = d.by_name("avg_in").unwrap().id;
        assert!(d.authorized_reveals.iter().any(|r| r.node == avg_in));
    }

    #[test]
    fn unrevealable_division_is_rejected() {
        let doc = r#"{"parties":[{"name":"a"},{"name":"b"}],"nodes":[
            {"id":"x","kind":"input","at":"a","out_columns":[{"name":"k"},{"name":"v"}]},
            {"id":"y","kind":"input","at":"b","out_columns":[{"name":"k"},{"name":"w"}]},
            {"id":"j","kind":"join","inputs":["x","y"],"params":{"left":["k"],"right":["k"]}},
            {"id":"s","kind":"aggregate","inputs":["j"],"params":{"func":"sum","out":"t","group":["k"],"over":"v"}},
            {"id":"q","kind":"divide","inputs":["s"],"params":{"out":"r","numerator":"t","by":"k"}},
            {"id":"z","kind":"sort_by","inputs":["q"],"params":{"column":"r"}},
            {"id":"o","kind":"output","inputs":["z"],"to":["a"]}]}"#;
        let dag = crate::ir::build_dag(&crate::ir::parse_document(doc).unwrap()).unwrap();
        let err = push_up(&analyze(&dag), PushUpMode::Full, &mut RewriteTrace::default()).unwrap_err();
        assert!(matches!(err, CompileError::UnsupportedUnderMpc { .. }), "{err:?}");
    }

    #[test]
    fn count_leaf_reveals_only_keys() {
        let mut trace = RewriteTrace::default();
        let d = push_up(&prepared(fixtures::ASPIRIN_COUNT), PushUpMode::Full, &mut trace).unwrap();
        assert_eq!(trace.count("count-leaf"), 1);
        let count = d.by_name("patient_count").unwrap();
        assert_eq!(count.exec, ExecMode::Clear(PartyId(0)));
        let keys = d.node(count.inputs[0]);
        assert!(matches!(&keys.kind, OpKind::Project { columns, .. } if columns.is_empty()));
        assert_eq!(keys.exec, ExecMode::Mpc);
    }

    #[test]
    fn required_only_skips_count_leaf() {
        let mut trace = RewriteTrace::default();
        let d = push_up(&prepared(fixtures::ASPIRIN_COUNT), PushUpMode::RequiredOnly, &mut trace).unwrap();
        assert!(trace.entries.is_empty());
        assert_eq!(d.by_name("patient_count").unwrap().exec, ExecMode::Mpc);
    }
}

//! Splits a compiled DAG into segments of uniform execution mode, classifies
//! the edges between them and emits one plan per party.

mod cost;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::reveal_authorized;
use crate::ir::{ExecMode, NodeId, OpKind, PartyId, QueryDag};

pub use cost::{estimate_cost, node_cost, upper_bound_rows, CostReport};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("relation `{relation}` would reach {party} without authorization")]
    IllegalBoundary { relation: String, party: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: usize,
    pub mode: ExecMode,
    /// Members in execution order.
    pub nodes: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryKind {
    /// A party secret-shares a clear relation into the MPC.
    ShareIn { dealer: PartyId },
    /// Shares are opened towards the listed parties.
    Reveal { to: Vec<PartyId> },
    /// A clear relation is sent from one party to another.
    Send { from: PartyId, to: PartyId },
    /// Shares flow between MPC segments unchanged.
    Shared,
    /// A clear relation stays with the party holding it.
    Local,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundary {
    pub relation: NodeId,
    pub consumer: NodeId,
    pub from_segment: usize,
    pub to_segment: usize,
    pub kind: BoundaryKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub segments: Vec<Segment>,
    pub boundaries: Vec<Boundary>,
    /// Segment of every node.
    pub segment_of: BTreeMap<NodeId, usize>,
}

impl Plan {
    pub fn segment(&self, node: NodeId) -> &Segment {
        &self.segments[self.segment_of[&node]]
    }

    pub fn incoming(&self, consumer: NodeId) -> impl Iterator<Item = &Boundary> {
        self.boundaries.iter().filter(move |b| b.consumer == consumer)
    }
}

fn merge_key(mode: ExecMode) -> Option<ExecMode> {
    (!mode.is_hybrid()).then_some(mode)
}

/// Groups nodes into segments greedily in topological order. A node joins
/// the most recent segment of its mode when none of its inputs lives in a
/// later segment, which keeps edges between segments pointing forward.
/// Hybrid operators always get a segment of their own.
pub fn partition(dag: &QueryDag) -> Result<Plan, PlanError> {
    let order = dag.topo_order().expect("validated DAG");
    let mut segments: Vec<Segment> = Vec::new();
    let mut latest: BTreeMap<String, usize> = BTreeMap::new();
    let mut segment_of = BTreeMap::new();
    for id in order {
        let n = dag.node(id);
        let newest_input = n.inputs.iter().map(|i| segment_of[i]).max();
        let target = merge_key(n.exec)
            .and_then(|m| latest.get(&format!("{m:?}")).copied())
            .filter(|s| newest_input.is_none_or(|i| i <= *s));
        let s = match target {
            Some(s) => s,
            None => {
                segments.push(Segment { id: segments.len(), mode: n.exec, nodes: Vec::new() });
                if let Some(m) = merge_key(n.exec) {
                    latest.insert(format!("{m:?}"), segments.len() - 1);
                }
                segments.len() - 1
            }
        };
        segments[s].nodes.push(id);
        segment_of.insert(id, s);
    }

    let mut boundaries = Vec::new();
    for n in dag.nodes.values() {
        for i in &n.inputs {
            let (from, to) = (segment_of[i], segment_of[&n.id]);
            if from == to {
                continue;
            }
            let kind = boundary_kind(dag, *i, n.id)?;
            boundaries.push(Boundary { relation: *i, consumer: n.id, from_segment: from, to_segment: to, kind });
        }
    }
    boundaries.sort_by_key(|b| (b.to_segment, b.consumer, b.relation));
    Ok(Plan { segments, boundaries, segment_of })
}

fn boundary_kind(dag: &QueryDag, producer: NodeId, consumer: NodeId) -> Result<BoundaryKind, PlanError> {
    let (p, c) = (dag.node(producer), dag.node(consumer));
    let recipients: Vec<PartyId> = match (&c.kind, c.exec) {
        (OpKind::Output { to }, _) => to.clone(),
        (_, ExecMode::Clear(r)) => vec![r],
        _ => Vec::new(),
    };
    let check = |r: PartyId| -> Result<(), PlanError> {
        if matches!(c.kind, OpKind::Output { .. }) || reveal_authorized(dag, producer, r).is_some() {
            Ok(())
        } else {
            Err(PlanError::IllegalBoundary { relation: p.name.clone(), party: dag.party_name(r).to_string() })
        }
    };
    Ok(match (p.exec, c.exec) {
        (ExecMode::Clear(from), ExecMode::Clear(_)) => {
            let to: Vec<PartyId> = recipients.into_iter().filter(|r| *r != from).collect();
            for r in &to {
                check(*r)?;
            }
            match to.as_slice() {
                [] => BoundaryKind::Local,
                [r] => BoundaryKind::Send { from, to: *r },
                _ => BoundaryKind::Reveal { to },
            }
        }
        (ExecMode::Clear(dealer), _) => BoundaryKind::ShareIn { dealer },
        (_, ExecMode::Clear(_)) => {
            for r in &recipients {
                check(*r)?;
            }
            BoundaryKind::Reveal { to: recipients }
        }
        _ => BoundaryKind::Shared,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub step_id: usize,
    pub segment: usize,
    pub op: String,
    pub params: serde_json::Value,
    pub inputs: Vec<String>,
    pub output: String,
    pub participants: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyPlan {
    pub party: String,
    pub steps: Vec<PlanStep>,
}

fn participants(dag: &QueryDag, mode: ExecMode) -> BTreeSet<PartyId> {
    match mode {
        ExecMode::Clear(p) => [p].into_iter().collect(),
        _ => dag.party_ids().collect(),
    }
}

/// Work the coordinating party of a hybrid operator does alone, in the
/// clear, before the shared part of the operator.
fn coordinator_step(mode: ExecMode) -> Option<(PartyId, &'static str)> {
    match mode {
        ExecMode::HybridJoin { stp } => Some((stp, "match_keys")),
        ExecMode::HybridAgg { stp } => Some((stp, "sort_keys")),
        ExecMode::PublicJoin { party } => Some((party, "match_public_keys")),
        _ => None,
    }
}

/// All steps of the plan in execution order, each with its participants.
pub fn plan_steps(dag: &QueryDag, plan: &Plan) -> Vec<(PlanStep, BTreeSet<PartyId>)> {
    let mut steps = Vec::new();
    let names = |ids: &[NodeId]| -> Vec<String> { ids.iter().map(|i| dag.node(*i).name.clone()).collect() };
    let party_names = |ps: &BTreeSet<PartyId>| -> Vec<String> { ps.iter().map(|p| dag.party_name(*p).to_string()).collect() };
    let mut push = |segment: usize, op: &str, params: serde_json::Value, inputs: Vec<String>, output: String, who: BTreeSet<PartyId>| {
        let step = PlanStep { step_id: steps.len(), segment, op: op.into(), params, inputs, output, participants: party_names(&who) };
        steps.push((step, who));
    };
    for seg in &plan.segments {
        let mut moved = BTreeSet::new();
        for b in plan.boundaries.iter().filter(|b| b.to_segment == seg.id) {
            if !moved.insert((b.relation, format!("{:?}", b.kind))) {
                continue;
            }
            let (op, who): (&str, BTreeSet<PartyId>) = match &b.kind {
                BoundaryKind::ShareIn { .. } | BoundaryKind::Reveal { .. } => {
                    (if matches!(b.kind, BoundaryKind::ShareIn { .. }) { "share_in" } else { "reveal" }, dag.party_ids().collect())
                }
                BoundaryKind::Send { from, to } => ("send", [*from, *to].into_iter().collect()),
                BoundaryKind::Shared | BoundaryKind::Local => continue,
            };
            let params = serde_json::to_value(&b.kind).expect("boundary serializes");
            let rel = dag.node(b.relation).name.clone();
            push(seg.id, op, params, vec![rel.clone()], rel, who);
        }
        for id in &seg.nodes {
            let n = dag.node(*id);
            if let Some((party, op)) = coordinator_step(n.exec) {
                push(seg.id, op, serde_json::Value::Null, names(&n.inputs), n.name.clone(), [party].into_iter().collect());
            }
            let params = serde_json::to_value(&n.kind).expect("operator serializes");
            push(seg.id, n.kind.tag(), params, names(&n.inputs), n.name.clone(), participants(dag, n.exec));
        }
    }
    steps
}

/// One plan per party, holding exactly the steps it takes part in.
pub fn emit_plans(dag: &QueryDag, plan: &Plan) -> BTreeMap<String, PartyPlan> {
    let steps = plan_steps(dag, plan);
    dag.party_ids()
        .map(|p| {
            let name = dag.party_name(p).to_string();
            let mine = steps.iter().filter(|(_, who)| who.contains(&p)).map(|(s, _)| s.clone()).collect();
            (name.clone(), PartyPlan { party: name, steps: mine })
        })
        .collect()
}

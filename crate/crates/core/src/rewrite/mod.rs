//! Compilation: semantics-preserving DAG rewrites that move work out of MPC
//! or replace oblivious operators with cheaper hybrid protocols.

mod hybrids;
mod pushdown;
mod pushup;
mod sorts;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, reveal_authorized};
use crate::ir::{ExecMode, IrError, NodeId, OpKind, OpNode, PartyId, QueryDag, RelationMeta, Owner};

pub use hybrids::insert_hybrids;
pub use pushdown::push_down;
pub use pushup::{push_up, PushUpMode};
pub use sorts::eliminate_sorts;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompileError {
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("node `{node}` needs consent to reveal data-dependent sizes from {parties:?}")]
    ConsentRequired { node: String, parties: Vec<String> },
    #[error("node `{node}` cannot run under MPC: {reason}")]
    UnsupportedUnderMpc { node: String, reason: String },
    #[error("node `{node}` would reveal `{input}` to {party} without authorization")]
    IllegalReveal { node: String, input: String, party: String },
}

/// One applied rewrite.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub pass: String,
    /// The rule that licensed the rewrite.
    pub rule: String,
    pub before: Vec<String>,
    pub after: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteTrace {
    pub entries: Vec<TraceEntry>,
}

impl RewriteTrace {
    pub fn push(&mut self, pass: &str, rule: &str, before: Vec<String>, after: Vec<String>) {
        self.entries.push(TraceEntry { pass: pass.into(), rule: rule.into(), before, after });
    }

    pub fn count(&self, rule: &str) -> usize {
        self.entries.iter().filter(|e| e.rule == rule).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompileOptions {
    /// Apply the optimizing rewrites. When off, only the transformations
    /// needed to make the query executable run.
    pub rewrites: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { rewrites: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compiled {
    pub dag: QueryDag,
    pub trace: RewriteTrace,
}

/// Full compilation pipeline: distinct lowering, analysis, push-down,
/// hybrid insertion, push-up, sort elimination, then support and frontier
/// checks.
pub fn compile(dag: &QueryDag, opts: CompileOptions) -> Result<Compiled, CompileError> {
    let mut trace = RewriteTrace::default();
    let mut d = lower_distinct(dag, &mut trace)?;
    d = analysis::analyze(&d);
    if opts.rewrites {
        d = push_down(&d, &mut trace)?;
        d = insert_hybrids(&d, &mut trace);
    }
    let mode = if opts.rewrites { PushUpMode::Full } else { PushUpMode::RequiredOnly };
    d = push_up(&d, mode, &mut trace)?;
    d = eliminate_sorts(&d, opts.rewrites, &mut trace);
    check_mpc_support(&d)?;
    check_frontier(&d)?;
    Ok(Compiled { dag: d, trace })
}

pub(crate) fn new_node(dag: &mut QueryDag, name: &str, kind: OpKind, inputs: Vec<NodeId>) -> NodeId {
    let id = dag.fresh_id();
    let name = dag.fresh_name(name);
    dag.nodes.insert(
        id,
        OpNode {
            id,
            name,
            kind,
            inputs,
            out_meta: RelationMeta {
                columns: Vec::new(),
                owner: Owner::Partitioned,
                stored_at: Default::default(),
                sorted_by: None,
                row_count_public: true,
            },
            exec: ExecMode::Mpc,
            pinned: false,
            elide_sort: false,
        },
    );
    id
}

/// Removes operators whose results nobody consumes.
pub(crate) fn remove_dead(dag: &mut QueryDag) {
    loop {
        let dead: Vec<NodeId> = dag
            .nodes
            .values()
            .filter(|n| !matches!(n.kind, OpKind::Input { .. } | OpKind::Output { .. }))
            .filter(|n| dag.consumers(n.id).is_empty())
            .map(|n| n.id)
            .collect();
        if dead.is_empty() {
            return;
        }
        for id in dead {
            dag.nodes.remove(&id);
        }
    }
}

/// Rewrites `Distinct` as a count grouped by every column followed by a
/// projection that drops the count.
fn lower_distinct(dag: &QueryDag, trace: &mut RewriteTrace) -> Result<QueryDag, CompileError> {
    let mut d = dag.clone();
    let targets: Vec<NodeId> = d.nodes.values().filter(|n| matches!(n.kind, OpKind::Distinct)).map(|n| n.id).collect();
    for id in targets {
        let node = d.node(id).clone();
        let columns = d.input_meta(id, 0).column_names();
        let mut out = "_rows".to_string();
        while columns.contains(&out) {
            out.push('_');
        }
        let agg = new_node(
            &mut d,
            &format!("{}#groups", node.name),
            OpKind::Aggregate { func: crate::ir::AggFunc::Count, out, group: columns.clone(), over: None, secondary: false },
            node.inputs.clone(),
        );
        let n = d.node_mut(id);
        n.kind = OpKind::Project { columns, shuffle: false };
        n.inputs = vec![agg];
        trace.push("lower_distinct", "distinct-as-grouping", vec![node.name.clone()], vec![d.node(agg).name.clone(), node.name]);
    }
    d.rederive_schemas()?;
    Ok(d)
}

fn unsupported(dag: &QueryDag, id: NodeId, reason: &str) -> CompileError {
    CompileError::UnsupportedUnderMpc { node: dag.node(id).name.clone(), reason: reason.into() }
}

/// Rejects operators the MPC engine cannot execute.
fn check_mpc_support(dag: &QueryDag) -> Result<(), CompileError> {
    for n in dag.nodes.values() {
        if n.exec == ExecMode::Mpc {
            match &n.kind {
                OpKind::Divide { .. } => return Err(unsupported(dag, n.id, "division has no MPC protocol")),
                OpKind::Aggregate { group, .. } if group.len() > 1 => {
                    return Err(unsupported(dag, n.id, "MPC aggregation groups by at most one column"))
                }
                OpKind::Distinct => return Err(unsupported(dag, n.id, "distinct must be lowered")),
                _ => {}
            }
        }
        for i in &n.inputs {
            if !dag.is_flagged(*i) {
                continue;
            }
            let consumes_flags = match (&n.kind, n.exec) {
                (OpKind::Filter { .. } | OpKind::Project { .. } | OpKind::Aggregate { .. }, ExecMode::Mpc) => true,
                (OpKind::Aggregate { .. }, ExecMode::HybridAgg { .. }) => true,
                (_, ExecMode::Clear(_)) => true,
                _ => false,
            };
            if !consumes_flags {
                return Err(unsupported(dag, n.id, "operator cannot consume secretly filtered rows"));
            }
        }
    }
    Ok(())
}

/// Every relation entering a Clear node from elsewhere must be revealable
/// to that node's party.
fn check_frontier(dag: &QueryDag) -> Result<(), CompileError> {
    for n in dag.nodes.values() {
        let ExecMode::Clear(p) = n.exec else { continue };
        for i in &n.inputs {
            let input = dag.node(*i);
            if input.exec == ExecMode::Clear(p) {
                continue;
            }
            let recipients: Vec<PartyId> = match &n.kind {
                OpKind::Output { to } => to.clone(),
                _ => vec![p],
            };
            for r in recipients {
                if matches!(n.kind, OpKind::Output { .. }) || reveal_authorized(dag, *i, r).is_some() {
                    continue;
                }
                return Err(CompileError::IllegalReveal {
                    node: n.name.clone(),
                    input: input.name.clone(),
                    party: dag.party_name(r).to_string(),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn mode_of(c: &Compiled, name: &str) -> ExecMode {
        c.dag.by_name(name).unwrap_or_else(|| panic!("no node {name}")).exec
    }

    #[test]
    fn credit_scores_compiles_to_hybrids() {
        let c = compile(&fixtures::load(fixtures::CREDIT_SCORES), CompileOptions::default()).unwrap();
        let pa = PartyId(0);
        assert_eq!(mode_of(&c, "joined"), ExecMode::HybridJoin { stp: pa });
        assert_eq!(mode_of(&c, "by_zip"), ExecMode::HybridAgg { stp: pa });
        assert_eq!(mode_of(&c, "total_sc"), ExecMode::HybridAgg { stp: pa });
        assert_eq!(mode_of(&c, "avg_in"), ExecMode::HybridJoin { stp: pa });
        assert_eq!(mode_of(&c, "avg_scores"), ExecMode::Clear(pa));
    }

    #[test]
    fn market_concentration_mpc_part_is_small() {
        let c = compile(&fixtures::load(fixtures::MARKET_CONCENTRATION), CompileOptions::default()).unwrap();
        let mpc: Vec<&OpNode> = c.dag.nodes.values().filter(|n| !n.exec.is_clear()).collect();
        let kinds: Vec<&str> = mpc.iter().map(|n| n.kind.tag()).collect();
        assert_eq!(kinds.iter().filter(|k| **k == "aggregate").count(), 2, "{kinds:?}");
        assert!(mpc.iter().all(|n| matches!(n.kind, OpKind::Aggregate { .. } | OpKind::Concat)));
        assert!(c.dag.by_name("rev").map(|n| matches!(n.kind, OpKind::Aggregate { secondary: true, .. })).unwrap());
    }

    #[test]
    fn missing_consent_blocks_aggregation_split() {
        let mut dag = fixtures::load(fixtures::MARKET_CONCENTRATION);
        dag.consent.insert(PartyId(2), false);
        let err = compile(&dag, CompileOptions::default()).unwrap_err();
        assert!(matches!(err, CompileError::ConsentRequired { .. }), "{err:?}");
    }

    #[test]
    fn without_rewrites_only_required_changes() {
        let c = compile(&fixtures::load(fixtures::CREDIT_SCORES), CompileOptions { rewrites: false }).unwrap();
        assert_eq!(mode_of(&c, "joined"), ExecMode::Mpc);
        assert_eq!(mode_of(&c, "avg_scores"), ExecMode::Clear(PartyId(0)));
        assert!(c.dag.nodes.values().all(|n| !n.exec.is_hybrid()));
    }

    #[test]
    fn compile_is_idempotent() {
        for (name, text) in fixtures::ALL {
            let once = compile(&fixtures::load(text), CompileOptions::default()).unwrap();
            let twice = compile(&once.dag, CompileOptions::default()).unwrap();
            assert_eq!(once.dag.structure(), twice.dag.structure(), "{name}");
        }
    }

    #[test]
    fn single_party_query_has_no_mpc() {
        let doc = r#"{"parties":[{"name":"a"},{"name":"b"}],"nodes":[
            {"id":"x","kind":"input","at":"a","out_columns":[{"name":"k"},{"name":"v"}]},
            {"id":"s","kind":"aggregate","inputs":["x"],"params":{"func":"sum","out":"t","group":["k"],"over":"v"}},
            {"id":"o","kind":"output","inputs":["s"],"to":["a"]}]}"#;
        let dag = crate::ir::build_dag(&crate::ir::parse_document(doc).unwrap()).unwrap();
        let c = compile(&dag, CompileOptions::default()).unwrap();
        assert!(c.dag.nodes.values().all(|n| n.exec.is_clear()));
    }
}

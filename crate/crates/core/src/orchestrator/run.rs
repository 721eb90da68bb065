//! Executes a compiled DAG: clear steps at their party, MPC steps on the
//! shared engine, with every boundary crossing going over the simulated
//! network.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::analysis::reveal_authorized;
use crate::clear::oracle::{conform_input, InputTables};
use crate::clear::{run_clear_step, ClearError, Table};
use crate::ir::{ExecMode, NodeId, OpKind, PartyId, QueryDag};
use crate::mpc::{AggSpec, Engine, MpcError, OpCounters, SharedRelation, TranscriptRecord};
use crate::plan::{partition, PlanError};

use super::ledger::{LeakItem, Ledger};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Clear(#[from] ClearError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("party {party} provided no data for input `{relation}`")]
    MissingInput { party: String, relation: String },
    #[error("`{relation}` may not be revealed to {party}")]
    UnauthorizedReveal { relation: String, party: String },
    #[error("`{node}` cannot execute as {mode}")]
    Unsupported { node: String, mode: String },
}

#[derive(Clone, Debug)]
pub struct RunResult {
    /// Delivered result of every Output node, keyed by node name.
    pub outputs: BTreeMap<String, Table>,
    pub ledger: Ledger,
    pub counters: OpCounters,
    /// Counters attributed to the node whose execution incurred them.
    pub per_node: BTreeMap<String, OpCounters>,
    /// Physical row count of every relation, flagged-out rows included.
    pub rows: BTreeMap<String, usize>,
    pub transcript: Vec<TranscriptRecord>,
}

impl RunResult {
    pub fn transcript_of(&self, party: PartyId) -> Vec<&TranscriptRecord> {
        let me = crate::mpc::Endpoint::Party(party);
        self.transcript.iter().filter(|r| r.sender == me || r.receiver == me).collect()
    }
}

enum Value {
    Clear(PartyId, Table),
    Shared(SharedRelation),
}

struct Runner<'a> {
    dag: &'a QueryDag,
    engine: Engine,
    env: BTreeMap<NodeId, Value>,
    /// Copies of clear relations delivered to other parties.
    copies: BTreeMap<(NodeId, PartyId), Table>,
    /// Secret-shared versions of clear relations.
    shared: BTreeMap<NodeId, SharedRelation>,
    /// Shared relations with their filtered-out rows removed.
    compacted: BTreeMap<NodeId, SharedRelation>,
    per_node: BTreeMap<String, OpCounters>,
}

impl<'a> Runner<'a> {
    fn charge<T>(&mut self, node: NodeId, f: impl FnOnce(&mut Self) -> Result<T, RunError>) -> Result<T, RunError> {
        let before = self.engine.counters;
        let out = f(self)?;
        let spent = self.engine.counters.minus(&before);
        if !spent.is_zero() {
            self.per_node.entry(self.dag.node(node).name.clone()).or_default().add(&spent);
        }
        Ok(out)
    }

    fn authorize(&self, u: NodeId, consumer: NodeId, party: PartyId) -> Result<(), RunError> {
        if matches!(self.dag.node(consumer).kind, OpKind::Output { .. }) || reveal_authorized(self.dag, u, party).is_some() {
            return Ok(());
        }
        Err(RunError::UnauthorizedReveal {
            relation: self.dag.node(u).name.clone(),
            party: self.dag.party_name(party).to_string(),
        })
    }

    /// Relation `u` as a clear table at `party`.
    fn clear_at(&mut self, u: NodeId, consumer: NodeId, party: PartyId) -> Result<Table, RunError> {
        if let Some(t) = self.copies.get(&(u, party)) {
            return Ok(t.clone());
        }
        let table = match &self.env[&u] {
            Value::Clear(p, t) if *p == party => return Ok(t.clone()),
            Value::Clear(p, t) => {
                let (p, t) = (*p, t.clone());
                self.authorize(u, consumer, party)?;
                let got = self.engine.send_plain(p, party, &t)?;
                self.engine.record_columns(party, &self.dag.node(u).name, &t.schema);
                got
            }
            Value::Shared(_) => {
                self.authorize(u, consumer, party)?;
                let rel = self.compact(u)?;
                self.engine.reveal_to(&rel, &rel.schema.clone(), &[party])?
            }
        };
        self.copies.insert((u, party), table.clone());
        Ok(table)
    }

    /// Shared relation `u` with invalid rows dropped: shuffle, then open the
    /// flags to everyone.
    fn compact(&mut self, u: NodeId) -> Result<SharedRelation, RunError> {
        let Value::Shared(rel) = &self.env[&u] else { unreachable!("compacting a clear relation") };
        if rel.flag.is_none() {
            return Ok(rel.clone());
        }
        if let Some(c) = self.compacted.get(&u) {
            return Ok(c.clone());
        }
        let rel = rel.clone();
        let out = self.charge(u, |r| {
            let shuffled = r.engine.shuffle(&rel)?;
            let bits = r.engine.open_all(&[shuffled.flag.as_ref().expect("flagged")])?.remove(0);
            let keep: Vec<usize> = (0..rel.rows).filter(|i| bits[*i] == crate::mpc::Fp::ONE).collect();
            let mut out = shuffled.gather(&rel.name, &keep);
            out.flag = None;
            r.engine.record_cardinality(&rel.name);
            Ok(out)
        })?;
        self.compacted.insert(u, out.clone());
        Ok(out)
    }

    /// Relation `u` in shared form.
    fn shared_of(&mut self, u: NodeId) -> Result<SharedRelation, RunError> {
        match &self.env[&u] {
            Value::Shared(rel) => Ok(rel.clone()),
            Value::Clear(p, t) => {
                if let Some(s) = self.shared.get(&u) {
                    return Ok(s.clone());
                }
                let (p, t) = (*p, t.clone());
                let s = self.engine.share_in(&t, p, &self.dag.node(u).name)?;
                self.shared.insert(u, s.clone());
                Ok(s)
            }
        }
    }

    fn exec(&mut self, id: NodeId, inputs: &InputTables) -> Result<(), RunError> {
        let dag = self.dag;
        let n = dag.node(id);
        self.engine.set_step(n.name.clone());
        let value = match (&n.kind, n.exec) {
            (OpKind::Input { at }, _) => {
                if !inputs.contains_key(&n.name) {
                    return Err(RunError::MissingInput { party: dag.party_name(*at).to_string(), relation: n.name.clone() });
                }
                let t = conform_input(dag, &n.name, inputs)?;
                self.engine.record_columns(*at, &n.name, &t.schema);
                Value::Clear(*at, t)
            }
            (OpKind::Output { to }, _) => {
                let mut delivered = None;
                for r in to {
                    let t = self.clear_at(n.inputs[0], id, *r)?;
                    self.engine.record(*r, LeakItem::Output { relation: n.name.clone() });
                    delivered = Some(t);
                }
                Value::Clear(to[0], delivered.expect("output has a recipient"))
            }
            (kind, ExecMode::Clear(p)) => {
                let args = n.inputs.iter().map(|u| self.clear_at(*u, id, p)).collect::<Result<Vec<_>, _>>()?;
                let refs: Vec<&Table> = args.iter().collect();
                let t = run_clear_step(kind, &refs)?;
                self.engine.record_columns(p, &n.name, &t.schema);
                Value::Clear(p, t)
            }
            (_, mode) => {
                let args = n.inputs.iter().map(|u| self.shared_of(*u)).collect::<Result<Vec<_>, _>>()?;
                Value::Shared(self.charge(id, |r| r.mpc_step(id, mode, &args))?)
            }
        };
        self.env.insert(id, value);
        Ok(())
    }

    fn mpc_step(&mut self, id: NodeId, mode: ExecMode, args: &[SharedRelation]) -> Result<SharedRelation, RunError> {
        let dag = self.dag;
        let n = dag.node(id);
        let name = n.name.as_str();
        let e = &mut self.engine;
        let unsupported = || RunError::Unsupported { node: name.to_string(), mode: format!("{mode:?}") };
        let out = match (&n.kind, mode) {
            (OpKind::Concat, ExecMode::Mpc) => {
                let refs: Vec<&SharedRelation> = args.iter().collect();
                e.concat(&refs, name)?
            }
            (OpKind::Project { columns, shuffle }, ExecMode::Mpc) => {
                let p = args[0].project(name, columns)?;
                if *shuffle {
                    e.shuffle(&p)?
                } else {
                    p
                }
            }
            (OpKind::Filter { column, cmp, value }, ExecMode::Mpc) => e.filter_flags(&args[0], column, *cmp, *value)?,
            (OpKind::Join { left, .. }, ExecMode::Mpc) if left.is_empty() => e.cross_join(&args[0], &args[1], name)?,
            (OpKind::Join { left, right }, ExecMode::Mpc) => e.mpc_join(&args[0], &args[1], &left[0], &right[0], name)?,
            (OpKind::Join { left, right }, ExecMode::HybridJoin { stp }) => {
                e.hybrid_join(&args[0], &args[1], &left[0], &right[0], stp, name)?
            }
            (OpKind::Join { left, right }, ExecMode::PublicJoin { party }) => {
                e.public_join(&args[0], &args[1], &left[0], &right[0], party, name)?
            }
            (OpKind::Aggregate { func, out, group, over, .. }, ExecMode::Mpc | ExecMode::HybridAgg { .. }) => {
                if group.len() > 1 {
                    return Err(unsupported());
                }
                let spec = AggSpec { func: *func, group: group.first().map(String::as_str), over: over.as_deref(), out };
                match mode {
                    ExecMode::HybridAgg { stp } => e.hybrid_aggregate(&args[0], &spec, stp, name)?,
                    _ => e.mpc_aggregate(&args[0], &spec, n.elide_sort, name)?,
                }
            }
            (OpKind::Multiply { out, left, right }, ExecMode::Mpc) => e.multiply_columns(&args[0], left, right, out)?,
            (OpKind::ScalarMul { out, column, scalar }, ExecMode::Mpc) => e.scalar_multiply(&args[0], column, *scalar, out)?,
            (OpKind::Enumerate { out }, ExecMode::Mpc) => e.enumerate(&args[0], out)?,
            (OpKind::SortBy { .. }, ExecMode::Mpc) if n.elide_sort => args[0].clone(),
            (OpKind::SortBy { column }, ExecMode::Mpc) => e.oblivious_sort(&args[0], column)?,
            _ => return Err(unsupported()),
        };
        Ok(out.renamed(name))
    }
}

/// Runs a compiled DAG over the given inputs (keyed by Input node name).
/// `seed` drives every random choice of the engine.
pub fn run(dag: &QueryDag, inputs: &InputTables, seed: u64) -> Result<RunResult, RunError> {
    let plan = partition(dag)?;
    let mut runner = Runner {
        dag,
        engine: Engine::new(dag.party_count(), seed),
        env: BTreeMap::new(),
        copies: BTreeMap::new(),
        shared: BTreeMap::new(),
        compacted: BTreeMap::new(),
        per_node: BTreeMap::new(),
    };
    for seg in &plan.segments {
        for id in &seg.nodes {
            runner.exec(*id, inputs)?;
        }
    }
    if !runner.engine.net.drained() {
        return Err(MpcError::Protocol("undelivered messages at end of run".into()).into());
    }
    let mut outputs = BTreeMap::new();
    let mut rows = BTreeMap::new();
    for (id, v) in &runner.env {
        let n = dag.node(*id);
        let len = match v {
            Value::Clear(_, t) => t.len(),
            Value::Shared(r) => r.rows,
        };
        rows.insert(n.name.clone(), len);
        if let (OpKind::Output { .. }, Value::Clear(_, t)) = (&n.kind, v) {
            outputs.insert(n.name.clone(), t.clone());
        }
    }
    Ok(RunResult {
        outputs,
        counters: runner.engine.counters,
        ledger: runner.engine.ledger,
        per_node: runner.per_node,
        rows,
        transcript: runner.engine.net.transcript,
    })
}

/// Reads `<dir>/<input>.csv` for every Input node.
pub fn load_inputs(dag: &QueryDag, dir: &std::path::Path) -> Result<InputTables, RunError> {
    let mut out = InputTables::new();
    for n in dag.nodes.values() {
        let OpKind::Input { at } = n.kind else { continue };
        let path = dir.join(format!("{}.csv", n.name));
        if !path.exists() {
            return Err(RunError::MissingInput { party: dag.party_name(at).to_string(), relation: n.name.clone() });
        }
        out.insert(n.name.clone(), crate::clear::read_table(&path)?);
    }
    Ok(out)
}

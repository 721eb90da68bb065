//! Relational operator DAG, schemas, parties and trust annotations.
//!
//! A [`QueryDag`] is built from a [`QueryDocument`] (see [`build_dag`]) and is
//! immutable from the point of view of the analysis and rewrite passes: every
//! pass takes a DAG by reference and returns a fresh copy.

mod deps;
mod doc;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use deps::{column_deps, ColumnDeps};
pub use doc::{build_dag, parse_document, ColumnDoc, NodeDoc, PartyDoc, QueryDocument};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrError {
    #[error("malformed query document: {0}")]
    Parse(String),
    #[error("node `{node}`: unknown column `{column}`")]
    UnknownColumn { node: String, column: String },
    #[error("node `{node}` is part of a cycle")]
    CycleDetected { node: String },
    #[error("node `{node}`: expected {expected} inputs, found {found}")]
    ArityMismatch { node: String, expected: String, found: usize },
    #[error("query has no output node with a recipient")]
    NoOutput,
    #[error("unknown node `{node}`")]
    UnknownNode { node: String },
    #[error("node `{node}`: unknown party `{party}`")]
    UnknownParty { node: String, party: String },
    #[error("duplicate node id `{node}`")]
    DuplicateNode { node: String },
    #[error("node `{node}`: duplicate column `{column}`")]
    DuplicateColumn { node: String, column: String },
    #[error("node `{node}`: inputs have incompatible schemas")]
    SchemaMismatch { node: String },
    #[error("node `{node}`: unknown operator kind `{kind}`")]
    UnknownKind { node: String, kind: String },
    #[error("node `{node}`: bad parameters: {message}")]
    BadParams { node: String, message: String },
}

/// Dense party index, `0..P-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartyId(pub u16);

impl PartyId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub id: PartyId,
    pub name: String,
    pub endpoint: String,
}

/// Set of parties authorized to learn a column's cleartext values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrustSet(BTreeSet<PartyId>);

impl TrustSet {
    pub fn empty() -> Self {
        TrustSet(BTreeSet::new())
    }

    /// Every party: the trust set of a public column.
    pub fn full(parties: usize) -> Self {
        TrustSet((0..parties).map(|p| PartyId(p as u16)).collect())
    }

    pub fn contains(&self, p: PartyId) -> bool {
        self.0.contains(&p)
    }

    pub fn insert(&mut self, p: PartyId) {
        self.0.insert(p);
    }

    pub fn intersect(&self, other: &TrustSet) -> TrustSet {
        TrustSet(self.0.intersection(&other.0).copied().collect())
    }

    pub fn is_subset(&self, other: &TrustSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = PartyId> + '_ {
        self.0.iter().copied()
    }

    pub fn first(&self) -> Option<PartyId> {
        self.0.iter().next().copied()
    }
}

impl FromIterator<PartyId> for TrustSet {
    fn from_iter<I: IntoIterator<Item = PartyId>>(iter: I) -> Self {
        TrustSet(iter.into_iter().collect())
    }
}

/// The only value type: 64-bit signed integers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    #[default]
    Int,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    #[serde(default)]
    pub vtype: ValueType,
    pub trust: TrustSet,
}

impl ColumnMeta {
    pub fn new(name: impl Into<String>) -> Self {
        ColumnMeta { name: name.into(), vtype: ValueType::Int, trust: TrustSet::empty() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Owner {
    Single(PartyId),
    Partitioned,
    Public,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationMeta {
    pub columns: Vec<ColumnMeta>,
    pub owner: Owner,
    pub stored_at: BTreeSet<PartyId>,
    pub sorted_by: Option<String>,
    pub row_count_public: bool,
}

impl RelationMeta {
    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnMeta> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
}

impl Cmp {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Cmp::Eq => lhs == rhs,
            Cmp::Lt => lhs < rhs,
            Cmp::Gt => lhs > rhs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFunc {
    Sum,
    Count,
}

/// Operator kind together with its parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpKind {
    Input {
        at: PartyId,
    },
    Concat,
    Project {
        columns: Vec<String>,
        /// Obliviously shuffle before the relation leaves MPC.
        #[serde(default)]
        shuffle: bool,
    },
    Filter {
        column: String,
        cmp: Cmp,
        value: i64,
    },
    /// Inner equi-join on at most one key column per side; no keys is a cross join.
    Join {
        left: Vec<String>,
        right: Vec<String>,
    },
    Aggregate {
        func: AggFunc,
        out: String,
        #[serde(default)]
        group: Vec<String>,
        #[serde(default)]
        over: Option<String>,
        /// Combines per-party partial aggregates; never split again.
        #[serde(default)]
        secondary: bool,
    },
    Multiply {
        out: String,
        left: String,
        right: String,
    },
    /// `out = numerator * scale / by`, truncating toward zero.
    Divide {
        out: String,
        numerator: String,
        by: String,
        #[serde(default = "unit_scale")]
        scale: i64,
    },
    ScalarMul {
        out: String,
        column: String,
        scalar: i64,
    },
    Enumerate {
        out: String,
    },
    SortBy {
        column: String,
    },
    Distinct,
    Output {
        to: Vec<PartyId>,
    },
}

fn unit_scale() -> i64 {
    1
}

impl OpKind {
    pub fn tag(&self) -> &'static str {
        match self {
            OpKind::Input { .. } => "input",
            OpKind::Concat => "concat",
            OpKind::Project { .. } => "project",
            OpKind::Filter { .. } => "filter",
            OpKind::Join { .. } => "join",
            OpKind::Aggregate { .. } => "aggregate",
            OpKind::Multiply { .. } => "multiply",
            OpKind::Divide { .. } => "divide",
            OpKind::ScalarMul { .. } => "scalar_mul",
            OpKind::Enumerate { .. } => "enumerate",
            OpKind::SortBy { .. } => "sort_by",
            OpKind::Distinct => "distinct",
            OpKind::Output { .. } => "output",
        }
    }

    /// Operators whose output can be recomputed from the rows of a concat's
    /// inputs independently.
    pub fn is_distributive(&self) -> bool {
        matches!(
            self,
            OpKind::Project { .. }
                | OpKind::Filter { .. }
                | OpKind::Multiply { .. }
                | OpKind::Divide { .. }
                | OpKind::ScalarMul { .. }
        )
    }
}

/// Where and how a node executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExecMode {
    Clear(PartyId),
    Mpc,
    HybridJoin { stp: PartyId },
    PublicJoin { party: PartyId },
    HybridAgg { stp: PartyId },
}

impl ExecMode {
    pub fn is_clear(self) -> bool {
        matches!(self, ExecMode::Clear(_))
    }

    pub fn is_hybrid(self) -> bool {
        matches!(self, ExecMode::HybridJoin { .. } | ExecMode::PublicJoin { .. } | ExecMode::HybridAgg { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpNode {
    pub id: NodeId,
    /// Relation name; unique within a DAG.
    pub name: String,
    pub kind: OpKind,
    pub inputs: Vec<NodeId>,
    pub out_meta: RelationMeta,
    pub exec: ExecMode,
    /// Execution mode fixed by a rewrite; analysis does not reassign it.
    #[serde(default)]
    pub pinned: bool,
    /// The oblivious sort inside this operator is skipped (input already sorted).
    #[serde(default)]
    pub elide_sort: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevealReason {
    /// The recipient is in the trust set of every revealed column.
    Trust,
    /// The revealed relation is recoverable from the recipient's output.
    Reversible,
    /// Group keys of a leaf count; recoverable from the count output.
    CountLeaf,
}

/// A reveal of `node`'s relation to `party` licensed by a rewrite.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AuthorizedReveal {
    pub node: NodeId,
    pub party: PartyId,
    pub reason: RevealReason,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryDag {
    pub nodes: BTreeMap<NodeId, OpNode>,
    pub parties: Vec<Party>,
    /// Per-party consent to rewrites that make MPC input sizes data-dependent.
    pub consent: BTreeMap<PartyId, bool>,
    /// Party designated to act as selectively-trusted party for hybrid operators.
    pub stp: Option<PartyId>,
    #[serde(default)]
    pub authorized_reveals: Vec<AuthorizedReveal>,
    pub next_id: usize,
}

impl QueryDag {
    pub fn node(&self, id: NodeId) -> &OpNode {
        &self.nodes[&id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut OpNode {
        self.nodes.get_mut(&id).expect("node id in DAG")
    }

    pub fn get(&self, id: NodeId) -> Option<&OpNode> {
        self.nodes.get(&id)
    }

    pub fn by_name(&self, name: &str) -> Option<&OpNode> {
        self.nodes.values().find(|n| n.name == name)
    }

    pub fn party_count(&self) -> usize {
        self.parties.len()
    }

    pub fn party_ids(&self) -> impl Iterator<Item = PartyId> + '_ {
        self.parties.iter().map(|p| p.id)
    }

    pub fn party_name(&self, p: PartyId) -> &str {
        &self.parties[p.index()].name
    }

    pub fn party_by_name(&self, name: &str) -> Option<PartyId> {
        self.parties.iter().find(|p| p.name == name).map(|p| p.id)
    }

    pub fn fresh_id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Picks a relation name not yet used in the DAG.
    pub fn fresh_name(&self, base: &str) -> String {
        if self.by_name(base).is_none() {
            return base.to_string();
        }
        (2..).map(|i| format!("{base}~{i}")).find(|n| self.by_name(n).is_none()).unwrap()
    }

    pub fn consumers(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes.values().filter(|n| n.inputs.contains(&id)).map(|n| n.id).collect()
    }

    pub fn outputs(&self) -> impl Iterator<Item = &OpNode> {
        self.nodes.values().filter(|n| matches!(n.kind, OpKind::Output { .. }))
    }

    pub fn input_meta(&self, id: NodeId, i: usize) -> &RelationMeta {
        &self.node(self.node(id).inputs[i]).out_meta
    }

    /// Topological order; ties broken by ascending node id.
    pub fn topo_order(&self) -> Result<Vec<NodeId>, IrError> {
        let mut indegree: BTreeMap<NodeId, usize> = BTreeMap::new();
        for n in self.nodes.values() {
            indegree.insert(n.id, n.inputs.len());
        }
        let mut ready: BTreeSet<NodeId> =
            indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut consumers: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for n in self.nodes.values() {
            for i in &n.inputs {
                consumers.entry(*i).or_default().push(n.id);
            }
        }
        while let Some(id) = ready.pop_first() {
            order.push(id);
            for c in consumers.get(&id).into_iter().flatten() {
                let d = indegree.get_mut(c).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(*c);
                }
            }
        }
        if order.len() != self.nodes.len() {
            let stuck = indegree.iter().find(|(id, d)| **d > 0 && !order.contains(id)).unwrap().0;
            return Err(IrError::CycleDetected { node: self.node(*stuck).name.clone() });
        }
        Ok(order)
    }

    /// All transitive descendants of `id` (excluding `id`).
    pub fn descendants(&self, id: NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            for c in self.consumers(n) {
                if out.insert(c) {
                    stack.push(c);
                }
            }
        }
        out
    }

    /// All transitive ancestors of `id` (excluding `id`).
    pub fn ancestors(&self, id: NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            for i in &self.node(n).inputs {
                if out.insert(*i) {
                    stack.push(*i);
                }
            }
        }
        out
    }

    /// Whether `id` produces a relation carrying a secret row-validity flag,
    /// i.e. an MPC filter whose rows could not be physically removed.
    pub fn is_flagged(&self, id: NodeId) -> bool {
        let n = self.node(id);
        if n.exec != ExecMode::Mpc {
            return false;
        }
        match n.kind {
            OpKind::Filter { .. } => true,
            OpKind::Project { .. } => self.is_flagged(n.inputs[0]),
            _ => false,
        }
    }

    /// Structural fingerprint independent of node ids: used to compare DAGs
    /// produced along different paths.
    pub fn structure(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .nodes
            .values()
            .map(|n| {
                let inputs: Vec<&str> = n.inputs.iter().map(|i| self.node(*i).name.as_str()).collect();
                format!(
                    "{}|{:?}|{:?}|{:?}|{:?}|{}",
                    n.name, n.kind, inputs, n.out_meta, n.exec, n.elide_sort
                )
            })
            .collect();
        out.sort();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dag serializes")
    }

    pub fn from_json(text: &str) -> Result<QueryDag, IrError> {
        serde_json::from_str(text).map_err(|e| IrError::Parse(e.to_string()))
    }

    /// Deep copy of `roots` and all of their ancestors, with fresh ids
    /// assigned in topological order.
    pub fn clone_subdag(&self, roots: &[NodeId]) -> Result<QueryDag, IrError> {
        let mut keep = BTreeSet::new();
        for r in roots {
            if !self.nodes.contains_key(r) {
                return Err(IrError::UnknownNode { node: r.to_string() });
            }
            keep.insert(*r);
            keep.extend(self.ancestors(*r));
        }
        let order: Vec<NodeId> = self.topo_order()?.into_iter().filter(|id| keep.contains(id)).collect();
        let remap: BTreeMap<NodeId, NodeId> =
            order.iter().enumerate().map(|(i, old)| (*old, NodeId(i))).collect();
        let mut nodes = BTreeMap::new();
        for old in &order {
            let mut n = self.node(*old).clone();
            n.id = remap[old];
            n.inputs = n.inputs.iter().map(|i| remap[i]).collect();
            nodes.insert(n.id, n);
        }
        let authorized_reveals = self
            .authorized_reveals
            .iter()
            .filter_map(|r| remap.get(&r.node).map(|n| AuthorizedReveal { node: *n, ..r.clone() }))
            .collect();
        Ok(QueryDag {
            nodes,
            parties: self.parties.clone(),
            consent: self.consent.clone(),
            stp: self.stp,
            authorized_reveals,
            next_id: order.len(),
        })
    }

    /// Re-derives every node's column list from its operator and inputs,
    /// keeping trust sets of input relations. Used after structural rewrites.
    pub fn rederive_schemas(&mut self) -> Result<(), IrError> {
        for id in self.topo_order()? {
            let n = self.node(id);
            if matches!(n.kind, OpKind::Input { .. }) {
                continue;
            }
            let inputs: Vec<Vec<String>> =
                n.inputs.iter().map(|i| self.node(*i).out_meta.column_names()).collect();
            let names = derive_columns(&n.name, &n.kind, &inputs)?;
            let old = &n.out_meta.columns;
            let columns = names
                .into_iter()
                .map(|name| {
                    old.iter()
                        .find(|c| c.name == name)
                        .cloned()
                        .unwrap_or_else(|| ColumnMeta::new(name))
                })
                .collect();
            self.node_mut(id).out_meta.columns = columns;
        }
        Ok(())
    }
}

fn resolve<'a>(node: &str, cols: &'a [String], name: &str) -> Result<&'a String, IrError> {
    cols.iter()
        .find(|c| *c == name)
        .ok_or_else(|| IrError::UnknownColumn { node: node.to_string(), column: name.to_string() })
}

fn append(node: &str, mut cols: Vec<String>, out: &str) -> Result<Vec<String>, IrError> {
    if cols.iter().any(|c| c == out) {
        return Err(IrError::DuplicateColumn { node: node.to_string(), column: out.to_string() });
    }
    cols.push(out.to_string());
    Ok(cols)
}

/// Output column names of an operator given its inputs' column names.
pub fn derive_columns(node: &str, kind: &OpKind, inputs: &[Vec<String>]) -> Result<Vec<String>, IrError> {
    let arity = |expected: &str, ok: bool| {
        if ok {
            Ok(())
        } else {
            Err(IrError::ArityMismatch { node: node.to_string(), expected: expected.to_string(), found: inputs.len() })
        }
    };
    match kind {
        OpKind::Input { .. } => {
            arity("0", inputs.is_empty())?;
            unreachable!("input schemas come from the document")
        }
        OpKind::Concat => {
            arity(">= 2", inputs.len() >= 2)?;
            if inputs.iter().any(|c| c.len() != inputs[0].len()) {
                return Err(IrError::SchemaMismatch { node: node.to_string() });
            }
            Ok(inputs[0].clone())
        }
        OpKind::Join { left, right } => {
            arity("2", inputs.len() == 2)?;
            if left.len() != right.len() || left.len() > 1 {
                return Err(IrError::BadParams {
                    node: node.to_string(),
                    message: "join takes zero or one key column per side".into(),
                });
            }
            for k in left {
                resolve(node, &inputs[0], k)?;
            }
            for k in right {
                resolve(node, &inputs[1], k)?;
            }
            let mut out = inputs[0].clone();
            for c in &inputs[1] {
                if right.contains(c) {
                    continue;
                }
                if out.contains(c) {
                    return Err(IrError::DuplicateColumn { node: node.to_string(), column: c.clone() });
                }
                out.push(c.clone());
            }
            Ok(out)
        }
        _ => {
            arity("1", inputs.len() == 1)?;
            let cols = &inputs[0];
            match kind {
                OpKind::Project { columns, .. } => {
                    let mut seen = BTreeSet::new();
                    for c in columns {
                        resolve(node, cols, c)?;
                        if !seen.insert(c) {
                            return Err(IrError::DuplicateColumn { node: node.to_string(), column: c.clone() });
                        }
                    }
                    Ok(columns.clone())
                }
                OpKind::Filter { column, .. } | OpKind::SortBy { column } => {
                    resolve(node, cols, column)?;
                    Ok(cols.clone())
                }
                OpKind::Aggregate { func, out, group, over, .. } => {
                    let mut res = Vec::new();
                    for g in group {
                        resolve(node, cols, g)?;
                        res.push(g.clone());
                    }
                    match (func, over) {
                        (AggFunc::Sum, Some(o)) => {
                            resolve(node, cols, o)?;
                        }
                        (AggFunc::Sum, None) => {
                            return Err(IrError::BadParams {
                                node: node.to_string(),
                                message: "sum needs an `over` column".into(),
                            })
                        }
                        (AggFunc::Count, _) => {}
                    }
                    append(node, res, out)
                }
                OpKind::Multiply { out, left, right } => {
                    resolve(node, cols, left)?;
                    resolve(node, cols, right)?;
                    append(node, cols.clone(), out)
                }
                OpKind::Divide { out, numerator, by, .. } => {
                    resolve(node, cols, numerator)?;
                    resolve(node, cols, by)?;
                    append(node, cols.clone(), out)
                }
                OpKind::ScalarMul { out, column, .. } => {
                    resolve(node, cols, column)?;
                    append(node, cols.clone(), out)
                }
                OpKind::Enumerate { out } => append(node, cols.clone(), out),
                OpKind::Distinct | OpKind::Output { .. } => Ok(cols.clone()),
                OpKind::Input { .. } | OpKind::Concat | OpKind::Join { .. } => unreachable!(),
            }
        }
    }
}

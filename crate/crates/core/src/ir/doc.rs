//! JSON query documents: the user-facing query format.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    derive_columns, ColumnMeta, ExecMode, IrError, NodeId, OpKind, OpNode, Owner, Party, PartyId,
    QueryDag, RelationMeta, TrustSet, ValueType,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryDocument {
    pub parties: Vec<PartyDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stp: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub consent: BTreeMap<String, bool>,
    pub nodes: Vec<NodeDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartyDoc {
    pub name: String,
    #[serde(default)]
    pub endpoint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub out_columns: Vec<ColumnDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub to: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnDoc {
    pub name: String,
    #[serde(default)]
    pub trust: Vec<String>,
}

pub fn parse_document(text: &str) -> Result<QueryDocument, IrError> {
    serde_json::from_str(text).map_err(|e| IrError::Parse(e.to_string()))
}

const KINDS: &[&str] = &[
    "input", "concat", "project", "filter", "join", "aggregate", "multiply", "divide", "scalar_mul",
    "enumerate", "sort_by", "distinct", "output",
];

fn parse_kind(doc: &NodeDoc, party: &dyn Fn(&str) -> Result<PartyId, IrError>) -> Result<OpKind, IrError> {
    if !KINDS.contains(&doc.kind.as_str()) {
        return Err(IrError::UnknownKind { node: doc.id.clone(), kind: doc.kind.clone() });
    }
    match doc.kind.as_str() {
        "input" => {
            let at = doc.at.as_deref().ok_or_else(|| IrError::BadParams {
                node: doc.id.clone(),
                message: "input needs `at`".into(),
            })?;
            Ok(OpKind::Input { at: party(at)? })
        }
        "output" => {
            if doc.to.is_empty() {
                return Err(IrError::NoOutput);
            }
            let mut to: Vec<PartyId> = doc.to.iter().map(|p| party(p)).collect::<Result<_, _>>()?;
            to.sort();
            to.dedup();
            Ok(OpKind::Output { to })
        }
        kind => {
            let mut params = match &doc.params {
                Value::Null => serde_json::Map::new(),
                Value::Object(m) => m.clone(),
                _ => {
                    return Err(IrError::BadParams { node: doc.id.clone(), message: "params must be an object".into() })
                }
            };
            params.insert("op".into(), Value::String(kind.into()));
            serde_json::from_value(Value::Object(params))
                .map_err(|e| IrError::BadParams { node: doc.id.clone(), message: e.to_string() })
        }
    }
}

/// Validates a query document and builds its DAG. Node ids are assigned in
/// document order; inputs may reference nodes declared later.
pub fn build_dag(doc: &QueryDocument) -> Result<QueryDag, IrError> {
    let parties: Vec<Party> = doc
        .parties
        .iter()
        .enumerate()
        .map(|(i, p)| Party { id: PartyId(i as u16), name: p.name.clone(), endpoint: p.endpoint.clone() })
        .collect();
    if parties.is_empty() {
        return Err(IrError::Parse("query declares no parties".into()));
    }
    let by_name: BTreeMap<&str, PartyId> = parties.iter().map(|p| (p.name.as_str(), p.id)).collect();
    if by_name.len() != parties.len() {
        return Err(IrError::Parse("duplicate party name".into()));
    }
    let lookup = |node: &str, name: &str| {
        by_name
            .get(name)
            .copied()
            .ok_or_else(|| IrError::UnknownParty { node: node.to_string(), party: name.to_string() })
    };

    let mut ids: BTreeMap<&str, NodeId> = BTreeMap::new();
    for (i, n) in doc.nodes.iter().enumerate() {
        if ids.insert(n.id.as_str(), NodeId(i)).is_some() {
            return Err(IrError::DuplicateNode { node: n.id.clone() });
        }
    }

    let mut nodes = BTreeMap::new();
    for (i, n) in doc.nodes.iter().enumerate() {
        let kind = parse_kind(n, &|p| lookup(&n.id, p))?;
        let inputs = n
            .inputs
            .iter()
            .map(|name| ids.get(name.as_str()).copied().ok_or_else(|| IrError::UnknownNode { node: name.clone() }))
            .collect::<Result<Vec<_>, _>>()?;
        let columns = if matches!(kind, OpKind::Input { .. }) {
            if !inputs.is_empty() {
                return Err(IrError::ArityMismatch { node: n.id.clone(), expected: "0".into(), found: inputs.len() });
            }
            if n.out_columns.is_empty() {
                return Err(IrError::BadParams { node: n.id.clone(), message: "input needs `out_columns`".into() });
            }
            let mut seen = BTreeSet::new();
            n.out_columns
                .iter()
                .map(|c| {
                    if !seen.insert(c.name.as_str()) {
                        return Err(IrError::DuplicateColumn { node: n.id.clone(), column: c.name.clone() });
                    }
                    let trust = c.trust.iter().map(|p| lookup(&n.id, p)).collect::<Result<TrustSet, _>>()?;
                    Ok(ColumnMeta { name: c.name.clone(), vtype: ValueType::Int, trust })
                })
                .collect::<Result<Vec<_>, _>>()?
        } else {
            Vec::new()
        };
        let owner = match kind {
            OpKind::Input { at } => Owner::Single(at),
            _ => Owner::Public,
        };
        nodes.insert(
            NodeId(i),
            OpNode {
                id: NodeId(i),
                name: n.id.clone(),
                kind,
                inputs,
                out_meta: RelationMeta {
                    columns,
                    owner,
                    stored_at: BTreeSet::new(),
                    sorted_by: None,
                    row_count_public: false,
                },
                exec: ExecMode::Mpc,
                pinned: false,
                elide_sort: false,
            },
        );
    }

    let stp = doc.stp.as_deref().map(|s| lookup("stp", s)).transpose()?;
    let mut consent: BTreeMap<PartyId, bool> = parties.iter().map(|p| (p.id, false)).collect();
    for (name, v) in &doc.consent {
        consent.insert(lookup("consent", name)?, *v);
    }
    let mut dag = QueryDag { nodes, parties, consent, stp, authorized_reveals: Vec::new(), next_id: doc.nodes.len() };

    let order = dag.topo_order()?;
    for id in order {
        let node = dag.node(id);
        if matches!(node.kind, OpKind::Input { .. }) {
            continue;
        }
        let inputs: Vec<Vec<String>> = node.inputs.iter().map(|i| dag.node(*i).out_meta.column_names()).collect();
        let names = derive_columns(&node.name, &node.kind, &inputs)?;
        let declared = &doc.nodes[id.0].out_columns;
        if !declared.is_empty() && declared.iter().map(|c| &c.name).ne(names.iter()) {
            return Err(IrError::SchemaMismatch { node: node.name.clone() });
        }
        dag.node_mut(id).out_meta.columns = names.into_iter().map(ColumnMeta::new).collect();
    }
    if !dag.nodes.values().any(|n| matches!(&n.kind, OpKind::Output { to } if !to.is_empty())) {
        return Err(IrError::NoOutput);
    }
    Ok(dag)
}

impl QueryDag {
    /// Serializes the DAG back into a query document. Analysis results
    /// (trust of derived columns, execution modes) are not part of a document.
    pub fn to_document(&self) -> QueryDocument {
        let name = |p: PartyId| self.party_name(p).to_string();
        let order = self.topo_order().unwrap_or_else(|_| self.nodes.keys().copied().collect());
        let nodes = order
            .iter()
            .map(|id| {
                let n = self.node(*id);
                let inputs = n.inputs.iter().map(|i| self.node(*i).name.clone()).collect();
                let mut doc = NodeDoc {
                    id: n.name.clone(),
                    kind: n.kind.tag().to_string(),
                    inputs,
                    params: Value::Null,
                    out_columns: Vec::new(),
                    at: None,
                    to: Vec::new(),
                };
                match &n.kind {
                    OpKind::Input { at } => {
                        doc.at = Some(name(*at));
                        doc.out_columns = n
                            .out_meta
                            .columns
                            .iter()
                            .map(|c| ColumnDoc { name: c.name.clone(), trust: c.trust.iter().map(name).collect() })
                            .collect();
                    }
                    OpKind::Output { to } => doc.to = to.iter().map(|p| name(*p)).collect(),
                    kind => {
                        let mut v = serde_json::to_value(kind).expect("op kind serializes");
                        if let Value::Object(m) = &mut v {
                            m.remove("op");
                            if !m.is_empty() {
                                doc.params = v;
                            }
                        }
                    }
                }
                doc
            })
            .collect();
        QueryDocument {
            parties: self.parties.iter().map(|p| PartyDoc { name: p.name.clone(), endpoint: p.endpoint.clone() }).collect(),
            stp: self.stp.map(name),
            consent: self.consent.iter().filter(|(_, v)| **v).map(|(p, v)| (name(*p), *v)).collect(),
            nodes,
        }
    }
}

use std::collections::BTreeMap;

use super::{run_clear_step, ClearError, Table};
use crate::ir::{OpKind, QueryDag};

/// Input relations keyed by the name of their Input node.
pub type InputTables = BTreeMap<String, Table>;

/// Conforms a loaded input table to the column order its Input node declares.
pub(crate) fn conform_input(dag: &QueryDag, name: &str, inputs: &InputTables) -> Result<Table, ClearError> {
    let node = dag.by_name(name).ok_or_else(|| ClearError::MissingInput(name.to_string()))?;
    let table = inputs.get(name).ok_or_else(|| ClearError::MissingInput(name.to_string()))?;
    table.project(&node.out_meta.column_names())
}

/// Runs the whole DAG in the clear at one site, ignoring execution modes.
/// Returns one table per Output node, keyed by its name.
pub fn oracle_execute(dag: &QueryDag, inputs: &InputTables) -> Result<BTreeMap<String, Table>, ClearError> {
    let order = dag.topo_order().map_err(|e| ClearError::MissingInput(e.to_string()))?;
    let mut env: BTreeMap<_, Table> = BTreeMap::new();
    let mut outputs = BTreeMap::new();
    for id in order {
        let node = dag.node(id);
        let table = match &node.kind {
            OpKind::Input { .. } => conform_input(dag, &node.name, inputs)?,
            kind => {
                let args: Vec<&Table> = node.inputs.iter().map(|i| &env[i]).collect();
                run_clear_step(kind, &args)?
            }
        };
        if matches!(node.kind, OpKind::Output { .. }) {
            outputs.insert(node.name.clone(), table.clone());
        }
        env.insert(id, table);
    }
    Ok(outputs)
}

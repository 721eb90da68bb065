use std::collections::BTreeSet;

use super::{AggFunc, NodeId, OpKind, QueryDag};

/// For each output column, the input columns `(input index, column name)` its
/// values depend on.
pub type ColumnDeps = Vec<BTreeSet<(usize, String)>>;

/// Column-level dependency map of one node.
///
/// Predicate and key columns count as dependencies of every output column,
/// since they decide which rows appear.
pub fn column_deps(dag: &QueryDag, id: NodeId) -> ColumnDeps {
    let node = dag.node(id);
    let input_cols: Vec<Vec<String>> =
        node.inputs.iter().map(|i| dag.node(*i).out_meta.column_names()).collect();
    let out = node.out_meta.column_names();
    let from0 = |names: &[&String]| -> BTreeSet<(usize, String)> {
        names.iter().map(|c| (0, (*c).clone())).collect()
    };
    match &node.kind {
        OpKind::Input { .. } => out.iter().map(|_| BTreeSet::new()).collect(),
        OpKind::Concat => (0..out.len())
            .map(|k| (0..input_cols.len()).map(|i| (i, input_cols[i][k].clone())).collect())
            .collect(),
        OpKind::Project { .. } | OpKind::Output { .. } => {
            out.iter().map(|c| from0(&[c])).collect()
        }
        OpKind::Filter { column, .. } | OpKind::SortBy { column } => {
            out.iter().map(|c| from0(&[c, column])).collect()
        }
        OpKind::Join { left, right } => {
            let mut keys = BTreeSet::new();
            for k in left {
                keys.insert((0, k.clone()));
            }
            for k in right {
                keys.insert((1, k.clone()));
            }
            out.iter()
                .map(|c| {
                    let side = if input_cols[0].contains(c) { 0 } else { 1 };
                    let mut s = keys.clone();
                    s.insert((side, c.clone()));
                    s
                })
                .collect()
        }
        OpKind::Aggregate { func, out: out_col, group, over, .. } => {
            let groups: BTreeSet<(usize, String)> = group.iter().map(|g| (0, g.clone())).collect();
            out.iter()
                .map(|c| {
                    if c != out_col {
                        return groups.clone();
                    }
                    match func {
                        AggFunc::Sum => {
                            let mut s = groups.clone();
                            s.insert((0, over.clone().expect("sum has over column")));
                            s
                        }
                        AggFunc::Count if group.is_empty() => {
                            input_cols[0].iter().map(|c| (0, c.clone())).collect()
                        }
                        AggFunc::Count => groups.clone(),
                    }
                })
                .collect()
        }
        OpKind::Multiply { out: o, left: a, right: b }
        | OpKind::Divide { out: o, numerator: a, by: b, .. } => out
            .iter()
            .map(|c| if c == o { from0(&[a, b]) } else { from0(&[c]) })
            .collect(),
        OpKind::ScalarMul { out: o, column, .. } => out
            .iter()
            .map(|c| if c == o { from0(&[column]) } else { from0(&[c]) })
            .collect(),
        OpKind::Enumerate { out: o } => out
            .iter()
            .map(|c| {
                if c == o {
                    input_cols[0].iter().map(|c| (0, c.clone())).collect()
                } else {
                    from0(&[c])
                }
            })
            .collect(),
        OpKind::Distinct => {
            let all: BTreeSet<(usize, String)> = input_cols[0].iter().map(|c| (0, c.clone())).collect();
            out.iter().map(|_| all.clone()).collect()
        }
    }
}

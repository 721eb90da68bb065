//! Closed-form operation counts of every MPC and hybrid operator, matching
//! what the engine does for the same row counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ir::{AggFunc, ExecMode, NodeId, OpKind, QueryDag};
use crate::mpc::{shuffle_units, OpCounters};

/// Comparisons of the bitonic network on `n` rows padded to a power of two.
pub fn sort_compares(n: usize) -> u64 {
    if n <= 1 {
        return 0;
    }
    let size = n.next_power_of_two() as u64;
    let k = size.trailing_zeros() as u64;
    size / 2 * (k * (k + 1) / 2)
}

fn sort_cost(n: usize, width: usize) -> OpCounters {
    let c = sort_compares(n);
    OpCounters { lt: c, mul: c * width as u64, sort_compares: c, ..Default::default() }
}

fn width(dag: &QueryDag, id: NodeId) -> usize {
    dag.node(id).out_meta.columns.len()
}

/// Cost of the accumulation and cleanup shared by both grouped
/// aggregations, after the rows are in key order.
fn scan_cost(n: usize, flagged: bool, flagged_sum: bool) -> OpCounters {
    let values = if flagged_sum { 2 } else { 1 };
    let mut c = OpCounters { mul: (n as u64 - 1) * values, ..Default::default() };
    if flagged {
        c.eq += n as u64;
        c.mul += n as u64;
    }
    c.shuffle_units += shuffle_units(n);
    c
}

/// Operation counts of node `id` given the physical row count of every
/// relation (`rows`), including rows of flagged relations that are not
/// valid.
pub fn node_cost(dag: &QueryDag, id: NodeId, rows: &dyn Fn(NodeId) -> usize) -> OpCounters {
    let node = dag.node(id);
    let input = |i: usize| node.inputs[i];
    let n_in = |i: usize| rows(node.inputs[i]);
    let mut c = OpCounters::default();
    match (&node.kind, node.exec) {
        (_, ExecMode::Clear(_)) | (_, ExecMode::PublicJoin { .. }) => {}
        (OpKind::Filter { cmp, .. }, ExecMode::Mpc) => {
            let n = n_in(0) as u64;
            match cmp {
                crate::ir::Cmp::Eq => c.eq += n,
                _ => c.lt += n,
            }
            if dag.is_flagged(input(0)) {
                c.mul += n;
            }
        }
        (OpKind::Multiply { .. }, ExecMode::Mpc) => c.mul += n_in(0) as u64,
        (OpKind::Project { shuffle: true, .. }, ExecMode::Mpc) => c.shuffle_units += shuffle_units(n_in(0)),
        (OpKind::SortBy { .. }, ExecMode::Mpc) if !node.elide_sort => {
            let flag = usize::from(dag.is_flagged(input(0)));
            c = sort_cost(n_in(0), width(dag, input(0)) + flag);
        }
        (OpKind::Join { left, .. }, ExecMode::Mpc) if !left.is_empty() => {
            let total = n_in(0) * n_in(1);
            c.eq += total as u64;
            c.mul += (total * (width(dag, input(0)) + width(dag, input(1)) - 1)) as u64;
            c.shuffle_units += shuffle_units(total);
        }
        (OpKind::Join { .. }, ExecMode::HybridJoin { .. }) => {
            let (nl, nr, m) = (n_in(0), n_in(1), rows(id));
            let (wl, wr) = (width(dag, input(0)), width(dag, input(1)));
            c.shuffle_units += shuffle_units(nl) + shuffle_units(nr) + shuffle_units(m);
            c.select_units += (nl * m + nr * m) as u64;
            c.eq += (nl * m + nr * m) as u64;
            c.mul += (nl * m * wl + nr * m * (wr - 1)) as u64;
        }
        (OpKind::Aggregate { func, group, .. }, mode) => {
            let n = n_in(0);
            if n == 0 {
                return c;
            }
            let flagged = dag.is_flagged(input(0));
            let flagged_sum = flagged && *func == AggFunc::Sum;
            if flagged_sum {
                c.mul += n as u64;
            }
            match (group.is_empty(), mode) {
                (true, _) => {
                    if flagged {
                        c.eq += 1;
                    }
                }
                (false, ExecMode::HybridAgg { .. }) => {
                    c.shuffle_units += shuffle_units(n);
                    c.add(&scan_cost(n, flagged, flagged_sum));
                }
                (false, _) => {
                    if !node.elide_sort {
                        c.add(&sort_cost(n, 2 + usize::from(flagged_sum)));
                    }
                    c.eq += n as u64 - 1;
                    c.add(&scan_cost(n, flagged, flagged_sum));
                }
            }
        }
        _ => {}
    }
    // A secretly filtered relation is compacted before being revealed.
    if dag.is_flagged(id) && dag.consumers(id).iter().any(|k| dag.node(*k).exec.is_clear()) {
        c.shuffle_units += shuffle_units(rows(id));
    }
    c
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub per_node: BTreeMap<String, OpCounters>,
    pub total: OpCounters,
}

/// Cost of every node, with physical row counts given by relation name.
pub fn estimate_cost(dag: &QueryDag, rows: &BTreeMap<String, usize>) -> CostReport {
    let lookup = |id: NodeId| rows.get(&dag.node(id).name).copied().unwrap_or(0);
    let mut report = CostReport::default();
    for n in dag.nodes.values() {
        let c = node_cost(dag, n.id, &lookup);
        if !c.is_zero() {
            report.total.add(&c);
            report.per_node.insert(n.name.clone(), c);
        }
    }
    report
}

/// Worst-case physical row counts from input sizes: joins may produce
/// every pair, filters and groupings may keep every row.
pub fn upper_bound_rows(dag: &QueryDag, inputs: &BTreeMap<String, usize>) -> BTreeMap<String, usize> {
    let mut out: BTreeMap<String, usize> = BTreeMap::new();
    for id in dag.topo_order().expect("validated DAG") {
        let n = dag.node(id);
        let r = |i: usize| out[&dag.node(n.inputs[i]).name];
        let rows = match &n.kind {
            OpKind::Input { .. } => inputs.get(&n.name).copied().unwrap_or(0),
            OpKind::Concat => (0..n.inputs.len()).map(r).sum(),
            OpKind::Join { .. } => r(0).saturating_mul(r(1)),
            OpKind::Aggregate { group, .. } if group.is_empty() => r(0).min(1),
            _ => r(0),
        };
        out.insert(n.name.clone(), rows);
    }
    out
}

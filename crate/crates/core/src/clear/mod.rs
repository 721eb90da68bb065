//! Cleartext relational executor.
//!
//! Used for Clear plan segments, the STP-side steps of hybrid operators and
//! the single-site oracle every other execution path is checked against.

mod csv_io;
pub(crate) mod oracle;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{AggFunc, OpKind};

pub use csv_io::{read_table, write_table};
pub use oracle::{oracle_execute, InputTables};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClearError {
    #[error("division by zero in row {row}")]
    DivisionByZero { row: usize },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("missing input relation `{0}`")]
    MissingInput(String),
    #[error("{path}: parse error on line {line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("{path}: line {line} has {found} fields, expected {expected}")]
    ArityMismatch { path: String, line: u64, expected: usize, found: usize },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("arithmetic overflow in row {row}")]
    Overflow { row: usize },
}

/// A relation held in the clear: ordered column names and integer rows.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub schema: Vec<String>,
    pub rows: Vec<Vec<i64>>,
}

impl Table {
    pub fn new(schema: Vec<String>, rows: Vec<Vec<i64>>) -> Table {
        debug_assert!(rows.iter().all(|r| r.len() == schema.len()));
        Table { schema, rows }
    }

    pub fn empty(schema: Vec<String>) -> Table {
        Table { schema, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn col(&self, name: &str) -> Result<usize, ClearError> {
        self.schema.iter().position(|c| c == name).ok_or_else(|| ClearError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<i64>, ClearError> {
        let i = self.col(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Rows sorted lexicographically: the canonical form for multiset comparison.
    pub fn sorted_rows(&self) -> Vec<Vec<i64>> {
        let mut rows = self.rows.clone();
        rows.sort();
        rows
    }

    pub fn same_multiset(&self, other: &Table) -> bool {
        self.schema == other.schema && self.sorted_rows() == other.sorted_rows()
    }

    pub fn project(&self, columns: &[String]) -> Result<Table, ClearError> {
        let idx = columns.iter().map(|c| self.col(c)).collect::<Result<Vec<_>, _>>()?;
        Ok(Table {
            schema: columns.to_vec(),
            rows: self.rows.iter().map(|r| idx.iter().map(|i| r[*i]).collect()).collect(),
        })
    }
}

fn append_column(input: &Table, out: &str, values: Vec<i64>) -> Table {
    let mut schema = input.schema.clone();
    schema.push(out.to_string());
    let rows = input
        .rows
        .iter()
        .zip(values)
        .map(|(r, v)| {
            let mut r = r.clone();
            r.push(v);
            r
        })
        .collect();
    Table { schema, rows }
}

/// Group-by aggregation; output rows are ordered by group key.
pub fn aggregate(
    input: &Table,
    func: AggFunc,
    out: &str,
    group: &[String],
    over: Option<&str>,
) -> Result<Table, ClearError> {
    let gidx = group.iter().map(|g| input.col(g)).collect::<Result<Vec<_>, _>>()?;
    let vidx = match (func, over) {
        (AggFunc::Sum, Some(o)) => Some(input.col(o)?),
        (AggFunc::Sum, None) => return Err(ClearError::MissingColumn("<sum column>".into())),
        (AggFunc::Count, _) => None,
    };
    let mut groups: BTreeMap<Vec<i64>, i64> = BTreeMap::new();
    for r in &input.rows {
        let key: Vec<i64> = gidx.iter().map(|i| r[*i]).collect();
        let acc = groups.entry(key).or_insert(0);
        *acc = acc.wrapping_add(vidx.map_or(1, |i| r[i]));
    }
    let mut schema = group.to_vec();
    schema.push(out.to_string());
    let rows = groups
        .into_iter()
        .map(|(mut k, v)| {
            k.push(v);
            k
        })
        .collect();
    Ok(Table { schema, rows })
}

/// Inner equi-join with bag semantics; no key columns means a cross join.
/// Output columns are the left columns followed by the right columns minus
/// the right key.
pub fn join(left: &Table, right: &Table, lkeys: &[String], rkeys: &[String]) -> Result<Table, ClearError> {
    let lk = lkeys.iter().map(|c| left.col(c)).collect::<Result<Vec<_>, _>>()?;
    let rk = rkeys.iter().map(|c| right.col(c)).collect::<Result<Vec<_>, _>>()?;
    let keep: Vec<usize> = (0..right.schema.len()).filter(|i| !rk.contains(i)).collect();
    let mut schema = left.schema.clone();
    schema.extend(keep.iter().map(|i| right.schema[*i].clone()));
    let mut index: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (j, r) in right.rows.iter().enumerate() {
        index.entry(rk.iter().map(|i| r[*i]).collect()).or_default().push(j);
    }
    let mut rows = Vec::new();
    for l in &left.rows {
        let key: Vec<i64> = lk.iter().map(|i| l[*i]).collect();
        for j in index.get(&key).into_iter().flatten() {
            let mut row = l.clone();
            row.extend(keep.iter().map(|i| right.rows[*j][*i]));
            rows.push(row);
        }
    }
    Ok(Table { schema, rows })
}

/// `numerator * scale / by`, truncating toward zero.
pub fn divide(numerator: i64, by: i64, scale: i64) -> Option<i64> {
    if by == 0 {
        return None;
    }
    let q = (numerator as i128 * scale as i128) / by as i128;
    i64::try_from(q).ok()
}

/// Evaluates one operator over cleartext inputs.
pub fn run_clear_step(kind: &OpKind, inputs: &[&Table]) -> Result<Table, ClearError> {
    let input = inputs.first().copied();
    let first = || input.ok_or_else(|| ClearError::MissingInput("<input 0>".into()));
    match kind {
        OpKind::Input { .. } => Ok(first()?.clone()),
        OpKind::Concat => {
            let schema = first()?.schema.clone();
            let rows = inputs.iter().flat_map(|t| t.rows.iter().cloned()).collect();
            Ok(Table { schema, rows })
        }
        OpKind::Project { columns, .. } => first()?.project(columns),
        OpKind::Filter { column, cmp, value } => {
            let t = first()?;
            let i = t.col(column)?;
            let rows = t.rows.iter().filter(|r| cmp.holds(r[i], *value)).cloned().collect();
            Ok(Table { schema: t.schema.clone(), rows })
        }
        OpKind::Join { left, right } => {
            let r = inputs.get(1).ok_or_else(|| ClearError::MissingInput("<input 1>".into()))?;
            join(first()?, r, left, right)
        }
        OpKind::Aggregate { func, out, group, over, .. } => aggregate(first()?, *func, out, group, over.as_deref()),
        OpKind::Multiply { out, left, right } => {
            let t = first()?;
            let (a, b) = (t.col(left)?, t.col(right)?);
            let vals = t
                .rows
                .iter()
                .enumerate()
                .map(|(row, r)| r[a].checked_mul(r[b]).ok_or(ClearError::Overflow { row }))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(append_column(t, out, vals))
        }
        OpKind::Divide { out, numerator, by, scale } => {
            let t = first()?;
            let (a, b) = (t.col(numerator)?, t.col(by)?);
            let vals = t
                .rows
                .iter()
                .enumerate()
                .map(|(row, r)| {
                    if r[b] == 0 {
                        return Err(ClearError::DivisionByZero { row });
                    }
                    divide(r[a], r[b], *scale).ok_or(ClearError::Overflow { row })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(append_column(t, out, vals))
        }
        OpKind::ScalarMul { out, column, scalar } => {
            let t = first()?;
            let a = t.col(column)?;
            let vals = t
                .rows
                .iter()
                .enumerate()
                .map(|(row, r)| r[a].checked_mul(*scalar).ok_or(ClearError::Overflow { row }))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(append_column(t, out, vals))
        }
        OpKind::Enumerate { out } => {
            let t = first()?;
            Ok(append_column(t, out, (0..t.len() as i64).collect()))
        }
        OpKind::SortBy { column } => {
            let t = first()?;
            let i = t.col(column)?;
            let mut rows = t.rows.clone();
            rows.sort_by_key(|r| r[i]);
            Ok(Table { schema: t.schema.clone(), rows })
        }
        OpKind::Distinct => {
            let t = first()?;
            let mut seen = std::collections::HashSet::new();
            let rows = t.rows.iter().filter(|r| seen.insert((*r).clone())).cloned().collect();
            Ok(Table { schema: t.schema.clone(), rows })
        }
        OpKind::Output { .. } => Ok(first()?.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Cmp;

    fn t(schema: &[&str], rows: &[&[i64]]) -> Table {
        Table::new(schema.iter().map(|s| s.to_string()).collect(), rows.iter().map(|r| r.to_vec()).collect())
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn hhi_tail() {
        let shares = t(&["share"], &[&[50], &[30], &[20]]);
        let sq = run_clear_step(
            &OpKind::Multiply { out: "sq".into(), left: "share".into(), right: "share".into() },
            &[&shares],
        )
        .unwrap();
        assert_eq!(sq.column("sq").unwrap(), vec![2500, 900, 400]);
        let total = aggregate(&sq, AggFunc::Sum, "hhi", &[], Some("sq")).unwrap();
        assert_eq!(total.rows, vec![vec![3800]]);
    }

    #[test]
    fn disjoint_join_is_empty() {
        let l = t(&["k", "a"], &[&[1, 10]]);
        let r = t(&["k", "b"], &[&[2, 20]]);
        let j = join(&l, &r, &s(&["k"]), &s(&["k"])).unwrap();
        assert!(j.is_empty());
        assert_eq!(j.schema, s(&["k", "a", "b"]));
    }

    #[test]
    fn grouped_sum() {
        let x = t(&["companyID", "price"], &[&[1, 10], &[2, 5], &[1, 7]]);
        let a = aggregate(&x, AggFunc::Sum, "rev", &s(&["companyID"]), Some("price")).unwrap();
        assert_eq!(a.rows, vec![vec![1, 17], vec![2, 5]]);
    }

    #[test]
    fn aggregate_of_nothing_is_empty() {
        let x = t(&["v"], &[]);
        assert!(aggregate(&x, AggFunc::Count, "n", &[], None).unwrap().is_empty());
        assert!(aggregate(&x, AggFunc::Sum, "s", &[], Some("v")).unwrap().is_empty());
    }

    #[test]
    fn divide_truncates_toward_zero() {
        assert_eq!(divide(7, 2, 1), Some(3));
        assert_eq!(divide(-7, 2, 1), Some(-3));
        assert_eq!(divide(1, 3, 100), Some(33));
        assert_eq!(divide(1, 0, 1), None);
        let x = t(&["a", "b"], &[&[1, 1], &[1, 0]]);
        let err = run_clear_step(
            &OpKind::Divide { out: "q".into(), numerator: "a".into(), by: "b".into(), scale: 1 },
            &[&x],
        );
        assert_eq!(err, Err(ClearError::DivisionByZero { row: 1 }));
    }

    #[test]
    fn sort_is_stable() {
        let x = t(&["k", "v"], &[&[2, 0], &[1, 1], &[2, 2], &[1, 3]]);
        let out = run_clear_step(&OpKind::SortBy { column: "k".into() }, &[&x]).unwrap();
        assert_eq!(out.column("v").unwrap(), vec![1, 3, 0, 2]);
    }

    #[test]
    fn filter_enumerate_distinct() {
        let x = t(&["v"], &[&[0], &[5], &[0], &[3]]);
        let f = run_clear_step(&OpKind::Filter { column: "v".into(), cmp: Cmp::Gt, value: 0 }, &[&x]).unwrap();
        assert_eq!(f.column("v").unwrap(), vec![5, 3]);
        let e = run_clear_step(&OpKind::Enumerate { out: "i".into() }, &[&f]).unwrap();
        assert_eq!(e.column("i").unwrap(), vec![0, 1]);
        let d = run_clear_step(&OpKind::Distinct, &[&x]).unwrap();
        assert_eq!(d.column("v").unwrap(), vec![0, 5, 3]);
    }

    #[test]
    fn missing_column_is_reported() {
        let x = t(&["v"], &[&[1]]);
        let err = run_clear_step(&OpKind::Project { columns: s(&["w"]), shuffle: false }, &[&x]);
        assert_eq!(err, Err(ClearError::MissingColumn("w".into())));
    }
}

//! Baseline oblivious relational operators.

use super::engine::Engine;
use super::field::Fp;
use super::share::{SharedCol, SharedRelation};
use super::MpcError;
use crate::ir::AggFunc;

/// Parameters of a single-key aggregation.
#[derive(Clone, Copy, Debug)]
pub struct AggSpec<'a> {
    pub func: AggFunc,
    pub group: Option<&'a str>,
    pub over: Option<&'a str>,
    pub out: &'a str,
}

impl<'a> AggSpec<'a> {
    pub fn schema(&self) -> Vec<String> {
        self.group.iter().map(|g| g.to_string()).chain([self.out.to_string()]).collect()
    }
}

/// Value columns fed to the accumulation scan: the aggregated value and,
/// for flagged sums, a separate count of valid rows.
pub(crate) struct AggInputs {
    pub value: SharedCol,
    pub count: Option<SharedCol>,
}

fn require_unflagged(rel: &SharedRelation) -> Result<(), MpcError> {
    match rel.flag {
        Some(_) => Err(MpcError::FlaggedReveal(rel.name.clone())),
        None => Ok(()),
    }
}

impl Engine {
    pub(crate) fn agg_inputs(&mut self, rel: &SharedRelation, spec: &AggSpec) -> Result<AggInputs, MpcError> {
        match (spec.func, &rel.flag) {
            (AggFunc::Sum, None) => Ok(AggInputs { value: rel.col(spec.over.unwrap_or_default())?.clone(), count: None }),
            (AggFunc::Sum, Some(flag)) => {
                let v = rel.col(spec.over.unwrap_or_default())?;
                let masked = self.mul(v, flag)?;
                Ok(AggInputs { value: masked, count: Some(flag.clone()) })
            }
            (AggFunc::Count, None) => Ok(AggInputs { value: self.constant(1, rel.rows), count: None }),
            (AggFunc::Count, Some(flag)) => Ok(AggInputs { value: flag.clone(), count: None }),
        }
    }

    /// `acc_0 = v_0`, `acc_i = v_i + same_i-1 * acc_i-1`: after the scan the
    /// last row of each run of equal keys holds the run's total.
    pub(crate) fn accumulate(&mut self, same: &SharedCol, values: &[SharedCol]) -> Result<Vec<SharedCol>, MpcError> {
        let n = same.rows() + 1;
        let mut acc: Vec<SharedCol> = values.to_vec();
        for i in 1..n {
            let e = same.gather(&[i - 1]);
            let prev: Vec<SharedCol> = acc.iter().map(|a| a.gather(&[i - 1])).collect();
            let pairs: Vec<(&SharedCol, &SharedCol)> = prev.iter().map(|p| (&e, p)).collect();
            let carried = self.mul_many(&pairs)?;
            for (a, c) in acc.iter_mut().zip(carried) {
                for p in 0..a.parties() {
                    a.shares[p][i] += c.shares[p][0];
                }
            }
        }
        Ok(acc)
    }

    /// Shared rows sorted by key and equality bits of adjacent keys in hand:
    /// accumulate, drop every row that is not the last of its group (and
    /// groups with no valid row), shuffle, and open the drop bits.
    pub(crate) fn finish_aggregate(
        &mut self,
        name: &str,
        spec: &AggSpec,
        key: SharedCol,
        same: SharedCol,
        inputs: AggInputs,
        flagged: bool,
    ) -> Result<SharedRelation, MpcError> {
        let n = key.rows();
        let mut values = vec![inputs.value];
        values.extend(inputs.count);
        let acc = self.accumulate(&same, &values)?;
        let mut drop = same;
        drop.append(&self.constant(0, 1));
        if flagged {
            let valid_count = acc.last().expect("accumulated column");
            let zero = self.eq(valid_count, &self.constant(0, n))?;
            let both = self.mul(&drop, &zero)?;
            drop = drop.add(&zero)?.sub(&both)?;
        }
        let staged = SharedRelation::new(name, spec.schema(), vec![key, acc[0].clone()], n).with_column("_drop", drop);
        let shuffled = self.shuffle(&staged)?;
        let bits = self.open_all(&[&shuffled.cols[2]])?.remove(0);
        let keep: Vec<usize> = (0..n).filter(|i| bits[*i] == Fp::ZERO).collect();
        let mut out = shuffled.gather(name, &keep);
        out.schema.pop();
        out.cols.pop();
        self.record_cardinality(name);
        Ok(out)
    }

    /// Oblivious group-by: sort by key (unless the input is already sorted),
    /// flag adjacent equal keys, accumulate, then discard all but one row per
    /// group. Leaks the number of groups.
    pub fn mpc_aggregate(&mut self, rel: &SharedRelation, spec: &AggSpec, elide_sort: bool, name: &str) -> Result<SharedRelation, MpcError> {
        let Some(group) = spec.group else {
            return self.scalar_aggregate(rel, spec, name);
        };
        let n = rel.rows;
        if n == 0 {
            self.record_cardinality(name);
            return Ok(SharedRelation::empty(name, spec.schema(), self.parties()));
        }
        let flagged = rel.flag.is_some();
        let inputs = self.agg_inputs(rel, spec)?;
        let mut staged = SharedRelation::new(name, vec![group.to_string(), "_value".into()], vec![rel.col(group)?.clone(), inputs.value], n);
        if let Some(c) = inputs.count {
            staged = staged.with_column("_count", c);
        }
        if !elide_sort {
            staged = self.oblivious_sort(&staged, group)?;
        }
        let key = staged.cols[0].clone();
        let head: Vec<usize> = (0..n - 1).collect();
        let tail: Vec<usize> = (1..n).collect();
        let same = self.eq(&key.gather(&head), &key.gather(&tail))?;
        let inputs = AggInputs { value: staged.cols[1].clone(), count: staged.cols.get(2).cloned() };
        self.finish_aggregate(name, spec, key, same, inputs, flagged)
    }

    /// Aggregation without grouping: one output row, or none when no valid
    /// input row exists.
    fn scalar_aggregate(&mut self, rel: &SharedRelation, spec: &AggSpec, name: &str) -> Result<SharedRelation, MpcError> {
        let n = rel.rows;
        self.record_cardinality(name);
        if n == 0 {
            return Ok(SharedRelation::empty(name, spec.schema(), self.parties()));
        }
        let inputs = self.agg_inputs(rel, spec)?;
        let total = inputs.value.sum();
        if let Some(flag) = &rel.flag {
            let valid = flag.sum();
            let none = self.eq(&valid, &self.constant(0, 1))?;
            let opened = self.open_all(&[&none])?.remove(0);
            if opened[0] == Fp::ONE {
                return Ok(SharedRelation::empty(name, spec.schema(), self.parties()));
            }
        }
        Ok(SharedRelation::new(name, spec.schema(), vec![total], 1))
    }

    /// Baseline equi-join: compares every pair of keys, masks the candidate
    /// rows, shuffles them and opens the match bits. Leaks the result size.
    pub fn mpc_join(&mut self, left: &SharedRelation, right: &SharedRelation, lkey: &str, rkey: &str, name: &str) -> Result<SharedRelation, MpcError> {
        require_unflagged(left)?;
        require_unflagged(right)?;
        let (nl, nr) = (left.rows, right.rows);
        let total = nl * nr;
        let li: Vec<usize> = (0..nl).flat_map(|i| std::iter::repeat(i).take(nr)).collect();
        let ri: Vec<usize> = (0..nl).flat_map(|_| 0..nr).collect();
        let rk = right.position(rkey)?;
        let hits = self.eq(&left.col(lkey)?.gather(&li), &right.cols[rk].gather(&ri))?;
        let mut schema = left.schema.clone();
        let mut payload: Vec<SharedCol> = left.cols.iter().map(|c| c.gather(&li)).collect();
        for (c, col) in right.cols.iter().enumerate() {
            if c != rk {
                schema.push(right.schema[c].clone());
                payload.push(col.gather(&ri));
            }
        }
        let pairs: Vec<(&SharedCol, &SharedCol)> = payload.iter().map(|p| (&hits, p)).collect();
        let masked = self.mul_many(&pairs)?;
        let mut candidates = SharedRelation::new(name, schema, masked, total);
        candidates.flag = Some(hits);
        let shuffled = self.shuffle(&candidates)?;
        let bits = self.open_all(&[shuffled.flag.as_ref().expect("candidate flags")])?.remove(0);
        let keep: Vec<usize> = (0..total).filter(|i| bits[*i] == Fp::ONE).collect();
        let mut out = shuffled.gather(name, &keep);
        out.flag = None;
        self.record_cardinality(name);
        Ok(out)
    }

    /// Cartesian product; purely local since both sizes are public.
    pub fn cross_join(&mut self, left: &SharedRelation, right: &SharedRelation, name: &str) -> Result<SharedRelation, MpcError> {
        require_unflagged(left)?;
        require_unflagged(right)?;
        let (nl, nr) = (left.rows, right.rows);
        let li: Vec<usize> = (0..nl).flat_map(|i| std::iter::repeat(i).take(nr)).collect();
        let ri: Vec<usize> = (0..nl).flat_map(|_| 0..nr).collect();
        let mut schema = left.schema.clone();
        schema.extend(right.schema.iter().cloned());
        let cols = left.cols.iter().map(|c| c.gather(&li)).chain(right.cols.iter().map(|c| c.gather(&ri))).collect();
        self.record_cardinality(name);
        Ok(SharedRelation::new(name, schema, cols, nl * nr))
    }

    /// Stacks the rows of relations with identical schemas.
    pub fn concat(&mut self, rels: &[&SharedRelation], name: &str) -> Result<SharedRelation, MpcError> {
        let first = rels.first().ok_or_else(|| MpcError::Protocol("concat of nothing".into()))?;
        let mut cols: Vec<SharedCol> = first.cols.clone();
        for r in rels {
            require_unflagged(r)?;
        }
        for r in &rels[1..] {
            for (a, b) in cols.iter_mut().zip(&r.cols) {
                a.append(b);
            }
        }
        let rows = rels.iter().map(|r| r.rows).sum();
        Ok(SharedRelation::new(name, first.schema.clone(), cols, rows))
    }

    pub fn multiply_columns(&mut self, rel: &SharedRelation, left: &str, right: &str, out: &str) -> Result<SharedRelation, MpcError> {
        let product = self.mul(rel.col(left)?, rel.col(right)?)?;
        Ok(rel.clone().with_column(out, product))
    }

    pub fn scalar_multiply(&mut self, rel: &SharedRelation, column: &str, scalar: i64, out: &str) -> Result<SharedRelation, MpcError> {
        let scaled = rel.col(column)?.scale(Fp::encode(scalar));
        Ok(rel.clone().with_column(out, scaled))
    }

    /// Appends the public row index.
    pub fn enumerate(&mut self, rel: &SharedRelation, out: &str) -> Result<SharedRelation, MpcError> {
        let idx: Vec<i64> = (0..rel.rows as i64).collect();
        let col = self.public_col(&idx);
        Ok(rel.clone().with_column(out, col))
    }
}

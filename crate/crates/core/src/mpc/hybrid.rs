//! Operators that let one party see key columns in the clear in exchange
//! for cheaper protocols.

use std::collections::BTreeMap;

use super::engine::Engine;
use super::field::Fp;
use super::relational::{AggInputs, AggSpec};
use super::share::{SharedCol, SharedRelation};
use super::MpcError;
use crate::ir::PartyId;
use crate::orchestrator::ledger::LeakItem;

fn key_values(opened: Vec<Vec<Fp>>) -> Vec<i64> {
    opened.into_iter().next().unwrap_or_default().into_iter().map(Fp::decode).collect()
}

/// Index pairs `(left, right)` of matching keys, ordered by key, then by
/// left position, then by right position.
fn match_pairs(lkeys: &[i64], rkeys: &[i64]) -> (Vec<usize>, Vec<usize>) {
    let mut by_key: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (j, k) in rkeys.iter().enumerate() {
        by_key.entry(*k).or_default().push(j);
    }
    let mut order: Vec<usize> = (0..lkeys.len()).collect();
    order.sort_by_key(|i| (lkeys[*i], *i));
    let (mut li, mut ri) = (Vec::new(), Vec::new());
    for i in order {
        for j in by_key.get(&lkeys[i]).into_iter().flatten() {
            li.push(i);
            ri.push(*j);
        }
    }
    (li, ri)
}

fn to_field(v: &[usize]) -> Vec<Fp> {
    v.iter().map(|i| Fp::encode(*i as i64)).collect()
}

impl Engine {
    /// Join assisted by a selectively-trusted party: both inputs are
    /// shuffled, the STP sees the shuffled key columns, computes matching
    /// index pairs in the clear and shares them back; the parties then fetch
    /// the matching rows with oblivious selection and shuffle the result.
    pub fn hybrid_join(
        &mut self,
        left: &SharedRelation,
        right: &SharedRelation,
        lkey: &str,
        rkey: &str,
        stp: PartyId,
        name: &str,
    ) -> Result<SharedRelation, MpcError> {
        if left.flag.is_some() || right.flag.is_some() {
            return Err(MpcError::FlaggedReveal(name.to_string()));
        }
        let ls = self.shuffle(left)?;
        let rs = self.shuffle(right)?;
        let lk = key_values(self.open_to(&[ls.col(lkey)?], stp)?);
        self.record(stp, LeakItem::ColumnValues { relation: left.name.clone(), column: lkey.into() });
        let rk = key_values(self.open_to(&[rs.col(rkey)?], stp)?);
        self.record(stp, LeakItem::ColumnValues { relation: right.name.clone(), column: rkey.into() });

        let (li, ri) = match_pairs(&lk, &rk);
        let idx = self.share_cols(stp, &[to_field(&li), to_field(&ri)])?;
        self.record_cardinality(name);

        let lcols: Vec<&SharedCol> = ls.cols.iter().collect();
        let mut cols = self.oblivious_select(&lcols, ls.rows, &idx[0])?;
        let rpos = rs.position(rkey)?;
        let rcols: Vec<&SharedCol> = rs.cols.iter().enumerate().filter(|(c, _)| *c != rpos).map(|(_, c)| c).collect();
        cols.extend(self.oblivious_select(&rcols, rs.rows, &idx[1])?);
        let mut schema = left.schema.clone();
        schema.extend(right.schema.iter().enumerate().filter(|(c, _)| *c != rpos).map(|(_, s)| s.clone()));
        let joined = SharedRelation::new(name, schema, cols, li.len());
        self.shuffle(&joined)
    }

    /// Join on public key columns: the chosen party sees both key columns,
    /// computes the matching index pairs sorted by key and broadcasts them;
    /// every party then gathers its shares locally.
    pub fn public_join(
        &mut self,
        left: &SharedRelation,
        right: &SharedRelation,
        lkey: &str,
        rkey: &str,
        party: PartyId,
        name: &str,
    ) -> Result<SharedRelation, MpcError> {
        if left.flag.is_some() || right.flag.is_some() {
            return Err(MpcError::FlaggedReveal(name.to_string()));
        }
        let lk = key_values(self.open_to(&[left.col(lkey)?], party)?);
        let rk = key_values(self.open_to(&[right.col(rkey)?], party)?);
        let (li, ri) = match_pairs(&lk, &rk);
        let mut msg: Vec<i64> = li.iter().map(|i| *i as i64).collect();
        msg.extend(ri.iter().map(|j| *j as i64));
        self.broadcast(party, &msg)?;
        for p in self.party_ids() {
            self.record(p, LeakItem::ColumnValues { relation: left.name.clone(), column: lkey.into() });
            self.record(p, LeakItem::ColumnValues { relation: right.name.clone(), column: rkey.into() });
            self.record(p, LeakItem::Permutation { relation: name.into() });
        }
        self.record_cardinality(name);

        let rpos = right.position(rkey)?;
        let mut schema = left.schema.clone();
        let mut cols: Vec<SharedCol> = left.cols.iter().map(|c| c.gather(&li)).collect();
        for (c, col) in right.cols.iter().enumerate() {
            if c != rpos {
                schema.push(right.schema[c].clone());
                cols.push(col.gather(&ri));
            }
        }
        Ok(SharedRelation::new(name, schema, cols, li.len()))
    }

    /// Group-by assisted by a selectively-trusted party: after a shuffle the
    /// STP sees the key column, sorts it in the clear, publishes the sorting
    /// permutation and shares adjacent-equality bits; the parties then run
    /// the accumulation scan without any oblivious sort.
    pub fn hybrid_aggregate(&mut self, rel: &SharedRelation, spec: &AggSpec, stp: PartyId, name: &str) -> Result<SharedRelation, MpcError> {
        let group = spec.group.ok_or_else(|| MpcError::Protocol("hybrid aggregation needs a group column".into()))?;
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
        let shuffled = self.shuffle(&staged)?;
        let keys = key_values(self.open_to(&[&shuffled.cols[0]], stp)?);
        self.record(stp, LeakItem::ColumnValues { relation: rel.name.clone(), column: group.into() });

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|i| (keys[*i], *i));
        let same: Vec<Fp> = (0..n - 1).map(|i| Fp::bit(keys[order[i]] == keys[order[i + 1]])).collect();
        self.broadcast(stp, &order.iter().map(|i| *i as i64).collect::<Vec<_>>())?;
        for p in self.party_ids() {
            self.record(p, LeakItem::Permutation { relation: name.into() });
        }
        let same = self.share_cols(stp, &[same])?.remove(0);

        let sorted = shuffled.gather(name, &order);
        let inputs = AggInputs { value: sorted.cols[1].clone(), count: sorted.cols.get(2).cloned() };
        self.finish_aggregate(name, spec, sorted.cols[0].clone(), same, inputs, flagged)
    }
}

//! Data-independent building blocks: sorting network, oblivious selection
//! and filter flags.

use super::engine::Engine;
use super::field::Fp;
use super::share::{SharedCol, SharedRelation};
use super::MpcError;
use crate::ir::Cmp;

/// Key used for padding rows in the sorting network. Every shared input value
/// must be strictly smaller in magnitude.
pub const SORT_SENTINEL: i64 = super::field::MAX_SIGNED;

/// Compare-exchange pairs `(lo, hi)` of a bitonic network on `size` (a power
/// of two) elements, grouped into stages. After each pair the smaller key
/// sits at `lo`.
fn bitonic_stages(size: usize) -> Vec<Vec<(usize, usize)>> {
    let mut stages = Vec::new();
    let mut block = 2;
    while block <= size {
        let mut stride = block / 2;
        while stride > 0 {
            let mut pairs = Vec::with_capacity(size / 2);
            for i in 0..size {
                let j = i ^ stride;
                if j > i {
                    if i & block == 0 {
                        pairs.push((i, j));
                    } else {
                        pairs.push((j, i));
                    }
                }
            }
            stages.push(pairs);
            stride /= 2;
        }
        block *= 2;
    }
    stages
}

impl Engine {
    /// Sorts rows ascending by `key` with a bitonic network. Each
    /// compare-exchange costs one comparison and one multiplication per
    /// moved column (flag included).
    pub fn oblivious_sort(&mut self, rel: &SharedRelation, key: &str) -> Result<SharedRelation, MpcError> {
        let n = rel.rows;
        let k = rel.position(key)?;
        if n <= 1 {
            return Ok(rel.clone());
        }
        let size = n.next_power_of_two();
        let parties = self.parties();
        let mut cols: Vec<SharedCol> = rel.all_cols().into_iter().cloned().collect();
        for (c, col) in cols.iter_mut().enumerate() {
            let pad = if c == k { SORT_SENTINEL } else { 0 };
            col.append(&SharedCol::public(parties, &vec![Fp::encode(pad); size - n]));
        }
        for pairs in bitonic_stages(size) {
            let lo: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let hi: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let swap = self.lt(&cols[k].gather(&hi), &cols[k].gather(&lo))?;
            self.counters.sort_compares += pairs.len() as u64;
            let x: Vec<SharedCol> = cols.iter().map(|c| c.gather(&lo)).collect();
            let y: Vec<SharedCol> = cols.iter().map(|c| c.gather(&hi)).collect();
            let diffs: Vec<SharedCol> = x.iter().zip(&y).map(|(a, b)| b.sub(a)).collect::<Result<_, _>>()?;
            let prod_pairs: Vec<(&SharedCol, &SharedCol)> = diffs.iter().map(|d| (&swap, d)).collect();
            let deltas = self.mul_many(&prod_pairs)?;
            for (c, delta) in deltas.iter().enumerate() {
                let new_lo = x[c].add(delta)?;
                let new_hi = y[c].sub(delta)?;
                for p in 0..parties {
                    for (i, (l, h)) in pairs.iter().enumerate() {
                        cols[c].shares[p][*l] = new_lo.shares[p][i];
                        cols[c].shares[p][*h] = new_hi.shares[p][i];
                    }
                }
            }
        }
        let keep: Vec<usize> = (0..n).collect();
        let cols = cols.iter().map(|c| c.gather(&keep)).collect();
        Ok(rel.from_all_cols(cols, n))
    }

    /// For each secret index, the row of `cols` at that position:
    /// `out_i = sum_j cols[j] * [index_i == j]`.
    pub fn oblivious_select(&mut self, cols: &[&SharedCol], rows: usize, index: &SharedCol) -> Result<Vec<SharedCol>, MpcError> {
        let m = index.rows();
        let parties = self.parties();
        self.counters.select_units += (rows * m) as u64;
        if rows == 0 || m == 0 {
            return Ok(cols.iter().map(|_| SharedCol::zeros(parties, m)).collect());
        }
        let idx_rep: Vec<usize> = (0..m).flat_map(|i| std::iter::repeat(i).take(rows)).collect();
        let pos_tile: Vec<i64> = (0..m).flat_map(|_| 0..rows as i64).collect();
        let row_tile: Vec<usize> = (0..m).flat_map(|_| 0..rows).collect();
        let hit = self.eq(&index.gather(&idx_rep), &self.public_col(&pos_tile))?;
        let tiled: Vec<SharedCol> = cols.iter().map(|c| c.gather(&row_tile)).collect();
        let pairs: Vec<(&SharedCol, &SharedCol)> = tiled.iter().map(|t| (&hit, t)).collect();
        let products = self.mul_many(&pairs)?;
        Ok(products
            .iter()
            .map(|prod| SharedCol {
                shares: prod.shares.iter().map(|s| s.chunks(rows).map(|ch| ch.iter().fold(Fp::ZERO, |a, b| a + *b)).collect()).collect(),
            })
            .collect())
    }

    /// Attaches (or narrows) secret row flags for `column cmp value`; the row
    /// count stays public and unchanged.
    pub fn filter_flags(&mut self, rel: &SharedRelation, column: &str, cmp: Cmp, value: i64) -> Result<SharedRelation, MpcError> {
        let col = rel.col(column)?.clone();
        let constant = self.constant(value, rel.rows);
        let bits = match cmp {
            Cmp::Eq => self.eq(&col, &constant)?,
            Cmp::Lt => self.lt(&col, &constant)?,
            Cmp::Gt => self.lt(&constant, &col)?,
        };
        let flag = match &rel.flag {
            Some(old) => self.mul(old, &bits)?,
            None => bits,
        };
        let mut out = rel.clone();
        out.flag = Some(flag);
        Ok(out)
    }
}

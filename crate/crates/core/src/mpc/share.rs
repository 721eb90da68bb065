//! Additively secret-shared columns and relations, and the local (linear)
//! operations parties perform on their shares without communicating.

use super::field::Fp;
use super::MpcError;
use crate::clear::Table;

/// One column held as additive shares: `shares[party][row]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedCol {
    pub shares: Vec<Vec<Fp>>,
}

impl SharedCol {
    pub fn zeros(parties: usize, rows: usize) -> SharedCol {
        SharedCol { shares: vec![vec![Fp::ZERO; rows]; parties] }
    }

    /// Trivial sharing of public values: the first party holds them.
    pub fn public(parties: usize, values: &[Fp]) -> SharedCol {
        let mut col = SharedCol::zeros(parties, values.len());
        col.shares[0] = values.to_vec();
        col
    }

    pub fn parties(&self) -> usize {
        self.shares.len()
    }

    pub fn rows(&self) -> usize {
        self.shares.first().map_or(0, |s| s.len())
    }

    fn zip_with(&self, other: &SharedCol, f: impl Fn(Fp, Fp) -> Fp) -> Result<SharedCol, MpcError> {
        if self.rows() != other.rows() || self.parties() != other.parties() {
            return Err(MpcError::ShapeMismatch { left: self.rows(), right: other.rows() });
        }
        Ok(SharedCol {
            shares: self
                .shares
                .iter()
                .zip(&other.shares)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
                .collect(),
        })
    }

    pub fn add(&self, other: &SharedCol) -> Result<SharedCol, MpcError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SharedCol) -> Result<SharedCol, MpcError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, k: Fp) -> SharedCol {
        SharedCol { shares: self.shares.iter().map(|s| s.iter().map(|x| *x * k).collect()).collect() }
    }

    /// `1 - x` for a shared bit.
    pub fn not(&self) -> SharedCol {
        let mut out = self.scale(-Fp::ONE);
        for v in &mut out.shares[0] {
            *v += Fp::ONE;
        }
        out
    }

    /// Rows at the given positions, in order. Purely local.
    pub fn gather(&self, idx: &[usize]) -> SharedCol {
        SharedCol { shares: self.shares.iter().map(|s| idx.iter().map(|i| s[*i]).collect()).collect() }
    }

    pub fn append(&mut self, other: &SharedCol) {
        for (a, b) in self.shares.iter_mut().zip(&other.shares) {
            a.extend_from_slice(b);
        }
    }

    /// Sum of all rows, as a one-row column.
    pub fn sum(&self) -> SharedCol {
        SharedCol {
            shares: self.shares.iter().map(|s| vec![s.iter().fold(Fp::ZERO, |a, b| a + *b)]).collect(),
        }
    }

    /// Test-harness reconstruction; never available to a party.
    pub fn reconstruct(&self) -> Vec<Fp> {
        (0..self.rows()).map(|r| self.shares.iter().fold(Fp::ZERO, |a, s| a + s[r])).collect()
    }

    pub fn reconstruct_signed(&self) -> Vec<i64> {
        self.reconstruct().into_iter().map(Fp::decode).collect()
    }
}

/// A relation under MPC. Row count and schema are public.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedRelation {
    pub name: String,
    pub schema: Vec<String>,
    pub cols: Vec<SharedCol>,
    pub rows: usize,
    /// Secret 0/1 row-validity flags left by an MPC filter.
    pub flag: Option<SharedCol>,
}

impl SharedRelation {
    pub fn new(name: impl Into<String>, schema: Vec<String>, cols: Vec<SharedCol>, rows: usize) -> SharedRelation {
        debug_assert!(cols.iter().all(|c| c.rows() == rows));
        SharedRelation { name: name.into(), schema, cols, rows, flag: None }
    }

    pub fn empty(name: impl Into<String>, schema: Vec<String>, parties: usize) -> SharedRelation {
        let cols = schema.iter().map(|_| SharedCol::zeros(parties, 0)).collect();
        SharedRelation::new(name, schema, cols, 0)
    }

    pub fn parties(&self) -> usize {
        self.cols.first().or(self.flag.as_ref()).map_or(0, |c| c.parties())
    }

    pub fn position(&self, name: &str) -> Result<usize, MpcError> {
        self.schema
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| MpcError::MissingColumn { relation: self.name.clone(), column: name.to_string() })
    }

    pub fn col(&self, name: &str) -> Result<&SharedCol, MpcError> {
        Ok(&self.cols[self.position(name)?])
    }

    pub fn renamed(mut self, name: &str) -> SharedRelation {
        self.name = name.to_string();
        self
    }

    pub fn project(&self, name: &str, columns: &[String]) -> Result<SharedRelation, MpcError> {
        let cols = columns.iter().map(|c| self.col(c).cloned()).collect::<Result<Vec<_>, _>>()?;
        Ok(SharedRelation { name: name.into(), schema: columns.to_vec(), cols, rows: self.rows, flag: self.flag.clone() })
    }

    pub fn gather(&self, name: &str, idx: &[usize]) -> SharedRelation {
        SharedRelation {
            name: name.into(),
            schema: self.schema.clone(),
            cols: self.cols.iter().map(|c| c.gather(idx)).collect(),
            rows: idx.len(),
            flag: self.flag.as_ref().map(|f| f.gather(idx)),
        }
    }

    pub fn with_column(mut self, name: &str, col: SharedCol) -> SharedRelation {
        self.schema.push(name.to_string());
        self.cols.push(col);
        self
    }

    /// All columns followed by the flag column, if any.
    pub fn all_cols(&self) -> Vec<&SharedCol> {
        self.cols.iter().chain(self.flag.as_ref()).collect()
    }

    /// Inverse of [`all_cols`](Self::all_cols).
    pub fn from_all_cols(&self, mut cols: Vec<SharedCol>, rows: usize) -> SharedRelation {
        let flag = if self.flag.is_some() { cols.pop() } else { None };
        SharedRelation { name: self.name.clone(), schema: self.schema.clone(), cols, rows, flag }
    }

    /// Test-harness reconstruction of every physical row (flagged-out rows included).
    pub fn reconstruct_all(&self) -> Table {
        let cols: Vec<Vec<i64>> = self.cols.iter().map(|c| c.reconstruct_signed()).collect();
        Table::new(self.schema.clone(), (0..self.rows).map(|r| cols.iter().map(|c| c[r]).collect()).collect())
    }

    /// Test-harness reconstruction of the logical relation (valid rows only).
    pub fn reconstruct(&self) -> Table {
        let mut t = self.reconstruct_all();
        if let Some(flag) = &self.flag {
            let f = flag.reconstruct_signed();
            t.rows = t.rows.into_iter().zip(f).filter(|(_, b)| *b == 1).map(|(r, _)| r).collect();
        }
        t
    }
}

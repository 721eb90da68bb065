use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::field::Fp;
use super::net::{Endpoint, MsgClass, Network, Payload};
use super::share::{SharedCol, SharedRelation};
use super::{shuffle_units, MpcError, OpCounters};
use crate::clear::Table;
use crate::ir::PartyId;
use crate::orchestrator::ledger::{LeakItem, Ledger};

/// All parties of one run plus the arithmetic black box.
///
/// Parties are simulated in-process: every value a party learns arrives as a
/// message on [`Network`], tagged with its class, and every observation that
/// is more than a fresh share is written to the [`Ledger`].
pub struct Engine {
    parties: usize,
    pub net: Network,
    rngs: Vec<ChaCha20Rng>,
    abb_rng: ChaCha20Rng,
    pub counters: OpCounters,
    pub ledger: Ledger,
    step: String,
}

fn party(p: usize) -> Endpoint {
    Endpoint::Party(PartyId(p as u16))
}

impl Engine {
    pub fn new(parties: usize, seed: u64) -> Engine {
        let mut master = ChaCha20Rng::seed_from_u64(seed);
        let rngs = (0..parties).map(|_| ChaCha20Rng::from_rng(&mut master).expect("seeded rng")).collect();
        let abb_rng = ChaCha20Rng::from_rng(&mut master).expect("seeded rng");
        Engine {
            parties,
            net: Network::default(),
            rngs,
            abb_rng,
            counters: OpCounters::default(),
            ledger: Ledger::default(),
            step: String::new(),
        }
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn party_ids(&self) -> Vec<PartyId> {
        (0..self.parties).map(|p| PartyId(p as u16)).collect()
    }

    pub fn step(&self) -> &str {
        &self.step
    }

    pub fn set_step(&mut self, step: impl Into<String>) {
        self.step = step.into();
    }

    pub fn record(&mut self, observer: PartyId, item: LeakItem) {
        let step = self.step.clone();
        self.ledger.record(observer, item, &step);
    }

    pub fn record_cardinality(&mut self, relation: &str) {
        let step = self.step.clone();
        self.ledger.cardinality(self.party_ids(), relation, &step);
    }

    pub fn record_columns(&mut self, observer: PartyId, relation: &str, columns: &[String]) {
        let step = self.step.clone();
        self.ledger.columns(observer, relation, columns, &step);
    }

    fn split(&mut self, values: &[Fp], rng_of: Option<usize>) -> Vec<Vec<Fp>> {
        let mut shares = vec![Vec::with_capacity(values.len()); self.parties];
        for v in values {
            let mut rest = *v;
            for share in shares.iter_mut().take(self.parties - 1) {
                let r = match rng_of {
                    Some(p) => Fp::random(&mut self.rngs[p]),
                    None => Fp::random(&mut self.abb_rng),
                };
                share.push(r);
                rest -= r;
            }
            shares[self.parties - 1].push(rest);
        }
        shares
    }

    /// Dealer splits each column into fresh random shares and sends one
    /// share vector to every other party.
    pub fn share_cols(&mut self, dealer: PartyId, cols: &[Vec<Fp>]) -> Result<Vec<SharedCol>, MpcError> {
        let d = dealer.index();
        let mut per_party: Vec<Vec<Vec<Fp>>> = vec![Vec::new(); self.parties];
        for col in cols {
            for (p, s) in self.split(col, Some(d)).into_iter().enumerate() {
                per_party[p].push(s);
            }
        }
        let lens: Vec<usize> = cols.iter().map(|c| c.len()).collect();
        let step = self.step.clone();
        for (p, shares) in per_party.iter().enumerate() {
            if p != d {
                let flat: Vec<Fp> = shares.concat();
                self.net.send(&step, party(d), party(p), MsgClass::FreshShare, Payload::Field(flat));
            }
        }
        let mut out: Vec<SharedCol> = lens.iter().map(|n| SharedCol::zeros(self.parties, *n)).collect();
        for p in 0..self.parties {
            let mine = if p == d {
                per_party[p].clone()
            } else {
                unflatten(self.net.recv(&step, party(p), party(d), MsgClass::FreshShare)?.into_field(), &lens)
            };
            for (c, s) in mine.into_iter().enumerate() {
                out[c].shares[p] = s;
            }
        }
        Ok(out)
    }

    /// Secret-shares a cleartext table held by `dealer`. Every party learns
    /// the row count.
    pub fn share_in(&mut self, table: &Table, dealer: PartyId, name: &str) -> Result<SharedRelation, MpcError> {
        let limit = super::SORT_SENTINEL;
        for row in &table.rows {
            for v in row {
                if v.unsigned_abs() >= limit as u64 {
                    return Err(MpcError::ValueOutOfRange { relation: name.to_string(), value: *v });
                }
            }
        }
        let cols: Vec<Vec<Fp>> = (0..table.schema.len())
            .map(|c| table.rows.iter().map(|r| Fp::encode(r[c])).collect())
            .collect();
        let shared = self.share_cols(dealer, &cols)?;
        self.record_cardinality(name);
        Ok(SharedRelation::new(name, table.schema.clone(), shared, table.len()))
    }

    /// Sends every party's shares of `cols` to `target`, which reconstructs.
    /// Not ledgered: callers record what the target learns.
    pub fn open_to(&mut self, cols: &[&SharedCol], target: PartyId) -> Result<Vec<Vec<Fp>>, MpcError> {
        let t = target.index();
        let lens: Vec<usize> = cols.iter().map(|c| c.rows()).collect();
        let step = self.step.clone();
        for p in 0..self.parties {
            if p != t {
                let flat: Vec<Fp> = cols.iter().flat_map(|c| c.shares[p].iter().copied()).collect();
                self.net.send(&step, party(p), party(t), MsgClass::Reveal, Payload::Field(flat));
            }
        }
        let mut acc: Vec<Vec<Fp>> = cols.iter().map(|c| c.shares[t].clone()).collect();
        for p in 0..self.parties {
            if p != t {
                let got = unflatten(self.net.recv(&step, party(t), party(p), MsgClass::Reveal)?.into_field(), &lens);
                for (a, g) in acc.iter_mut().zip(got) {
                    for (x, y) in a.iter_mut().zip(g) {
                        *x += y;
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Opens `cols` to every party.
    pub fn open_all(&mut self, cols: &[&SharedCol]) -> Result<Vec<Vec<Fp>>, MpcError> {
        let mut result = Vec::new();
        for p in self.party_ids() {
            result = self.open_to(cols, p)?;
        }
        Ok(result)
    }

    /// Reveals named columns of a relation to `targets`. Targets learn the
    /// values; every party learns the row count.
    pub fn reveal_to(&mut self, rel: &SharedRelation, cols: &[String], targets: &[PartyId]) -> Result<Table, MpcError> {
        if rel.flag.is_some() {
            return Err(MpcError::FlaggedReveal(rel.name.clone()));
        }
        let picked = cols.iter().map(|c| rel.col(c)).collect::<Result<Vec<_>, _>>()?;
        let mut table = Table::empty(cols.to_vec());
        for t in targets {
            let opened = self.open_to(&picked, *t)?;
            table.rows = (0..rel.rows).map(|r| opened.iter().map(|c| c[r].decode()).collect()).collect();
            self.record_columns(*t, &rel.name, cols);
        }
        self.record_cardinality(&rel.name);
        Ok(table)
    }

    /// Runs `f` inside the black box: parties send their shares, the box
    /// reconstructs, evaluates, and returns fresh shares of every output.
    pub fn abb<F>(&mut self, inputs: &[&SharedCol], f: F) -> Result<Vec<SharedCol>, MpcError>
    where
        F: FnOnce(Vec<Vec<Fp>>, &mut ChaCha20Rng) -> Vec<Vec<Fp>>,
    {
        let lens: Vec<usize> = inputs.iter().map(|c| c.rows()).collect();
        let step = self.step.clone();
        for p in 0..self.parties {
            let flat: Vec<Fp> = inputs.iter().flat_map(|c| c.shares[p].iter().copied()).collect();
            self.net.send(&step, party(p), Endpoint::Abb, MsgClass::AbbInput, Payload::Field(flat));
        }
        let mut plain: Vec<Vec<Fp>> = lens.iter().map(|n| vec![Fp::ZERO; *n]).collect();
        for p in 0..self.parties {
            let got = unflatten(self.net.recv(&step, Endpoint::Abb, party(p), MsgClass::AbbInput)?.into_field(), &lens);
            for (a, g) in plain.iter_mut().zip(got) {
                for (x, y) in a.iter_mut().zip(g) {
                    *x += y;
                }
            }
        }
        let outputs = f(plain, &mut self.abb_rng);
        let out_lens: Vec<usize> = outputs.iter().map(|c| c.len()).collect();
        let mut per_party: Vec<Vec<Fp>> = vec![Vec::new(); self.parties];
        for col in &outputs {
            for (p, s) in self.split(col, None).into_iter().enumerate() {
                per_party[p].extend(s);
            }
        }
        for (p, flat) in per_party.into_iter().enumerate() {
            self.net.send(&step, Endpoint::Abb, party(p), MsgClass::FreshShare, Payload::Field(flat));
        }
        let mut out: Vec<SharedCol> = out_lens.iter().map(|n| SharedCol::zeros(self.parties, *n)).collect();
        for p in 0..self.parties {
            let got = unflatten(self.net.recv(&step, party(p), Endpoint::Abb, MsgClass::FreshShare)?.into_field(), &out_lens);
            for (c, s) in got.into_iter().enumerate() {
                out[c].shares[p] = s;
            }
        }
        Ok(out)
    }

    /// Elementwise products of each pair, in one black-box call.
    pub fn mul_many(&mut self, pairs: &[(&SharedCol, &SharedCol)]) -> Result<Vec<SharedCol>, MpcError> {
        let mut inputs = Vec::with_capacity(pairs.len() * 2);
        for (a, b) in pairs {
            if a.rows() != b.rows() {
                return Err(MpcError::ShapeMismatch { left: a.rows(), right: b.rows() });
            }
            inputs.push(*a);
            inputs.push(*b);
        }
        self.counters.mul += pairs.iter().map(|(a, _)| a.rows() as u64).sum::<u64>();
        self.abb(&inputs, |plain, _| {
            plain.chunks(2).map(|ab| ab[0].iter().zip(&ab[1]).map(|(x, y)| *x * *y).collect()).collect()
        })
    }

    pub fn mul(&mut self, a: &SharedCol, b: &SharedCol) -> Result<SharedCol, MpcError> {
        Ok(self.mul_many(&[(a, b)])?.remove(0))
    }

    /// Shared `[a == b]` bits.
    pub fn eq(&mut self, a: &SharedCol, b: &SharedCol) -> Result<SharedCol, MpcError> {
        self.compare(a, b, |x, y| x == y, true)
    }

    /// Shared `[a < b]` bits under signed decoding.
    pub fn lt(&mut self, a: &SharedCol, b: &SharedCol) -> Result<SharedCol, MpcError> {
        self.compare(a, b, |x, y| x < y, false)
    }

    fn compare(&mut self, a: &SharedCol, b: &SharedCol, f: fn(i64, i64) -> bool, is_eq: bool) -> Result<SharedCol, MpcError> {
        if a.rows() != b.rows() {
            return Err(MpcError::ShapeMismatch { left: a.rows(), right: b.rows() });
        }
        if is_eq {
            self.counters.eq += a.rows() as u64;
        } else {
            self.counters.lt += a.rows() as u64;
        }
        let mut out = self.abb(&[a, b], |plain, _| {
            vec![plain[0].iter().zip(&plain[1]).map(|(x, y)| Fp::bit(f(x.decode(), y.decode()))).collect()]
        })?;
        Ok(out.remove(0))
    }

    /// Permutes rows by a permutation drawn inside the black box; no party
    /// learns it. Flags move with their rows.
    pub fn shuffle(&mut self, rel: &SharedRelation) -> Result<SharedRelation, MpcError> {
        let n = rel.rows;
        self.counters.shuffle_units += shuffle_units(n);
        if n <= 1 {
            return Ok(rel.clone());
        }
        let cols = rel.all_cols();
        let out = self.abb(&cols, |plain, rng| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            plain.iter().map(|c| perm.iter().map(|i| c[*i]).collect()).collect()
        })?;
        Ok(rel.from_all_cols(out, n))
    }

    /// Column of public constants, trivially shared.
    pub fn constant(&self, value: i64, rows: usize) -> SharedCol {
        SharedCol::public(self.parties, &vec![Fp::encode(value); rows])
    }

    pub fn public_col(&self, values: &[i64]) -> SharedCol {
        let v: Vec<Fp> = values.iter().map(|x| Fp::encode(*x)).collect();
        SharedCol::public(self.parties, &v)
    }

    /// Sends a public integer vector from `from` to every other party.
    pub fn broadcast(&mut self, from: PartyId, values: &[i64]) -> Result<(), MpcError> {
        let step = self.step.clone();
        for p in 0..self.parties {
            if p != from.index() {
                self.net.send(&step, Endpoint::Party(from), party(p), MsgClass::Public, Payload::Ints(values.to_vec()));
            }
        }
        for p in 0..self.parties {
            if p != from.index() {
                self.net.recv(&step, party(p), Endpoint::Party(from), MsgClass::Public)?;
            }
        }
        Ok(())
    }

    /// Sends a cleartext table between two parties.
    pub fn send_plain(&mut self, from: PartyId, to: PartyId, table: &Table) -> Result<Table, MpcError> {
        if from == to {
            return Ok(table.clone());
        }
        let step = self.step.clone();
        let flat: Vec<i64> = table.rows.iter().flatten().copied().collect();
        self.net.send(&step, Endpoint::Party(from), Endpoint::Party(to), MsgClass::Reveal, Payload::Ints(flat));
        let got = self.net.recv(&step, Endpoint::Party(to), Endpoint::Party(from), MsgClass::Reveal)?.into_ints();
        let w = table.schema.len();
        let rows = if w == 0 { vec![Vec::new(); table.len()] } else { got.chunks(w).map(|c| c.to_vec()).collect() };
        Ok(Table::new(table.schema.clone(), rows))
    }
}

fn unflatten(flat: Vec<Fp>, lens: &[usize]) -> Vec<Vec<Fp>> {
    let mut out = Vec::with_capacity(lens.len());
    let mut it = flat.into_iter();
    for n in lens {
        out.push(it.by_ref().take(*n).collect());
    }
    out
}

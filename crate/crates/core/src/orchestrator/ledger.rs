//! Append-only record of everything each party observed during a run.

use serde::{Deserialize, Serialize};

use crate::ir::PartyId;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeakItem {
    ColumnValues { relation: String, column: String },
    Cardinality { relation: String },
    Permutation { relation: String },
    Output { relation: String },
}

impl LeakItem {
    pub fn relation(&self) -> &str {
        match self {
            LeakItem::ColumnValues { relation, .. }
            | LeakItem::Cardinality { relation }
            | LeakItem::Permutation { relation }
            | LeakItem::Output { relation } => relation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageEvent {
    pub seq: usize,
    pub step: String,
    pub observer: PartyId,
    pub item: LeakItem,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub events: Vec<LeakageEvent>,
}

impl Ledger {
    pub fn record(&mut self, observer: PartyId, item: LeakItem, step: &str) {
        let seq = self.events.len();
        self.events.push(LeakageEvent { seq, step: step.to_string(), observer, item });
    }

    pub fn columns(&mut self, observer: PartyId, relation: &str, columns: &[String], step: &str) {
        for c in columns {
            self.record(observer, LeakItem::ColumnValues { relation: relation.into(), column: c.clone() }, step);
        }
    }

    pub fn cardinality(&mut self, parties: impl IntoIterator<Item = PartyId>, relation: &str, step: &str) {
        for p in parties {
            self.record(p, LeakItem::Cardinality { relation: relation.into() }, step);
        }
    }

    pub fn by(&self, observer: PartyId) -> impl Iterator<Item = &LeakageEvent> {
        self.events.iter().filter(move |e| e.observer == observer)
    }
}

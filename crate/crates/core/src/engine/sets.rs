use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::nn::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    HumanLabeled,
    AssumedLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub id: u64,
    pub sample: Sample,
    pub provenance: Provenance,
    /// 0 for original data, parent level + 1 for adversaries.
    pub level: u32,
    /// Root the adversary was found from.
    pub parent: Option<u64>,
}

/// Append-ordered samples with stable identifiers.
#[derive(Debug, Clone, Default)]
pub struct LabeledSet {
    entries: Vec<Entry>,
    index: HashMap<u64, usize>,
}

impl LabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a duplicate id; ids come from one counter per engine.
    pub(crate) fn push(&mut self, entry: Entry) {
        let prev = self.index.insert(entry.id, self.entries.len());
        assert!(prev.is_none(), "duplicate sample id {}", entry.id);
        self.entries.push(entry);
    }

    pub(crate) fn clear(&mut self) {
        self.entries.clear();
        self.index.clear();
    }

    pub fn get(&self, id: u64) -> Option<&Entry> {
        self.index.get(&id).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, id: u64) -> bool {
        self.index.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Entry> {
        self.entries.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|e| e.id)
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> + '_ {
        self.entries.iter().map(|e| &e.sample)
    }
}

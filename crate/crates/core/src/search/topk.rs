use crate::layout::{DesignMatrix, LayoutStack};

#[derive(Clone, Debug, PartialEq)]
pub struct TopKEntry {
    pub layout: LayoutStack,
    pub design: DesignMatrix,
    pub score: f64,
}

/// The `k` best distinct designs seen so far, best first.
///
/// A new design enters only if the list has room or it strictly beats the
/// current `k`-th score; equal scores never displace incumbents.
#[derive(Clone, Debug, PartialEq)]
pub struct TopKList {
    k: usize,
    entries: Vec<TopKEntry>,
}

impl TopKList {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "top-k list needs k >= 1");
        TopKList {
            k,
            entries: Vec::with_capacity(k + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TopKEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<TopKEntry> {
        self.entries
    }

    pub fn best(&self) -> Option<&TopKEntry> {
        self.entries.first()
    }

    /// Whether a design scoring `score` would be admitted (ignoring
    /// duplicates).
    pub fn would_accept(&self, score: f64) -> bool {
        self.entries.len() < self.k || self.entries.last().is_some_and(|e| score > e.score)
    }

    pub fn contains(&self, design: &DesignMatrix) -> bool {
        self.entries.iter().any(|e| &e.design == design)
    }

    /// Returns whether the entry was admitted.
    pub fn insert(&mut self, layout: LayoutStack, design: DesignMatrix, score: f64) -> bool {
        if !score.is_finite() || !self.would_accept(score) || self.contains(&design) {
            return false;
        }
        let at = self.entries.partition_point(|e| e.score >= score);
        self.entries.insert(at, TopKEntry { layout, design, score });
        self.entries.truncate(self.k);
        true
    }

    /// Replaces the entries wholesale, re-sorting by score (stable).
    pub(crate) fn replace_entries(&mut self, mut entries: Vec<TopKEntry>) {
        entries.sort_by(|a, b| b.score.total_cmp(&a.score));
        entries.truncate(self.k);
        self.entries = entries;
    }
}

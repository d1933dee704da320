use std::collections::HashMap;

use crate::layout::{DesignMatrix, Dims, LayoutStack};

use super::criteria::CriterionVector;

/// A design proposed for evaluation, with the layout that produced it when
/// it came from the quadtree search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub design: DesignMatrix,
    pub layout: Option<LayoutStack>,
}

impl Candidate {
    pub fn from_layout(layout: LayoutStack) -> Self {
        Candidate {
            design: layout.reconstruct(),
            layout: Some(layout),
        }
    }

    pub fn from_design(design: DesignMatrix) -> Self {
        Candidate {
            design,
            layout: None,
        }
    }
}

/// One simulated design. `sequence` is the logical timestamp: the budget
/// count right after this record was paid for.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationRecord {
    pub design: DesignMatrix,
    pub layout: Option<LayoutStack>,
    pub criteria: CriterionVector,
    pub aggregate: f64,
    /// 0 for the initial dataset, `t + 1` for outer iteration `t`.
    pub iteration: usize,
    pub sequence: usize,
}

/// Evaluated designs in evaluation order, with a lookup index.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    records: Vec<EvaluationRecord>,
    index: HashMap<DesignMatrix, usize>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a dataset from persisted records. Duplicate designs keep
    /// their first occurrence.
    pub fn from_records(records: Vec<EvaluationRecord>) -> Self {
        let mut out = Dataset::new();
        for r in records {
            out.push(r);
        }
        out
    }

    pub(crate) fn push(&mut self, record: EvaluationRecord) -> bool {
        if self.index.contains_key(&record.design) {
            return false;
        }
        self.index.insert(record.design.clone(), self.records.len());
        self.records.push(record);
        true
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EvaluationRecord] {
        &self.records
    }

    pub fn get(&self, design: &DesignMatrix) -> Option<&EvaluationRecord> {
        self.index.get(design).map(|&i| &self.records[i])
    }

    pub fn contains(&self, design: &DesignMatrix) -> bool {
        self.index.contains_key(design)
    }

    pub fn dims(&self) -> Option<Dims> {
        self.records.first().map(|r| r.design.dims())
    }

    /// Highest aggregate; the earliest record wins ties.
    pub fn best(&self) -> Option<&EvaluationRecord> {
        self.records.iter().fold(None, |best: Option<&EvaluationRecord>, r| match best {
            Some(b) if b.aggregate >= r.aggregate => Some(b),
            _ => Some(r),
        })
    }

    /// Records produced before outer iteration `iteration` (exclusive, in the
    /// record numbering where 0 is the initial dataset).
    pub fn prefix_before(&self, iteration: usize) -> Dataset {
        Dataset::from_records(
            self.records
                .iter()
                .filter(|r| r.iteration < iteration)
                .cloned()
                .collect(),
        )
    }
}

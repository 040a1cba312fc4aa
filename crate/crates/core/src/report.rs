//! Audit document of a merge: tuple and attribute counts with their laws,
//! correspondences, conflicts, pruned hierarchies and ambiguous fills.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::dimension_merge::{Completion, Conflict};
use crate::matching::Correspondence;
use crate::model::AttributeName;

pub const FORMAT_VERSION: u32 = 1;

/// Row counts of one output table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TableCounts {
    pub table: String,
    pub n1: usize,
    pub n2: usize,
    /// Rows present in both inputs (same root value or same key tuple).
    pub n_shared: usize,
    pub n_merged: usize,
}

impl TableCounts {
    /// `n_merged = n1 + n2 - n_shared`
    pub fn holds(&self) -> bool {
        self.n_shared <= self.n1.min(self.n2) && self.n1 + self.n2 - self.n_shared == self.n_merged
    }
}

/// Non-null cell counts of one attribute of an output dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AttributeCounts {
    pub table: String,
    pub attribute: AttributeName,
    pub n1: usize,
    pub n2: usize,
    /// Rows carrying a value for the attribute in both inputs.
    pub n_shared: usize,
    /// Cells filled by completion that neither input had.
    pub n_plus: usize,
    pub n_merged: usize,
}

impl AttributeCounts {
    /// `n_merged = n1 + n2 - n_shared + n_plus`; with a one-sided attribute
    /// `n_shared` is zero.
    pub fn holds(&self) -> bool {
        self.n_shared <= self.n1.min(self.n2) && self.n1 + self.n2 - self.n_shared + self.n_plus == self.n_merged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum PruneReason {
    NoConformingInstance,
    SubsumedByMerged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PrunedHierarchy {
    pub dimension: String,
    pub hierarchy: String,
    pub parameters: Vec<AttributeName>,
    pub reason: PruneReason,
}

/// How a pair of input dimensions was combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum PairRole {
    /// Roots differ; both sides received complementary attributes.
    Enriched,
    /// Roots correspond; merged into one output dimension.
    Merged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DimensionPair {
    pub left: String,
    pub right: String,
    pub role: PairRole,
    pub correspondences: Vec<Correspondence>,
    /// Right attribute names that carry a different name in the output.
    pub aliases: Vec<(AttributeName, AttributeName)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum OutputKind {
    Star,
    Constellation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MergeReport {
    pub format_version: u32,
    pub tool_version: String,
    pub config: Map<String, Value>,
    pub output: OutputKind,
    pub name: String,
    pub dimension_pairs: Vec<DimensionPair>,
    pub measure_correspondences: Vec<Correspondence>,
    pub tables: Vec<TableCounts>,
    /// Attributes that received at least one completed value.
    pub completed_attributes: Vec<AttributeCounts>,
    pub filled_cells: usize,
    pub ambiguous_fills: Vec<Completion>,
    pub conflicts: Vec<Conflict>,
    pub pruned_hierarchies: Vec<PrunedHierarchy>,
}

impl MergeReport {
    /// Names every count entry whose law does not hold.
    pub fn law_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in self.tables.iter().filter(|t| !t.holds()) {
            out.push(format!("{}: {} + {} - {} != {}", t.table, t.n1, t.n2, t.n_shared, t.n_merged));
        }
        for a in self.completed_attributes.iter().filter(|a| !a.holds()) {
            out.push(format!(
                "{}.{}: {} + {} - {} + {} != {}",
                a.table, a.attribute, a.n1, a.n2, a.n_shared, a.n_plus, a.n_merged
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laws() {
        let t = TableCounts { table: "C".into(), n1: 11250, n2: 11250, n_shared: 8439, n_merged: 14061 };
        assert!(t.holds());
        assert!(!TableCounts { n_merged: 14060, ..t.clone() }.holds());
        assert!(!TableCounts { n_shared: 11251, ..t }.holds());
        let a = AttributeCounts {
            table: "C".into(),
            attribute: "Region".into(),
            n1: 10,
            n2: 0,
            n_shared: 0,
            n_plus: 4,
            n_merged: 14,
        };
        assert!(a.holds());
        assert!(!AttributeCounts { n_plus: 3, ..a }.holds());
    }
}

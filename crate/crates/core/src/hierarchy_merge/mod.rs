//! Merging of two hierarchies from different dimensions.
//!
//! The two hierarchies are expected in a shared vocabulary: a parameter of the
//! second hierarchy that corresponds to one of the first carries the first's
//! name, and no other names collide. `dimension_merge` establishes that
//! vocabulary from the attribute correspondences before calling in here.
//!
//! The merge records the matched parameters, cuts both hierarchies into
//! sub-hierarchy pairs between consecutive matches, merges each pair (by
//! containment, or by FD discovery over the instances when both sides carry
//! parameters of their own) and chains the per-pair results together.

mod fd;
mod params;

use log::debug;
use serde::Serialize;
use thiserror::Error;

use crate::model::{join_names, AttributeName, Dimension, Hierarchy, SubHierarchy};

pub use fd::{discover_fds, join_sub_hierarchies, raw_fds, reachability, transitive_reduction, FdEdge, FdGraph, FdOutcome, FdTable};
pub use params::merge_parameters;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("matched parameters cross between `{first_left}`~`{first_right}` and `{second_left}`~`{second_right}`")]
    NonMonotone {
        first_left: String,
        first_right: String,
        second_left: String,
        second_right: String,
    },
    #[error("no matched parameters to cut sub-hierarchies from")]
    EmptyMatchList,
    #[error("cannot extend <{left}> by <{right}>: boundary parameters differ")]
    ExtendBoundary { left: String, right: String },
    #[error("extending <{left}> by <{right}> repeats parameter `{parameter}`")]
    RepeatedParameter { left: String, right: String, parameter: String },
    #[error("functional dependencies are cyclic through `{0}`")]
    CyclicFds(String),
    #[error("FD sequence {0:?} has fewer than two parameters")]
    ShortFdSequence(Vec<String>),
    #[error("merging <{left}> with <{right}> yields {count} chains, above the cap of {cap}")]
    ChainCapExceeded { left: String, right: String, count: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HierarchyConfig {
    /// Minimum number of supporting joined rows for an FD.
    pub min_support: u64,
    /// Maximum number of merged chains one sub-hierarchy pair may produce.
    pub chain_cap: usize,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self { min_support: 1, chain_cap: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedPair {
    pub left_index: usize,
    pub right_index: usize,
    pub left: AttributeName,
    pub right: AttributeName,
}

/// Matched parameter couples in the first hierarchy's order, possibly ending
/// with the couple of last parameters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchedParameterList {
    pub pairs: Vec<MatchedPair>,
    /// The final couple was appended because the last parameters do not match.
    pub appended_last: bool,
}

impl MatchedParameterList {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn names(&self) -> Vec<(String, String)> {
        self.pairs.iter().map(|p| (p.left.raw().to_string(), p.right.raw().to_string())).collect()
    }
}

pub fn record_matched_parameters(h1: &Hierarchy, h2: &Hierarchy) -> Result<MatchedParameterList, HierarchyError> {
    let mut pairs = Vec::new();
    for (i, p) in h1.parameters.iter().enumerate() {
        for (j, q) in h2.parameters.iter().enumerate() {
            if p == q {
                pairs.push(MatchedPair { left_index: i, right_index: j, left: p.clone(), right: q.clone() });
            }
        }
    }
    for w in pairs.windows(2) {
        if w[1].right_index <= w[0].right_index {
            return Err(HierarchyError::NonMonotone {
                first_left: w[0].left.raw().into(),
                first_right: w[0].right.raw().into(),
                second_left: w[1].left.raw().into(),
                second_right: w[1].right.raw().into(),
            });
        }
    }
    if pairs.is_empty() {
        return Ok(MatchedParameterList::default());
    }
    let (li, ri) = (h1.parameters.len() - 1, h2.parameters.len() - 1);
    let mut appended_last = false;
    if !pairs.iter().any(|p| p.left_index == li && p.right_index == ri) {
        pairs.push(MatchedPair {
            left_index: li,
            right_index: ri,
            left: h1.parameters[li].clone(),
            right: h2.parameters[ri].clone(),
        });
        appended_last = true;
    }
    Ok(MatchedParameterList { pairs, appended_last })
}

/// Sub-hierarchy pairs spanning each two consecutive matched couples,
/// boundaries included.
pub fn generate_sub_hierarchy_pairs(
    h1: &Hierarchy,
    h2: &Hierarchy,
    matched: &MatchedParameterList,
) -> Result<Vec<(SubHierarchy, SubHierarchy)>, HierarchyError> {
    if matched.is_empty() {
        return Err(HierarchyError::EmptyMatchList);
    }
    Ok(matched
        .pairs
        .windows(2)
        .map(|w| {
            (h1.sub(w[0].left_index, w[1].left_index), h2.sub(w[0].right_index, w[1].right_index))
        })
        .collect())
}

/// How a sub-hierarchy pair was merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentOutcome {
    /// One side's parameters are all in the other; the larger side wins.
    Contained,
    /// Chains derived from the FD graph.
    Merged(FdGraph),
    /// No shared first-parameter value, or no usable FD chain: both kept.
    KeptBoth,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMerge {
    pub outcome: SegmentOutcome,
    pub chains: Vec<Vec<AttributeName>>,
}

pub fn merge_sub_hierarchy_pair(
    sh1: &SubHierarchy,
    sh2: &SubHierarchy,
    left: &Dimension,
    right: &Dimension,
    cfg: &HierarchyConfig,
) -> Result<SegmentMerge, HierarchyError> {
    if sh1.is_subset_of(sh2) {
        return Ok(SegmentMerge { outcome: SegmentOutcome::Contained, chains: vec![sh2.parameters.clone()] });
    }
    if sh2.is_subset_of(sh1) {
        return Ok(SegmentMerge { outcome: SegmentOutcome::Contained, chains: vec![sh1.parameters.clone()] });
    }
    let kept_both = || SegmentMerge {
        outcome: SegmentOutcome::KeptBoth,
        chains: vec![sh1.parameters.clone(), sh2.parameters.clone()],
    };
    let graph = match discover_fds(sh1, sh2, left, right, cfg.min_support) {
        FdOutcome::Graph(g) if !g.is_empty() => g,
        _ => {
            debug!("FDs undiscoverable for <{}> / <{}>", join_names(&sh1.parameters), join_names(&sh2.parameters));
            return Ok(kept_both());
        }
    };
    let last_matched = sh1.last() == sh2.last();
    let chains: Vec<Vec<AttributeName>> = merge_parameters(&graph.sequences())?
        .into_iter()
        .filter(|c| &c[0] == sh1.first() && (!last_matched || c.last() == Some(sh1.last())))
        .collect();
    if chains.is_empty() {
        return Ok(kept_both());
    }
    if chains.len() > cfg.chain_cap {
        return Err(HierarchyError::ChainCapExceeded {
            left: join_names(&sh1.parameters),
            right: join_names(&sh2.parameters),
            count: chains.len(),
            cap: cfg.chain_cap,
        });
    }
    Ok(SegmentMerge { outcome: SegmentOutcome::Merged(graph), chains })
}

/// Appends `tail` to `head`; the last parameter of `head` must be the first
/// of `tail` and appears once in the result.
pub fn extend(head: &[AttributeName], tail: &[AttributeName]) -> Result<Vec<AttributeName>, HierarchyError> {
    match (head.last(), tail.first()) {
        (Some(a), Some(b)) if a == b => {}
        _ => {
            return Err(HierarchyError::ExtendBoundary { left: join_names(head), right: join_names(tail) });
        }
    }
    let mut out = head.to_vec();
    for p in &tail[1..] {
        if out.contains(p) {
            return Err(HierarchyError::RepeatedParameter {
                left: join_names(head),
                right: join_names(tail),
                parameter: p.raw().to_string(),
            });
        }
        out.push(p.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HierarchyMergeResult {
    /// Roots matched: one set holding the merged hierarchies and both inputs.
    /// `merged` lists the chains the merge produced, including a chain that
    /// coincides with an input holding every parameter of the other input.
    Single { hierarchies: Vec<Hierarchy>, merged: Vec<Hierarchy> },
    /// Roots unmatched (or nothing matched): one set per input dimension.
    Pair { left: Vec<Hierarchy>, right: Vec<Hierarchy>, merged_left: Vec<Hierarchy>, merged_right: Vec<Hierarchy> },
}

impl HierarchyMergeResult {
    pub fn all(&self) -> Vec<&Hierarchy> {
        match self {
            HierarchyMergeResult::Single { hierarchies, .. } => hierarchies.iter().collect(),
            HierarchyMergeResult::Pair { left, right, .. } => left.iter().chain(right).collect(),
        }
    }
}

/// Merges `h1` (of dimension `left`) with `h2` (of dimension `right`). The
/// roots match when both hierarchies start with the same parameter.
pub fn merge_hierarchies(
    h1: &Hierarchy,
    h2: &Hierarchy,
    left: &Dimension,
    right: &Dimension,
    cfg: &HierarchyConfig,
) -> Result<HierarchyMergeResult, HierarchyError> {
    let matched = record_matched_parameters(h1, h2)?;
    if matched.is_empty() {
        return Ok(HierarchyMergeResult::Pair {
            left: vec![h1.clone()],
            right: vec![h2.clone()],
            merged_left: Vec::new(),
            merged_right: Vec::new(),
        });
    }
    let segments = generate_sub_hierarchy_pairs(h1, h2, &matched)?;
    let mut merged: Vec<Vec<AttributeName>> = vec![vec![matched.pairs[0].left.clone()]];
    for (sh1, sh2) in &segments {
        let seg = merge_sub_hierarchy_pair(sh1, sh2, left, right, cfg)?;
        debug!("{} x {}: segment <{}> / <{}> -> {:?}", h1.name, h2.name, join_names(&sh1.parameters), join_names(&sh2.parameters), seg.outcome);
        let mut next = Vec::new();
        for head in &merged {
            for tail in &seg.chains {
                let h = extend(head, tail)?;
                if !next.contains(&h) {
                    next.push(h);
                }
            }
        }
        merged = next;
    }

    let base = format!("{}_{}", h1.name, h2.name);
    let roots_matched = h1.parameters[0] == h2.parameters[0];
    if roots_matched {
        let chains = merged
            .into_iter()
            .filter(|c| absorbs(c, h1, &h2.parameters) && absorbs(c, h2, &h1.parameters))
            .collect();
        let (hierarchies, merged) = assemble(vec![h1.clone(), h2.clone()], chains, &base);
        return Ok(HierarchyMergeResult::Single { hierarchies, merged });
    }
    let (first1, first2) = (matched.pairs[0].left_index, matched.pairs[0].right_index);
    let prefix1 = &h1.parameters[..=first1];
    let prefix2 = &h2.parameters[..=first2];
    let mut left_chains = Vec::new();
    let mut right_chains = Vec::new();
    for c in &merged {
        let l = extend(prefix1, c)?;
        if absorbs(&l, h1, &h2.parameters[first2..]) {
            left_chains.push(l);
        }
        let r = extend(prefix2, c)?;
        if absorbs(&r, h2, &h1.parameters[first1..]) {
            right_chains.push(r);
        }
    }
    let (left, merged_left) = assemble(vec![h1.clone()], left_chains, &base);
    let (right, merged_right) = assemble(vec![h2.clone()], right_chains, &base);
    Ok(HierarchyMergeResult::Pair { left, right, merged_left, merged_right })
}

/// False when `chain` merely reproduces `original` without holding every
/// parameter the other side brought: both were kept side by side rather than
/// merged.
fn absorbs(chain: &[AttributeName], original: &Hierarchy, other: &[AttributeName]) -> bool {
    chain != original.parameters.as_slice() || other.iter().all(|p| chain.contains(p))
}

/// Originals first, then every new chain not equal to an earlier hierarchy.
/// A single new chain is named `base`, several are numbered `base_1`, ...
/// Also returns the members that correspond to `chains`.
fn assemble(originals: Vec<Hierarchy>, chains: Vec<Vec<AttributeName>>, base: &str) -> (Vec<Hierarchy>, Vec<Hierarchy>) {
    let mut out: Vec<Hierarchy> = Vec::new();
    for h in originals {
        if !out.iter().any(|o| o.parameters == h.parameters) {
            out.push(h);
        }
    }
    let mut fresh: Vec<Vec<AttributeName>> = Vec::new();
    for c in chains.iter().cloned() {
        if !out.iter().any(|o| o.parameters == c) && !fresh.contains(&c) {
            fresh.push(c);
        }
    }
    let numbered = fresh.len() > 1;
    for (k, c) in fresh.into_iter().enumerate() {
        let name = if numbered { format!("{base}_{}", k + 1) } else { base.to_string() };
        out.push(Hierarchy::new(name, c));
    }
    let mut merged: Vec<Hierarchy> = Vec::new();
    for c in &chains {
        if !merged.iter().any(|m| &m.parameters == c) {
            merged.extend(out.iter().find(|o| &o.parameters == c).cloned());
        }
    }
    (out, merged)
}

/// Every adjacent roll-up `p -> q` of `h` appears, in order, in some member
/// of `set`.
pub fn preserves_partial_order(h: &Hierarchy, set: &[Hierarchy]) -> bool {
    h.parameters.windows(2).all(|w| set.iter().any(|o| o.rolls_up(&w[0], &w[1])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::names;
    use crate::model::tests::dim;

    fn h(name: &str, ps: &[&str]) -> Hierarchy {
        Hierarchy::from_names(name, ps)
    }

    fn seq(ps: &[&str]) -> Vec<AttributeName> {
        names(ps)
    }

    /// Customer instances of both warehouses where departments roll up to
    /// regions, regions to countries and countries to continents.
    fn geography_dims() -> (Dimension, Dimension) {
        let d1 = dim(
            "Customer",
            "Code",
            &["Code", "Department", "Region", "Continent"],
            &[],
            &[
                &["C1", "Dep31", "Occitanie", "Europe"],
                &["C2", "Dep69", "AuvergneRhoneAlpes", "Europe"],
                &["C3", "Dep75", "IleDeFrance", "Europe"],
                &["C4", "Dep08", "Catalonia", "Europe"],
                &["C7", "Dep81", "Occitanie", "Europe"],
            ],
        );
        let d2 = dim(
            "Customer",
            "Code",
            &["Code", "City", "Department", "Country", "Continent"],
            &[],
            &[
                &["C1", "Toulouse", "Dep31", "France", "Europe"],
                &["C2", "Lyon", "Dep69", "France", "Europe"],
                &["C4", "Barcelona", "Dep08", "Spain", "Europe"],
                &["C7", "Albi", "Dep81", "France", "Europe"],
                &["C9", "Castres", "Dep81", "France", "Europe"],
            ],
        );
        (d1, d2)
    }

    #[test]
    fn records_matches_in_order() {
        let h1 = h("H1", &["Code", "Department", "Region", "Continent"]);
        let h2 = h("H2", &["Code", "City", "Department", "Country", "Continent"]);
        let m = record_matched_parameters(&h1, &h2).unwrap();
        assert_eq!(
            m.names(),
            vec![("Code".into(), "Code".into()), ("Department".into(), "Department".into()), ("Continent".into(), "Continent".into())]
        );
        assert!(!m.appended_last);
    }

    #[test]
    fn appends_unmatched_last_pair() {
        let h1 = h("H1", &["Code", "Department", "Region", "Continent"]);
        let h3 = h("H3", &["City", "Department", "Country"]);
        let m = record_matched_parameters(&h1, &h3).unwrap();
        assert_eq!(m.names().last().unwrap(), &("Continent".to_string(), "Country".to_string()));
        assert!(m.appended_last);
        let pairs = generate_sub_hierarchy_pairs(&h1, &h3, &m).unwrap();
        assert_eq!(pairs.last().unwrap().0.parameters, seq(&["Department", "Region", "Continent"]));
        assert_eq!(pairs.last().unwrap().1.parameters, seq(&["Department", "Country"]));
    }

    #[test]
    fn disjoint_hierarchies_record_nothing() {
        let m = record_matched_parameters(&h("A", &["a", "b"]), &h("B", &["c", "d"])).unwrap();
        assert!(m.is_empty());
        assert_eq!(
            generate_sub_hierarchy_pairs(&h("A", &["a"]), &h("B", &["c"]), &m),
            Err(HierarchyError::EmptyMatchList)
        );
    }

    #[test]
    fn crossing_matches_are_rejected() {
        let err = record_matched_parameters(&h("A", &["k", "x", "y"]), &h("B", &["k", "y", "x"])).unwrap_err();
        assert!(matches!(err, HierarchyError::NonMonotone { .. }));
        assert!(err.to_string().contains('x') && err.to_string().contains('y'));
    }

    #[test]
    fn sub_hierarchy_pairs_of_fig2a() {
        let h1 = h("H1", &["Code", "Department", "Region", "Continent"]);
        let h2 = h("H2", &["Code", "City", "Department", "Country", "Continent"]);
        let m = record_matched_parameters(&h1, &h2).unwrap();
        let pairs = generate_sub_hierarchy_pairs(&h1, &h2, &m).unwrap();
        let got: Vec<_> = pairs.iter().map(|(a, b)| (a.parameters.clone(), b.parameters.clone())).collect();
        assert_eq!(
            got,
            vec![
                (seq(&["Code", "Department"]), seq(&["Code", "City", "Department"])),
                (seq(&["Department", "Region", "Continent"]), seq(&["Department", "Country", "Continent"])),
            ]
        );
        let same = h("S", &["Code", "Dept"]);
        let m = record_matched_parameters(&same, &same).unwrap();
        let pairs = generate_sub_hierarchy_pairs(&same, &same, &m).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].0, pairs[0].1);
    }

    #[test]
    fn contained_segment_takes_larger_side() {
        let (d1, d2) = geography_dims();
        let sh1 = h("H1", &["Code", "Department"]).sub(0, 1);
        let sh2 = h("H2", &["Code", "City", "Department"]).sub(0, 2);
        let seg = merge_sub_hierarchy_pair(&sh1, &sh2, &d1, &d2, &HierarchyConfig::default()).unwrap();
        assert_eq!(seg.outcome, SegmentOutcome::Contained);
        assert_eq!(seg.chains, vec![seq(&["Code", "City", "Department"])]);
        let seg = merge_sub_hierarchy_pair(&sh1, &sh1, &d1, &d1, &HierarchyConfig::default()).unwrap();
        assert_eq!(seg.chains, vec![seq(&["Code", "Department"])]);
    }

    #[test]
    fn fd_segment_interleaves_parameters() {
        let (d1, d2) = geography_dims();
        let sh1 = h("H1", &["Department", "Region", "Continent"]).sub(0, 2);
        let sh2 = h("H2", &["Department", "Country", "Continent"]).sub(0, 2);
        let seg = merge_sub_hierarchy_pair(&sh1, &sh2, &d1, &d2, &HierarchyConfig::default()).unwrap();
        assert!(matches!(seg.outcome, SegmentOutcome::Merged(_)));
        assert_eq!(seg.chains, vec![seq(&["Department", "Region", "Country", "Continent"])]);
    }

    #[test]
    fn extend_shares_boundary() {
        let a = seq(&["Code", "City", "Department"]);
        let b = seq(&["Department", "Region", "Country", "Continent"]);
        assert_eq!(extend(&a, &b).unwrap(), seq(&["Code", "City", "Department", "Region", "Country", "Continent"]));
        assert_eq!(extend(&a, &seq(&["Department"])).unwrap(), a);
        assert!(matches!(
            extend(&seq(&["Code"]), &seq(&["Department", "Region"])),
            Err(HierarchyError::ExtendBoundary { .. })
        ));
    }

    #[test]
    fn matched_roots_example() {
        let (d1, d2) = geography_dims();
        let h1 = h("H1", &["Code", "Department", "Region", "Continent"]);
        let h2 = h("H2", &["Code", "City", "Department", "Country", "Continent"]);
        let HierarchyMergeResult::Single { hierarchies: set, .. } =
            merge_hierarchies(&h1, &h2, &d1, &d2, &HierarchyConfig::default()).unwrap()
        else {
            panic!("roots match")
        };
        assert_eq!(set.len(), 3);
        assert_eq!(set[0], h1);
        assert_eq!(set[1], h2);
        assert_eq!(set[2].name, "H1_H2");
        assert_eq!(set[2].parameters, seq(&["Code", "City", "Department", "Region", "Country", "Continent"]));
    }

    #[test]
    fn unmatched_roots_example() {
        let (d1, d2) = geography_dims();
        // second warehouse keyed by City
        let mut d3 = d2.clone();
        d3.root = "City".into();
        let h1 = h("H1", &["Code", "Department", "Region", "Continent"]);
        let h3 = h("H3", &["City", "Department", "Country", "Continent"]);
        let HierarchyMergeResult::Pair { left, right, .. } =
            merge_hierarchies(&h1, &h3, &d1, &d3, &HierarchyConfig::default()).unwrap()
        else {
            panic!("roots differ")
        };
        assert_eq!(left.len(), 2);
        assert_eq!(left[0], h1);
        assert_eq!(left[1].parameters, seq(&["Code", "Department", "Region", "Country", "Continent"]));
        assert_eq!(right.len(), 2);
        assert_eq!(right[0], h3);
        assert_eq!(right[1].parameters, seq(&["City", "Department", "Region", "Country", "Continent"]));
    }

    #[test]
    fn disjoint_hierarchies_are_returned_unchanged() {
        let (d1, d2) = geography_dims();
        let a = h("A", &["Code", "Region"]);
        let b = h("B", &["City", "Country"]);
        assert_eq!(
            merge_hierarchies(&a, &b, &d1, &d2, &HierarchyConfig::default()).unwrap(),
            HierarchyMergeResult::Pair { left: vec![a], right: vec![b], merged_left: vec![], merged_right: vec![] }
        );
    }

    #[test]
    fn no_shared_values_keeps_both_segments() {
        let d1 = dim("A", "k", &["k", "x", "top"], &[], &[&["1", "a", "t"]]);
        let d2 = dim("B", "k", &["k", "y", "top"], &[], &[&["2", "b", "t"]]);
        let h1 = h("H1", &["k", "x", "top"]);
        let h2 = h("H2", &["k", "y", "top"]);
        let HierarchyMergeResult::Single { hierarchies: set, .. } = merge_hierarchies(&h1, &h2, &d1, &d2, &HierarchyConfig::default()).unwrap()
        else {
            panic!()
        };
        // both segment variants extend to the originals, which dedup away
        assert_eq!(set, vec![h1, h2]);
    }

    #[test]
    fn chain_cap_is_enforced() {
        let (d1, d2) = geography_dims();
        let sh1 = h("H1", &["Department", "Region", "Continent"]).sub(0, 2);
        let sh2 = h("H2", &["Department", "Country", "Continent"]).sub(0, 2);
        let cfg = HierarchyConfig { min_support: 1, chain_cap: 0 };
        assert!(matches!(
            merge_sub_hierarchy_pair(&sh1, &sh2, &d1, &d2, &cfg),
            Err(HierarchyError::ChainCapExceeded { count: 1, cap: 0, .. })
        ));
    }
}

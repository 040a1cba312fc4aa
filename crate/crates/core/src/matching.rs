//! Correspondences between the parameters and measures of two warehouses.
//!
//! Matching is syntactic: exact comparison of normalized names by default,
//! bounded Levenshtein distance when asked, and a user map that can force or
//! forbid individual pairs. Every attribute ends up in at most one
//! correspondence against a given opposite table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{AttributeName, Dimension, Fact, StarSchema};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchError {
    #[error("user map line {line}: `{entry}` references unknown attribute `{attribute}`")]
    UnknownMapAttribute { line: usize, entry: String, attribute: String },
    #[error("user map line {line}: `{entry}` references a table that is in neither warehouse")]
    UnknownMapTable { line: usize, entry: String },
    #[error("user map lines {first} and {second} pair the same attribute twice")]
    ConflictingMapEntries { first: usize, second: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct AttrRef {
    /// Dimension or fact name.
    pub owner: String,
    pub attr: AttributeName,
}

impl AttrRef {
    pub fn new(owner: impl Into<String>, attr: impl Into<String>) -> Self {
        Self { owner: owner.into(), attr: AttributeName::new(attr.into()) }
    }
}

impl fmt::Display for AttrRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.owner, self.attr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchSource {
    Exact,
    EditDistance,
    UserMap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correspondence {
    pub left: AttrRef,
    pub right: AttrRef,
    /// Similarity in [0, 1]; 1 for exact and user-mapped pairs.
    pub score: f64,
    pub source: MatchSource,
}

impl Correspondence {
    fn swapped(&self) -> Self {
        Self { left: self.right.clone(), right: self.left.clone(), score: self.score, source: self.source }
    }
}

impl fmt::Display for Correspondence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ {} ({:?}, {:.3})", self.left, self.right, self.source, self.score)
    }
}

/// One-to-one correspondences between a left and a right table, sorted by
/// left attribute.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct CorrespondenceSet(Vec<Correspondence>);

impl CorrespondenceSet {
    pub fn new(mut corrs: Vec<Correspondence>) -> Self {
        corrs.sort_by(|a, b| (&a.left, &a.right).cmp(&(&b.left, &b.right)));
        Self(corrs)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Correspondence> {
        self.0.iter()
    }

    pub fn right_of(&self, left: &AttributeName) -> Option<&AttributeName> {
        self.0.iter().find(|c| &c.left.attr == left).map(|c| &c.right.attr)
    }

    pub fn left_of(&self, right: &AttributeName) -> Option<&AttributeName> {
        self.0.iter().find(|c| &c.right.attr == right).map(|c| &c.left.attr)
    }

    pub fn contains_pair(&self, left: &AttributeName, right: &AttributeName) -> bool {
        self.0.iter().any(|c| &c.left.attr == left && &c.right.attr == right)
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.0.iter().map(Correspondence::swapped).collect())
    }

    /// Pairs `(left attribute, right attribute)` in set order.
    pub fn attribute_pairs(&self) -> Vec<(AttributeName, AttributeName)> {
        self.0.iter().map(|c| (c.left.attr.clone(), c.right.attr.clone())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MatchMode {
    /// Equal normalized names; the edit bound is implicitly zero.
    Exact,
    EditDistance { max: usize },
}

impl MatchMode {
    pub fn max_edit_distance(&self) -> usize {
        match self {
            MatchMode::Exact => 0,
            MatchMode::EditDistance { max } => *max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MapAction {
    Pair,
    Forbid,
}

/// One line of a user correspondence file. `left` names an element of the
/// first warehouse, `right` one of the second.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MapEntry {
    pub left: AttrRef,
    pub right: AttrRef,
    pub action: MapAction,
    pub line: usize,
}

impl fmt::Display for MapEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.action {
            MapAction::Pair => "pair",
            MapAction::Forbid => "forbid",
        };
        write!(f, "{a} {} {}", self.left, self.right)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct UserMap {
    pub entries: Vec<MapEntry>,
}

impl UserMap {
    /// The same map seen from the other warehouse.
    pub fn swapped(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| MapEntry { left: e.right.clone(), right: e.left.clone(), action: e.action, line: e.line })
            .collect();
        Self { entries }
    }

    fn for_owners<'a>(&'a self, left: &'a str, right: &'a str) -> impl Iterator<Item = &'a MapEntry> + 'a {
        self.entries.iter().filter(move |e| e.left.owner == left && e.right.owner == right)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatcherConfig {
    pub mode: MatchMode,
    #[serde(skip)]
    pub user_map: Option<UserMap>,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self { mode: MatchMode::Exact, user_map: None }
    }
}

impl MatcherConfig {
    pub fn edit_distance(max: usize) -> Self {
        Self { mode: MatchMode::EditDistance { max }, user_map: None }
    }

    pub fn with_user_map(mut self, map: UserMap) -> Self {
        self.user_map = Some(map);
        self
    }

    /// Configuration for matching with the two warehouses swapped.
    pub fn swapped(&self) -> Self {
        Self { mode: self.mode, user_map: self.user_map.as_ref().map(UserMap::swapped) }
    }
}

pub fn match_attributes(
    d1: &Dimension,
    d2: &Dimension,
    cfg: &MatcherConfig,
) -> Result<CorrespondenceSet, MatchError> {
    let left: Vec<&AttributeName> = d1.attributes().collect();
    let right: Vec<&AttributeName> = d2.attributes().collect();
    match_names(&d1.name, &left, &d2.name, &right, cfg)
}

pub fn match_measures(f1: &Fact, f2: &Fact, cfg: &MatcherConfig) -> Result<CorrespondenceSet, MatchError> {
    let left: Vec<&AttributeName> = f1.measures.iter().map(|m| &m.name).collect();
    let right: Vec<&AttributeName> = f2.measures.iter().map(|m| &m.name).collect();
    match_names(&f1.name, &left, &f2.name, &right, cfg)
}

/// Whether the two dimensions describe the same analysis axis, i.e. their
/// root parameters correspond.
pub fn matched_root_parameters(d1: &Dimension, d2: &Dimension, corrs: &CorrespondenceSet) -> bool {
    corrs.contains_pair(&d1.root, &d2.root)
}

fn match_names(
    owner1: &str,
    left: &[&AttributeName],
    owner2: &str,
    right: &[&AttributeName],
    cfg: &MatcherConfig,
) -> Result<CorrespondenceSet, MatchError> {
    let mut forced: Vec<(&MapEntry, usize, usize)> = Vec::new();
    let mut forbidden: BTreeSet<(usize, usize)> = BTreeSet::new();
    if let Some(map) = &cfg.user_map {
        for e in map.for_owners(owner1, owner2) {
            let li = find(left, &e.left.attr).ok_or_else(|| unknown(e, &e.left))?;
            let ri = find(right, &e.right.attr).ok_or_else(|| unknown(e, &e.right))?;
            match e.action {
                MapAction::Pair => {
                    if let Some((prev, _, _)) = forced.iter().find(|(_, l, r)| *l == li || *r == ri) {
                        return Err(MatchError::ConflictingMapEntries { first: prev.line, second: e.line });
                    }
                    forced.push((e, li, ri));
                }
                MapAction::Forbid => {
                    forbidden.insert((li, ri));
                }
            }
        }
    }

    let mut used_left = vec![false; left.len()];
    let mut used_right = vec![false; right.len()];
    let mut out = Vec::new();
    for (_, li, ri) in &forced {
        used_left[*li] = true;
        used_right[*ri] = true;
        out.push(correspondence(owner1, left[*li], owner2, right[*ri], 1.0, MatchSource::UserMap));
    }

    // Candidates ordered by distance, then by the unordered name pair, which
    // keeps the greedy selection identical when the sides are swapped.
    let max = cfg.mode.max_edit_distance();
    let mut candidates = Vec::new();
    for (li, l) in left.iter().enumerate() {
        if used_left[li] {
            continue;
        }
        for (ri, r) in right.iter().enumerate() {
            if used_right[ri] || forbidden.contains(&(li, ri)) {
                continue;
            }
            let d = match cfg.mode {
                MatchMode::Exact => usize::from(l.normalized() != r.normalized()),
                MatchMode::EditDistance { .. } => strsim::levenshtein(l.normalized(), r.normalized()),
            };
            if d <= max {
                let (lo, hi) = if l.normalized() <= r.normalized() {
                    (l.normalized(), r.normalized())
                } else {
                    (r.normalized(), l.normalized())
                };
                candidates.push((d, lo, hi, li, ri));
            }
        }
    }
    candidates.sort();
    for (d, _, _, li, ri) in candidates {
        if used_left[li] || used_right[ri] {
            continue;
        }
        used_left[li] = true;
        used_right[ri] = true;
        let (l, r) = (left[li], right[ri]);
        let longest = l.normalized().chars().count().max(r.normalized().chars().count());
        let (score, source) = if d == 0 {
            (1.0, MatchSource::Exact)
        } else {
            (1.0 - d as f64 / longest as f64, MatchSource::EditDistance)
        };
        out.push(correspondence(owner1, l, owner2, r, score, source));
    }
    Ok(CorrespondenceSet::new(out))
}

fn find(names: &[&AttributeName], target: &AttributeName) -> Option<usize> {
    names.iter().position(|n| *n == target)
}

fn unknown(e: &MapEntry, which: &AttrRef) -> MatchError {
    MatchError::UnknownMapAttribute { line: e.line, entry: e.to_string(), attribute: which.to_string() }
}

fn correspondence(
    owner1: &str,
    l: &AttributeName,
    owner2: &str,
    r: &AttributeName,
    score: f64,
    source: MatchSource,
) -> Correspondence {
    Correspondence {
        left: AttrRef { owner: owner1.to_string(), attr: l.clone() },
        right: AttrRef { owner: owner2.to_string(), attr: r.clone() },
        score,
        source,
    }
}

/// Correspondences for every (left dimension, right dimension) pair and for
/// the two facts' measures.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SchemaMatches {
    pub dimensions: BTreeMap<String, BTreeMap<String, CorrespondenceSet>>,
    pub measures: CorrespondenceSet,
}

impl SchemaMatches {
    pub fn between(&self, left: &str, right: &str) -> Option<&CorrespondenceSet> {
        self.dimensions.get(left).and_then(|m| m.get(right))
    }

    pub fn all(&self) -> impl Iterator<Item = &Correspondence> {
        self.dimensions.values().flat_map(|m| m.values()).flat_map(|s| s.iter()).chain(self.measures.iter())
    }
}

pub fn match_schemas(s1: &StarSchema, s2: &StarSchema, cfg: &MatcherConfig) -> Result<SchemaMatches, MatchError> {
    if let Some(map) = &cfg.user_map {
        for e in &map.entries {
            let left_known = s1.dimension(&e.left.owner).is_some() || s1.fact.name == e.left.owner;
            let right_known = s2.dimension(&e.right.owner).is_some() || s2.fact.name == e.right.owner;
            if !left_known || !right_known {
                return Err(MatchError::UnknownMapTable { line: e.line, entry: e.to_string() });
            }
        }
    }
    let mut out = SchemaMatches::default();
    for d1 in &s1.dimensions {
        let row = out.dimensions.entry(d1.name.clone()).or_default();
        for d2 in &s2.dimensions {
            row.insert(d2.name.clone(), match_attributes(d1, d2, cfg)?);
        }
    }
    out.measures = match_measures(&s1.fact, &s2.fact, cfg)?;
    Ok(out)
}

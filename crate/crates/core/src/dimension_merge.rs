//! Merging of two dimensions at schema and instance level, and hierarchy
//! driven completion of the empty values the instance union leaves behind.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::{debug, warn};
use serde::Serialize;

use crate::error::MergeError;
use crate::hierarchy_merge::{merge_hierarchies, HierarchyConfig, HierarchyMergeResult};
use crate::matching::{matched_root_parameters, CorrespondenceSet};
use crate::model::{AttributeName, CellValue, Column, ColumnKind, Dimension, Hierarchy, ValueKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictPolicy {
    /// The first warehouse's value wins.
    #[default]
    Left,
    Right,
    /// Any contradiction aborts the merge.
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DimensionMergeConfig {
    #[serde(flatten)]
    pub hierarchy: HierarchyConfig,
    pub conflict: ConflictPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// One filled cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Completion {
    pub table: String,
    /// Which warehouse's table received the value; merged tables count as left.
    pub side: Side,
    pub row_key: String,
    pub attribute: AttributeName,
    pub value: String,
    pub donor_key: String,
    pub hierarchy: String,
    /// Another donor offered a different value; the first in key order won.
    pub ambiguous: bool,
}

/// Contradicting non-null values for the same key and attribute.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Conflict {
    pub table: String,
    pub row_key: String,
    pub attribute: AttributeName,
    pub left: String,
    pub right: String,
    pub chosen: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MergedDimensions {
    /// Matched roots: one dimension. `merged` holds the hierarchies produced
    /// by merging, which may coincide with an input hierarchy.
    Single { dimension: Dimension, merged: Vec<Hierarchy> },
    /// Unmatched roots: each input enriched with the other's parameters.
    Pair { left: Dimension, right: Dimension, merged_left: Vec<Hierarchy>, merged_right: Vec<Hierarchy> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionMergeResult {
    pub merged: MergedDimensions,
    pub completions: Vec<Completion>,
    pub conflicts: Vec<Conflict>,
    /// Right-side attribute name to the name it carries on the left side.
    pub aliases: Vec<(AttributeName, AttributeName)>,
    /// Root values present in both inputs (matched roots only).
    pub shared_keys: usize,
}

/// Attribute renaming that brings the right dimension into the left one's
/// vocabulary: corresponding attributes take the left name and unmatched
/// right attributes whose name collides with a left one get a suffix.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    to_left: BTreeMap<AttributeName, AttributeName>,
    to_right: BTreeMap<AttributeName, AttributeName>,
}

impl Vocabulary {
    pub fn new(left: &Dimension, right: &Dimension, corrs: &CorrespondenceSet) -> Self {
        let mut voc = Vocabulary::default();
        let mut taken: BTreeSet<AttributeName> = left.attributes().cloned().collect();
        for r in right.attributes() {
            if let Some(l) = corrs.left_of(r) {
                voc.insert(r.clone(), l.clone());
            }
        }
        taken.extend(right.attributes().filter(|r| !voc.to_left.contains_key(*r)).cloned());
        for r in right.attributes() {
            if voc.to_left.contains_key(r) {
                continue;
            }
            let unified = if left.has_attribute(r) {
                let mut k = 2;
                loop {
                    let candidate = AttributeName::new(format!("{}_{k}", r.raw()));
                    if !taken.contains(&candidate) {
                        taken.insert(candidate.clone());
                        break candidate;
                    }
                    k += 1;
                }
            } else {
                r.clone()
            };
            voc.insert(r.clone(), unified);
        }
        voc
    }

    fn insert(&mut self, right: AttributeName, left: AttributeName) {
        self.to_right.insert(left.clone(), right.clone());
        self.to_left.insert(right, left);
    }

    pub fn unified(&self, right: &AttributeName) -> AttributeName {
        self.to_left.get(right).cloned().unwrap_or_else(|| right.clone())
    }

    pub fn back(&self, unified: &AttributeName) -> AttributeName {
        self.to_right.get(unified).cloned().unwrap_or_else(|| unified.clone())
    }

    /// Pairs whose name actually changes.
    pub fn aliases(&self) -> Vec<(AttributeName, AttributeName)> {
        self.to_left
            .iter()
            .filter(|(r, l)| r.raw() != l.raw())
            .map(|(r, l)| (r.clone(), l.clone()))
            .collect()
    }
}

fn rename_dimension(d: &Dimension, f: impl Fn(&AttributeName) -> AttributeName) -> Dimension {
    Dimension {
        name: d.name.clone(),
        root: f(&d.root),
        columns: d.columns.iter().map(|c| Column { name: f(&c.name), kind: c.kind }).collect(),
        hierarchies: d
            .hierarchies
            .iter()
            .map(|h| Hierarchy::new(h.name.clone(), h.parameters.iter().map(&f).collect()))
            .collect(),
        rows: d.rows.clone(),
    }
}

/// Merges two dimensions sharing at least one attribute correspondence.
pub fn merge_dimensions(
    d1: &Dimension,
    d2: &Dimension,
    corrs: &CorrespondenceSet,
    cfg: &DimensionMergeConfig,
) -> Result<DimensionMergeResult, MergeError> {
    merge_dimensions_with(d1, d2, corrs, cfg, &[], &[])
}

/// As [`merge_dimensions`], where `earlier1` and `earlier2` name hierarchies
/// of the inputs that came out of an earlier merge; they take part in
/// completion like the hierarchies merged here.
pub fn merge_dimensions_with(
    d1: &Dimension,
    d2: &Dimension,
    corrs: &CorrespondenceSet,
    cfg: &DimensionMergeConfig,
    earlier1: &[Hierarchy],
    earlier2: &[Hierarchy],
) -> Result<DimensionMergeResult, MergeError> {
    if corrs.is_empty() {
        return Err(MergeError::Unrelated { left: d1.name.clone(), right: d2.name.clone() });
    }
    let voc = Vocabulary::new(d1, d2, corrs);
    let mut right = rename_dimension(d2, |a| voc.unified(a));
    disambiguate_hierarchy_names(&d1.hierarchies, &mut right.hierarchies);

    let earlier2: Vec<Hierarchy> = earlier2
        .iter()
        .map(|h| Hierarchy::new(h.name.clone(), h.parameters.iter().map(|p| voc.unified(p)).collect()))
        .collect();
    if matched_root_parameters(d1, d2, corrs) {
        merge_matched(d1, &right, &voc, cfg, (earlier1, &earlier2))
    } else {
        merge_unmatched(d1, &right, &voc, cfg, (earlier1, &earlier2))
    }
}

fn disambiguate_hierarchy_names(left: &[Hierarchy], right: &mut [Hierarchy]) {
    let mut taken: BTreeSet<String> = left.iter().chain(right.iter()).map(|h| h.name.clone()).collect();
    for h in right.iter_mut() {
        if left.iter().any(|l| l.name == h.name && l.parameters != h.parameters) {
            let mut k = 2;
            while taken.contains(&format!("{}_{k}", h.name)) {
                k += 1;
            }
            h.name = format!("{}_{k}", h.name);
            taken.insert(h.name.clone());
        }
    }
}

/// Adds `h` unless a hierarchy with the same parameters is present; renames
/// it when its name is taken.
fn add_hierarchy(set: &mut Vec<Hierarchy>, h: &Hierarchy) -> bool {
    if set.iter().any(|o| o.parameters == h.parameters) {
        return false;
    }
    let mut h = h.clone();
    if set.iter().any(|o| o.name == h.name) {
        let base = h.name.clone();
        let mut k = 2;
        while set.iter().any(|o| o.name == format!("{base}_{k}")) {
            k += 1;
        }
        h.name = format!("{base}_{k}");
    }
    set.push(h);
    true
}

/// Adds every hierarchy of `result` to `set` and the produced chains, as
/// named in `set`, to `merged`.
fn absorb(set: &mut Vec<Hierarchy>, merged: &mut Vec<Hierarchy>, result: &[Hierarchy], chains: &[Hierarchy]) {
    for h in result {
        add_hierarchy(set, h);
    }
    for c in chains {
        mark_merged(set, merged, &c.parameters);
    }
}

fn mark_merged(set: &[Hierarchy], merged: &mut Vec<Hierarchy>, params: &[AttributeName]) {
    if merged.iter().any(|m| m.parameters == params) {
        return;
    }
    if let Some(h) = set.iter().find(|h| h.parameters == params) {
        merged.push(h.clone());
    }
}

fn merge_matched(
    d1: &Dimension,
    right: &Dimension,
    voc: &Vocabulary,
    cfg: &DimensionMergeConfig,
    earlier: (&[Hierarchy], &[Hierarchy]),
) -> Result<DimensionMergeResult, MergeError> {
    let mut hierarchies = Vec::new();
    for h in d1.hierarchies.iter().chain(&right.hierarchies) {
        add_hierarchy(&mut hierarchies, h);
    }
    let mut merged = Vec::new();
    for h in earlier.0.iter().chain(earlier.1) {
        mark_merged(&hierarchies, &mut merged, &h.parameters);
    }
    for h1 in &d1.hierarchies {
        for h2 in &right.hierarchies {
            match merge_hierarchies(h1, h2, d1, right, &cfg.hierarchy)? {
                HierarchyMergeResult::Single { hierarchies: set, merged: chains } => {
                    absorb(&mut hierarchies, &mut merged, &set, &chains)
                }
                HierarchyMergeResult::Pair { .. } => {
                    return Err(MergeError::Invariant(format!(
                        "hierarchies {} and {} start from different roots although the dimension roots match",
                        h1.name, h2.name
                    )))
                }
            }
        }
    }

    let columns = union_columns(&d1.columns, &right.columns);
    let (rows, conflicts, shared_keys) = merge_instances(d1, right, &columns, cfg.conflict)?;
    let mut dimension = Dimension { name: d1.name.clone(), root: d1.root.clone(), columns, hierarchies, rows };
    let completions = complete_empty(&mut dimension, None, &merged)?;
    Ok(DimensionMergeResult {
        merged: MergedDimensions::Single { dimension, merged },
        completions,
        conflicts,
        aliases: voc.aliases(),
        shared_keys,
    })
}

fn merge_unmatched(
    d1: &Dimension,
    right: &Dimension,
    voc: &Vocabulary,
    cfg: &DimensionMergeConfig,
    earlier: (&[Hierarchy], &[Hierarchy]),
) -> Result<DimensionMergeResult, MergeError> {
    let mut left_hs = d1.hierarchies.clone();
    let mut right_hs = right.hierarchies.clone();
    let mut merged_left = Vec::new();
    let mut merged_right = Vec::new();
    for h in earlier.0 {
        mark_merged(&left_hs, &mut merged_left, &h.parameters);
    }
    for h in earlier.1 {
        mark_merged(&right_hs, &mut merged_right, &h.parameters);
    }
    for h1 in &d1.hierarchies {
        for h2 in &right.hierarchies {
            match merge_hierarchies(h1, h2, d1, right, &cfg.hierarchy)? {
                HierarchyMergeResult::Pair { left, right: r, merged_left: ml, merged_right: mr } => {
                    absorb(&mut left_hs, &mut merged_left, &left, &ml);
                    absorb(&mut right_hs, &mut merged_right, &r, &mr);
                }
                HierarchyMergeResult::Single { .. } => {
                    return Err(MergeError::Invariant(format!(
                        "hierarchies {} and {} share a root although the dimension roots differ",
                        h1.name, h2.name
                    )))
                }
            }
        }
    }
    let mut left = widen(d1, left_hs, right);
    let mut right_out = widen(right, right_hs, d1);
    let completions = complete_empty(&mut left, Some(&right_out), &merged_left)?;
    let mut right_completions = complete_side(&mut right_out, Some(&left), &merged_right, Side::Right)?;

    // back to the right warehouse's own names
    let back = |h: &Hierarchy| Hierarchy::new(h.name.clone(), h.parameters.iter().map(|p| voc.back(p)).collect());
    let right_named = rename_dimension(&right_out, |a| voc.back(a));
    let merged_right = merged_right.iter().map(back).collect();
    for c in &mut right_completions {
        c.attribute = voc.back(&c.attribute);
    }
    Ok(DimensionMergeResult {
        merged: MergedDimensions::Pair { left, right: right_named, merged_left, merged_right },
        completions: [completions, right_completions].concat(),
        conflicts: Vec::new(),
        aliases: voc.aliases(),
        shared_keys: 0,
    })
}

/// `d` with the given hierarchy set and a null column for every hierarchy
/// parameter it lacks (typed after `other`).
fn widen(d: &Dimension, hierarchies: Vec<Hierarchy>, other: &Dimension) -> Dimension {
    let mut columns = d.columns.clone();
    for p in hierarchies.iter().flat_map(|h| &h.parameters) {
        if !columns.iter().any(|c| &c.name == p) {
            let kind = other.column_index(p).map(|i| other.columns[i].kind).unwrap_or_default();
            columns.push(Column { name: p.clone(), kind });
        }
    }
    let extra = columns.len() - d.columns.len();
    let rows = d
        .rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.extend(std::iter::repeat_n(CellValue::Null, extra));
            r
        })
        .collect();
    Dimension { name: d.name.clone(), root: d.root.clone(), columns, hierarchies, rows }
}

fn union_columns(left: &[Column], right: &[Column]) -> Vec<Column> {
    let mut out = left.to_vec();
    for c in right {
        match out.iter_mut().find(|o| o.name == c.name) {
            Some(o) if o.kind != c.kind => o.kind = ColumnKind::Text,
            Some(_) => {}
            None => out.push(c.clone()),
        }
    }
    out
}

fn coerce(v: &CellValue, kind: ColumnKind) -> CellValue {
    match (v, kind) {
        (CellValue::Number(x), ColumnKind::Text) => CellValue::Text(x.to_string()),
        _ => v.clone(),
    }
}

/// Union of two instance tables keyed by root; rows with the same root value
/// fuse column by column. `right` must already use the unified names.
/// Returns the rows in ascending key order, the conflicts and the number of
/// shared keys.
pub fn merge_instances(
    d1: &Dimension,
    right: &Dimension,
    columns: &[Column],
    policy: ConflictPolicy,
) -> Result<(Vec<Vec<CellValue>>, Vec<Conflict>, usize), MergeError> {
    let place = |d: &Dimension| -> Vec<usize> {
        d.columns
            .iter()
            .map(|c| columns.iter().position(|o| o.name == c.name).expect("unified columns cover both inputs"))
            .collect()
    };
    let pos1 = place(d1);
    let pos2 = place(right);
    let width = columns.len();
    let mut rows: BTreeMap<ValueKey, Vec<CellValue>> = BTreeMap::new();
    for r in &d1.rows {
        let Some(k) = d1.root_key(r) else { continue };
        let mut out = vec![CellValue::Null; width];
        for (i, v) in r.iter().enumerate() {
            out[pos1[i]] = coerce(v, columns[pos1[i]].kind);
        }
        rows.entry(k).or_insert(out);
    }
    let mut conflicts = Vec::new();
    let mut shared = 0;
    for r in &right.rows {
        let Some(k) = right.root_key(r) else { continue };
        match rows.get_mut(&k) {
            Some(out) => {
                shared += 1;
                for (i, v) in r.iter().enumerate() {
                    let v = coerce(v, columns[pos2[i]].kind);
                    let cell = &mut out[pos2[i]];
                    if v.is_null() {
                        continue;
                    }
                    if cell.is_null() {
                        *cell = v;
                    } else if !cell.matches(&v) {
                        let attribute = columns[pos2[i]].name.clone();
                        let chosen = match policy {
                            ConflictPolicy::Left => Side::Left,
                            ConflictPolicy::Right => Side::Right,
                            ConflictPolicy::Error => {
                                return Err(MergeError::Conflict {
                                    table: d1.name.clone(),
                                    key: k.to_string(),
                                    attribute: attribute.raw().to_string(),
                                    left: cell.to_string(),
                                    right: v.to_string(),
                                })
                            }
                        };
                        conflicts.push(Conflict {
                            table: d1.name.clone(),
                            row_key: k.to_string(),
                            attribute,
                            left: cell.to_string(),
                            right: v.to_string(),
                            chosen,
                        });
                        if chosen == Side::Right {
                            *cell = v;
                        }
                    }
                }
            }
            None => {
                let mut out = vec![CellValue::Null; width];
                for (i, v) in r.iter().enumerate() {
                    out[pos2[i]] = coerce(v, columns[pos2[i]].kind);
                }
                rows.insert(k, out);
            }
        }
    }
    Ok((rows.into_values().collect(), conflicts, shared))
}

/// Fills empty cells of `target` along its merged-only hierarchies, taking
/// values from `donor` (or from `target` itself when `donor` is `None`).
/// `merged` lists the hierarchies produced by merging.
///
/// For a hierarchy `H` (processed in name order) a row qualifies when its
/// second parameter is non-null and some parameter of `H` is null. The null
/// parameters are filled together from the first donor row (in root order)
/// that agrees with the row on a non-null parameter below all of them and is
/// non-null on all of them; if no such donor exists the row is left as is.
/// Passes repeat until nothing changes.
pub fn complete_empty(
    target: &mut Dimension,
    donor: Option<&Dimension>,
    merged: &[Hierarchy],
) -> Result<Vec<Completion>, MergeError> {
    complete_side(target, donor, merged, Side::Left)
}

fn complete_side(
    target: &mut Dimension,
    donor: Option<&Dimension>,
    merged: &[Hierarchy],
    side: Side,
) -> Result<Vec<Completion>, MergeError> {
    let mut order: Vec<&Hierarchy> = merged.iter().collect();
    order.sort_by(|a, b| a.name.cmp(&b.name));
    let mut log = Vec::new();
    loop {
        let before = log.len();
        for h in &order {
            let snapshot;
            let donor_dim = match donor {
                Some(d) => d,
                None => {
                    snapshot = target.clone();
                    &snapshot
                }
            };
            let fills = fills_for(target, donor_dim, h, side)?;
            for f in fills {
                target.rows[f.row][f.column] = f.value.clone();
                log.push(f.completion);
            }
        }
        if log.len() == before {
            return Ok(log);
        }
    }
}

struct Fill {
    row: usize,
    column: usize,
    value: CellValue,
    completion: Completion,
}

fn fills_for(target: &Dimension, donor: &Dimension, h: &Hierarchy, side: Side) -> Result<Vec<Fill>, MergeError> {
    if h.parameters.len() < 2 {
        return Ok(Vec::new());
    }
    let tcols: Vec<usize> = h
        .parameters
        .iter()
        .map(|p| {
            target.column_index(p).ok_or_else(|| crate::model::ModelError::UnknownParameter {
                dimension: target.name.clone(),
                hierarchy: h.name.clone(),
                parameter: p.raw().to_string(),
            })
        })
        .collect::<Result<_, _>>()?;
    let dcols: Vec<Option<usize>> = h.parameters.iter().map(|p| donor.column_index(p)).collect();

    let droot = donor.root_index();
    let mut donor_order: Vec<usize> = (0..donor.rows.len()).collect();
    donor_order.sort_by(|&a, &b| donor.rows[a][droot].key().cmp(&donor.rows[b][droot].key()));
    let mut index: Vec<Option<HashMap<ValueKey, Vec<usize>>>> = vec![None; h.parameters.len()];

    let troot = target.root_index();
    let mut targets: Vec<usize> = (0..target.rows.len()).collect();
    targets.sort_by(|&a, &b| target.rows[a][troot].key().cmp(&target.rows[b][troot].key()));

    let mut out = Vec::new();
    for t in targets {
        let row = &target.rows[t];
        if row[tcols[1]].is_null() {
            continue;
        }
        let nulls: Vec<usize> = (0..tcols.len()).filter(|&k| row[tcols[k]].is_null()).collect();
        let Some(&lowest_null) = nulls.first() else { continue };
        if nulls.iter().any(|&k| dcols[k].is_none()) {
            continue;
        }
        let refs: Vec<usize> = (0..lowest_null).filter(|&k| dcols[k].is_some()).collect();
        let mut candidates: BTreeSet<(Option<ValueKey>, usize)> = BTreeSet::new();
        for &k in &refs {
            let Some(v) = row[tcols[k]].key() else { continue };
            let idx = index[k].get_or_insert_with(|| {
                let c = dcols[k].expect("filtered above");
                let mut m: HashMap<ValueKey, Vec<usize>> = HashMap::new();
                for &r in &donor_order {
                    if let Some(key) = donor.rows[r][c].key() {
                        m.entry(key).or_default().push(r);
                    }
                }
                m
            });
            for &r in idx.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
                let dr = &donor.rows[r];
                if nulls.iter().all(|&n| !dr[dcols[n].expect("checked")].is_null()) {
                    candidates.insert((dr[droot].key(), r));
                }
            }
        }
        let mut iter = candidates.iter();
        let Some(&(ref donor_key, chosen)) = iter.next() else { continue };
        let values: Vec<&CellValue> = nulls.iter().map(|&n| &donor.rows[chosen][dcols[n].expect("checked")]).collect();
        let ambiguous = iter.any(|&(_, r)| {
            nulls.iter().zip(&values).any(|(&n, v)| !donor.rows[r][dcols[n].expect("checked")].matches(v))
        });
        let row_key = row[troot].key().map(|k| k.to_string()).unwrap_or_default();
        let donor_key = donor_key.as_ref().map(ToString::to_string).unwrap_or_default();
        if ambiguous {
            warn!("{}: donors disagree for row {row_key} on {}; using {donor_key}", target.name, h.name);
        }
        for (&n, v) in nulls.iter().zip(values) {
            let column = tcols[n];
            let value = coerce(v, target.columns[column].kind);
            debug!("{}: {row_key}.{} <- {} from {donor_key}", target.name, h.parameters[n], value);
            out.push(Fill {
                row: t,
                column,
                value: value.clone(),
                completion: Completion {
                    table: target.name.clone(),
                    side,
                    row_key: row_key.clone(),
                    attribute: target.columns[column].name.clone(),
                    value: value.to_string(),
                    donor_key: donor_key.clone(),
                    hierarchy: h.name.clone(),
                    ambiguous,
                },
            });
        }
    }
    Ok(out)
}

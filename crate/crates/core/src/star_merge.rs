//! Merging of two stars: cross-dimension enrichment, merging of dimensions
//! with corresponding roots, hierarchy pruning and fact merging.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use log::{debug, info};
use serde::Serialize;

use crate::dimension_merge::{
    merge_dimensions_with, Completion, Conflict, ConflictPolicy, DimensionMergeConfig, MergedDimensions, Side,
};
use crate::error::MergeError;
use crate::matching::{match_attributes, match_schemas, matched_root_parameters, CorrespondenceSet, MatcherConfig};
use crate::model::{
    conforms, AttributeName, CellValue, Column, Constellation, Dimension, DimensionKey, Fact, Hierarchy, Schema,
    StarSchema, ValueKey,
};
use crate::report::{
    AttributeCounts, DimensionPair, MergeReport, OutputKind, PairRole, PruneReason, PrunedHierarchy, TableCounts,
    FORMAT_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MergeConfig {
    pub matcher: MatcherConfig,
    #[serde(flatten)]
    pub dimension: DimensionMergeConfig,
    pub prune: bool,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self { matcher: MatcherConfig::default(), dimension: DimensionMergeConfig::default(), prune: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarMergeResult {
    pub schema: Schema,
    pub report: MergeReport,
    pub pruned: Vec<PrunedHierarchy>,
}

/// Removes hierarchies without any conforming row, and non-merged
/// hierarchies whose conforming rows all conform to some merged hierarchy
/// covering their parameters. A dimension never loses its last hierarchy.
pub fn prune_hierarchies(d: &mut Dimension, merged: &[Hierarchy]) -> Result<Vec<PrunedHierarchy>, MergeError> {
    let is_merged = |h: &Hierarchy| merged.iter().any(|m| m.parameters == h.parameters);
    let conforming: Vec<Vec<bool>> = d
        .hierarchies
        .iter()
        .map(|h| d.rows.iter().map(|r| conforms(d, r, h)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let n = d.hierarchies.len();
    let mut reason: Vec<Option<PruneReason>> = (0..n)
        .map(|i| (!conforming[i].iter().any(|c| *c)).then_some(PruneReason::NoConformingInstance))
        .collect();
    if reason.iter().all(Option::is_some) {
        for (i, h) in d.hierarchies.iter().enumerate() {
            if !is_merged(h) {
                reason[i] = None;
            }
        }
    }
    for i in 0..n {
        let h = &d.hierarchies[i];
        if reason[i].is_some() || is_merged(h) {
            continue;
        }
        let supersets: Vec<usize> = (0..n)
            .filter(|&j| {
                let m = &d.hierarchies[j];
                j != i && reason[j].is_none() && is_merged(m) && h.parameters.iter().all(|p| m.contains(p))
            })
            .collect();
        let subsumed = conforming[i]
            .iter()
            .enumerate()
            .filter(|(_, c)| **c)
            .all(|(r, _)| supersets.iter().any(|&j| conforming[j][r]));
        if !supersets.is_empty() && subsumed {
            reason[i] = Some(PruneReason::SubsumedByMerged);
        }
    }
    let mut pruned = Vec::new();
    let mut kept = Vec::new();
    for (h, r) in d.hierarchies.drain(..).zip(reason) {
        match r {
            Some(reason) => {
                debug!("{}: pruning {} ({reason:?})", d.name, h);
                pruned.push(PrunedHierarchy {
                    dimension: d.name.clone(),
                    hierarchy: h.name.clone(),
                    parameters: h.parameters.clone(),
                    reason,
                });
            }
            None => kept.push(h),
        }
    }
    d.hierarchies = kept;
    Ok(pruned)
}

/// Union of two fact tables whose key columns have been aligned: `key_map[k]`
/// is the position in `f2.keys` of the key stored at `f1.keys[k]`. Rows with
/// equal key tuples fuse; matched measures share the left column.
pub fn merge_facts(
    f1: &Fact,
    f2: &Fact,
    key_map: &[usize],
    measure_corrs: &CorrespondenceSet,
    policy: ConflictPolicy,
) -> Result<(Fact, Vec<Conflict>, usize), MergeError> {
    if key_map.len() != f1.keys.len() || key_map.len() != f2.keys.len() {
        return Err(MergeError::KeyAlignment(format!(
            "{} has keys [{}] but {} has [{}]",
            f1.name,
            key_columns(f1),
            f2.name,
            key_columns(f2)
        )));
    }
    let nk = f1.keys.len();
    let mut measures = f1.measures.clone();
    let mut place2 = Vec::new();
    for m in &f2.measures {
        let target = match measure_corrs.left_of(&m.name) {
            Some(l) => f1.measures.iter().position(|x| &x.name == l),
            None => None,
        };
        let pos = match target {
            Some(p) => p,
            None => {
                let mut name = m.name.clone();
                let mut k = 2;
                while measures.iter().any(|x| x.name == name) {
                    name = AttributeName::new(format!("{}_{k}", m.name.raw()));
                    k += 1;
                }
                measures.push(Column { name, kind: m.kind });
                measures.len() - 1
            }
        };
        place2.push(nk + pos);
    }
    let width = nk + measures.len();
    let mut rows: BTreeMap<Vec<ValueKey>, Vec<CellValue>> = BTreeMap::new();
    for r in &f1.rows {
        let key = f1.key_tuple(r).ok_or_else(|| MergeError::Invariant(format!("null key in {}", f1.name)))?;
        let mut out = r.clone();
        out.resize(width, CellValue::Null);
        rows.insert(key, out);
    }
    let mut conflicts = Vec::new();
    let mut shared = 0;
    for r in &f2.rows {
        let aligned: Vec<CellValue> = key_map.iter().map(|&k| r[k].clone()).collect();
        let key: Vec<ValueKey> = aligned
            .iter()
            .map(CellValue::key)
            .collect::<Option<_>>()
            .ok_or_else(|| MergeError::Invariant(format!("null key in {}", f2.name)))?;
        let row_key = key.iter().map(ToString::to_string).collect::<Vec<_>>().join("|");
        match rows.get_mut(&key) {
            Some(out) => {
                shared += 1;
                for (i, &p) in place2.iter().enumerate() {
                    let v = &r[nk + i];
                    if v.is_null() {
                        continue;
                    }
                    if out[p].is_null() {
                        out[p] = v.clone();
                    } else if !out[p].matches(v) {
                        let attribute = measures[p - nk].name.clone();
                        let chosen = match policy {
                            ConflictPolicy::Left => Side::Left,
                            ConflictPolicy::Right => Side::Right,
                            ConflictPolicy::Error => {
                                return Err(MergeError::Conflict {
                                    table: f1.name.clone(),
                                    key: row_key,
                                    attribute: attribute.raw().to_string(),
                                    left: out[p].to_string(),
                                    right: v.to_string(),
                                })
                            }
                        };
                        conflicts.push(Conflict {
                            table: f1.name.clone(),
                            row_key: row_key.clone(),
                            attribute,
                            left: out[p].to_string(),
                            right: v.to_string(),
                            chosen,
                        });
                        if chosen == Side::Right {
                            out[p] = v.clone();
                        }
                    }
                }
            }
            None => {
                let mut out = aligned;
                out.resize(width, CellValue::Null);
                for (i, &p) in place2.iter().enumerate() {
                    out[p] = r[nk + i].clone();
                }
                rows.insert(key, out);
            }
        }
    }
    let fact = Fact { name: f1.name.clone(), keys: f1.keys.clone(), measures, rows: rows.into_values().collect() };
    Ok((fact, conflicts, shared))
}

fn key_columns(f: &Fact) -> String {
    f.keys.iter().map(|k| format!("{}.{}", k.dimension, k.column)).collect::<Vec<_>>().join(", ")
}

/// Where the cells of an output dimension come from.
struct Lineage<'a> {
    left: Option<&'a Dimension>,
    /// Right input dimension and the output name of each of its attributes.
    right: Option<(&'a Dimension, BTreeMap<AttributeName, AttributeName>)>,
    /// Filled cells as (row key, output attribute name).
    fills: BTreeSet<(String, AttributeName)>,
}

fn non_null_keys(d: &Dimension, attr: &AttributeName) -> HashSet<String> {
    let Some(c) = d.column_index(attr) else { return HashSet::new() };
    d.rows
        .iter()
        .filter(|r| !r[c].is_null())
        .filter_map(|r| d.root_key(r))
        .map(|k| k.to_string())
        .collect()
}

fn attribute_counts(out: &Dimension, lineage: &Lineage) -> Vec<AttributeCounts> {
    let mut counts = Vec::new();
    for a in out.attributes() {
        let left = lineage.left.map(|d| non_null_keys(d, a)).unwrap_or_default();
        let right = match &lineage.right {
            Some((d, names)) => match names.iter().find(|(_, o)| *o == a) {
                Some((r, _)) => non_null_keys(d, r),
                None => HashSet::new(),
            },
            None => HashSet::new(),
        };
        let n_plus = lineage
            .fills
            .iter()
            .filter(|(k, attr)| attr == a && !left.contains(k) && !right.contains(k))
            .count();
        counts.push(AttributeCounts {
            table: out.name.clone(),
            attribute: a.clone(),
            n1: left.len(),
            n2: right.len(),
            n_shared: left.intersection(&right).count(),
            n_plus,
            n_merged: out.non_null_count(a),
        });
    }
    counts
}

/// Hierarchies of `result` not among `inputs`, compared by parameters.
fn new_hierarchies(result: &[Hierarchy], inputs: &[Hierarchy]) -> Vec<Hierarchy> {
    result.iter().filter(|h| !inputs.iter().any(|o| o.parameters == h.parameters)).cloned().collect()
}

pub fn merge_stars(s1: &StarSchema, s2: &StarSchema, cfg: &MergeConfig) -> Result<StarMergeResult, MergeError> {
    // validates the user map against both schemas
    let matches = match_schemas(s1, s2, &cfg.matcher)?;
    let mut w1 = s1.dimensions.clone();
    let mut w2 = s2.dimensions.clone();
    let mut earlier1: Vec<Vec<Hierarchy>> = vec![Vec::new(); w1.len()];
    let mut earlier2: Vec<Vec<Hierarchy>> = vec![Vec::new(); w2.len()];
    let mut fills1: Vec<Vec<Completion>> = vec![Vec::new(); w1.len()];
    let mut fills2: Vec<Vec<Completion>> = vec![Vec::new(); w2.len()];
    let mut pairs_report = Vec::new();

    for i in 0..w1.len() {
        for j in 0..w2.len() {
            let corrs = match_attributes(&w1[i], &w2[j], &cfg.matcher)?;
            if corrs.is_empty() || matched_root_parameters(&w1[i], &w2[j], &corrs) {
                continue;
            }
            info!("enriching {} and {} through {} correspondences", w1[i].name, w2[j].name, corrs.len());
            let res = merge_dimensions_with(&w1[i], &w2[j], &corrs, &cfg.dimension, &earlier1[i], &earlier2[j])?;
            let MergedDimensions::Pair { left, right, merged_left, merged_right } = res.merged else {
                return Err(MergeError::Invariant(format!("{} and {} merged into one", w1[i].name, w2[j].name)));
            };
            earlier1[i] = new_hierarchies(&merged_left, &s1.dimensions[i].hierarchies);
            earlier2[j] = new_hierarchies(&merged_right, &s2.dimensions[j].hierarchies);
            for c in res.completions {
                match c.side {
                    Side::Left => fills1[i].push(c),
                    Side::Right => fills2[j].push(c),
                }
            }
            pairs_report.push(DimensionPair {
                left: w1[i].name.clone(),
                right: w2[j].name.clone(),
                role: PairRole::Enriched,
                correspondences: corrs.iter().cloned().collect(),
                aliases: res.aliases,
            });
            w1[i] = left;
            w2[j] = right;
        }
    }

    // pairing of dimensions with corresponding roots
    let mut candidates = Vec::new();
    for i in 0..w1.len() {
        for j in 0..w2.len() {
            let corrs = match_attributes(&w1[i], &w2[j], &cfg.matcher)?;
            if matched_root_parameters(&w1[i], &w2[j], &corrs) {
                candidates.push((Reverse(corrs.len()), w1[i].name.clone(), w2[j].name.clone(), i, j, corrs));
            }
        }
    }
    candidates.sort_by(|a, b| (&a.0, &a.1, &a.2).cmp(&(&b.0, &b.1, &b.2)));
    let mut partner1: Vec<Option<(usize, CorrespondenceSet)>> = vec![None; w1.len()];
    let mut taken2 = vec![false; w2.len()];
    for (_, _, _, i, j, corrs) in candidates {
        if partner1[i].is_none() && !taken2[j] {
            partner1[i] = Some((j, corrs));
            taken2[j] = true;
        }
    }
    if partner1.iter().all(Option::is_none) {
        return Err(MergeError::Unmergeable(format!(
            "no dimension of {} has a root corresponding to a dimension root of {}",
            s1.name, s2.name
        )));
    }

    let mut dimensions = Vec::new();
    let mut lineages = Vec::new();
    let mut tables = Vec::new();
    let mut conflicts = Vec::new();
    let mut pruned = Vec::new();
    let mut matched_fills = Vec::new();
    let mut name_map2: BTreeMap<String, String> = BTreeMap::new();
    for i in 0..w1.len() {
        let Some((j, corrs)) = &partner1[i] else {
            lineages.push(Lineage {
                left: Some(&s1.dimensions[i]),
                right: None,
                fills: fills1[i].iter().map(|c| (c.row_key.clone(), c.attribute.clone())).collect(),
            });
            dimensions.push(w1[i].clone());
            continue;
        };
        let j = *j;
        info!("merging {} with {}", w1[i].name, w2[j].name);
        let res = merge_dimensions_with(&w1[i], &w2[j], corrs, &cfg.dimension, &earlier1[i], &earlier2[j])?;
        let MergedDimensions::Single { mut dimension, merged } = res.merged else {
            return Err(MergeError::Invariant(format!("{} and {} did not merge", w1[i].name, w2[j].name)));
        };
        if cfg.prune {
            pruned.extend(prune_hierarchies(&mut dimension, &merged)?);
        }
        tables.push(TableCounts {
            table: dimension.name.clone(),
            n1: w1[i].rows.len(),
            n2: w2[j].rows.len(),
            n_shared: res.shared_keys,
            n_merged: dimension.rows.len(),
        });
        let alias: BTreeMap<&AttributeName, &AttributeName> = res.aliases.iter().map(|(r, l)| (r, l)).collect();
        let output_name = |r: &AttributeName| alias.get(r).map(|l| (*l).clone()).unwrap_or_else(|| r.clone());
        let right_names = w2[j].attributes().map(|r| (r.clone(), output_name(r))).collect();
        let mut fills: BTreeSet<(String, AttributeName)> =
            fills1[i].iter().map(|c| (c.row_key.clone(), c.attribute.clone())).collect();
        fills.extend(fills2[j].iter().map(|c| (c.row_key.clone(), output_name(&c.attribute))));
        fills.extend(res.completions.iter().map(|c| (c.row_key.clone(), c.attribute.clone())));
        lineages.push(Lineage { left: Some(&s1.dimensions[i]), right: Some((&s2.dimensions[j], right_names)), fills });
        conflicts.extend(res.conflicts);
        matched_fills.extend(res.completions);
        pairs_report.push(DimensionPair {
            left: w1[i].name.clone(),
            right: w2[j].name.clone(),
            role: PairRole::Merged,
            correspondences: corrs.iter().cloned().collect(),
            aliases: res.aliases,
        });
        name_map2.insert(w2[j].name.clone(), dimension.name.clone());
        dimensions.push(dimension);
    }
    for j in (0..w2.len()).filter(|&j| !taken2[j]) {
        let mut d = w2[j].clone();
        let mut k = 2;
        while dimensions.iter().any(|o: &Dimension| o.name == d.name) {
            d.name = format!("{}_{k}", w2[j].name);
            k += 1;
        }
        for c in &mut fills2[j] {
            c.table = d.name.clone();
        }
        let identity = d.attributes().map(|a| (a.clone(), a.clone())).collect();
        lineages.push(Lineage {
            left: None,
            right: Some((&s2.dimensions[j], identity)),
            fills: fills2[j].iter().map(|c| (c.row_key.clone(), c.attribute.clone())).collect(),
        });
        name_map2.insert(w2[j].name.clone(), d.name.clone());
        dimensions.push(d);
    }

    let is_star = s1.dimensions.len() == s2.dimensions.len() && partner1.iter().all(Option::is_some);
    let name = format!("{}_{}", s1.name, s2.name);
    let renamed_keys = |f: &Fact| -> Vec<DimensionKey> {
        f.keys
            .iter()
            .map(|k| DimensionKey {
                dimension: name_map2.get(&k.dimension).cloned().unwrap_or_else(|| k.dimension.clone()),
                column: k.column.clone(),
            })
            .collect()
    };
    let schema = if is_star {
        let keys2 = renamed_keys(&s2.fact);
        let key_map = s1
            .fact
            .keys
            .iter()
            .map(|k| {
                keys2.iter().position(|k2| k2.dimension == k.dimension).ok_or_else(|| {
                    MergeError::KeyAlignment(format!(
                        "{}.{} has no counterpart among [{}]",
                        s1.fact.name,
                        k.column,
                        key_columns(&s2.fact)
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (fact, fact_conflicts, shared) =
            merge_facts(&s1.fact, &s2.fact, &key_map, &matches.measures, cfg.dimension.conflict)?;
        tables.push(TableCounts {
            table: fact.name.clone(),
            n1: s1.fact.rows.len(),
            n2: s2.fact.rows.len(),
            n_shared: shared,
            n_merged: fact.rows.len(),
        });
        conflicts.extend(fact_conflicts);
        Schema::Star(StarSchema { name: name.clone(), fact, dimensions })
    } else {
        let f1 = s1.fact.clone();
        let mut f2 = s2.fact.clone();
        f2.keys = renamed_keys(&s2.fact);
        if f2.name == f1.name {
            f2.name = format!("{}_2", f2.name);
        }
        let star = [&f1, &f2]
            .iter()
            .map(|f| (f.name.clone(), f.keys.iter().map(|k| k.dimension.clone()).collect()))
            .collect();
        Schema::Constellation(Constellation { name: name.clone(), facts: vec![f1, f2], dimensions, star })
    };
    check_references(&schema)?;

    let mut completed_attributes = Vec::new();
    let mut law_failures = Vec::new();
    for (d, lineage) in schema.dimensions().iter().zip(&lineages) {
        for c in attribute_counts(d, lineage) {
            if !c.holds() {
                law_failures.push(format!("{}.{}", c.table, c.attribute));
            }
            if c.n_plus > 0 {
                completed_attributes.push(c);
            }
        }
    }
    let all_fills: Vec<&Completion> = fills1.iter().chain(&fills2).flatten().chain(&matched_fills).collect();
    let mut config = match serde_json::to_value(cfg) {
        Ok(serde_json::Value::Object(m)) => m,
        _ => serde_json::Map::new(),
    };
    config.insert("userMap".into(), serde_json::Value::Bool(cfg.matcher.user_map.is_some()));
    let report = MergeReport {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        output: if is_star { OutputKind::Star } else { OutputKind::Constellation },
        name,
        dimension_pairs: pairs_report,
        measure_correspondences: if is_star { matches.measures.iter().cloned().collect() } else { Vec::new() },
        tables,
        completed_attributes,
        filled_cells: all_fills.len(),
        ambiguous_fills: all_fills.iter().filter(|c| c.ambiguous).map(|c| (*c).clone()).collect(),
        conflicts,
        pruned_hierarchies: pruned.clone(),
    };
    law_failures.extend(report.law_violations());
    if !law_failures.is_empty() {
        return Err(MergeError::Invariant(format!("count laws violated: {}", law_failures.join("; "))));
    }
    Ok(StarMergeResult { schema, report, pruned })
}

/// Every fact key value must exist as a root value of its dimension.
fn check_references(schema: &Schema) -> Result<(), MergeError> {
    for f in schema.facts() {
        for (k, key) in f.keys.iter().enumerate() {
            let d = schema
                .dimensions()
                .iter()
                .find(|d| d.name == key.dimension)
                .ok_or_else(|| MergeError::Invariant(format!("{} references missing dimension {}", f.name, key.dimension)))?;
            let roots: HashSet<ValueKey> = d.rows.iter().filter_map(|r| d.root_key(r)).collect();
            if let Some(r) = f.rows.iter().find(|r| r[k].key().is_none_or(|v| !roots.contains(&v))) {
                return Err(MergeError::Invariant(format!(
                    "{} row references {}={} missing from {}",
                    f.name, key.column, r[k], d.name
                )));
            }
        }
    }
    Ok(())
}

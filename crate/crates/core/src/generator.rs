//! Seeded generation of warehouse pairs with known overlap and hierarchy
//! structure.
//!
//! Every dimension is drawn from a "world" table whose levels form a chain:
//! the value of level `k` for world row `r` is `idx_k = idx_{k-1} / fanout_k`
//! with `idx_0 = r`, so each level determines the next. Each warehouse keeps
//! a sample of the world keys and exposes the levels its hierarchies use.
//! Level values are readable tokens such as `nation_0003`; a level name used
//! by several dimensions (with the same fan-out from the same parent level)
//! maps values identically everywhere.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::io::{write_dw, IoError};
use crate::model::{
    AttributeName, CellValue, Column, Dimension, DimensionKey, Fact, Hierarchy, Schema, StarSchema, ValueKey,
};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("dimension `{0}` must have at least one row")]
    EmptyDimension(String),
    #[error("overlap of `{dimension}` must lie in [0, 1], got {overlap}")]
    InvalidOverlap { dimension: String, overlap: String },
    #[error("level `{level}` of `{dimension}` has fan-out 0")]
    ZeroFanout { dimension: String, level: String },
    #[error("level `{level}` of `{dimension}`: fan-out {fanout} exceeds the {parent_values} values below it")]
    FanoutTooLarge { dimension: String, level: String, fanout: usize, parent_values: usize },
    #[error("hierarchy {hierarchy:?} of `{dimension}` is not a root-first subsequence of the level chain")]
    NotAChain { dimension: String, hierarchy: Vec<String> },
    #[error("`{0}` is in neither warehouse")]
    UnusedDimension(String),
    #[error("{requested} fact rows requested but only {possible} distinct key tuples exist")]
    TooManyFactRows { requested: usize, possible: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Level {
    pub name: String,
    pub fanout: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DimensionSpec {
    pub name: String,
    pub root: String,
    /// Number of world rows.
    pub rows: usize,
    /// Levels above the root, finest first.
    pub levels: Vec<Level>,
    /// Fraction of world keys each warehouse keeps. Zero splits the keys
    /// into two disjoint halves.
    pub overlap: f64,
    /// Hierarchies (root first) of the first warehouse; `None` leaves the
    /// dimension out of it.
    pub left: Option<Vec<Vec<String>>>,
    pub right: Option<Vec<Vec<String>>>,
}

impl DimensionSpec {
    fn chain(&self) -> Vec<&str> {
        std::iter::once(self.root.as_str()).chain(self.levels.iter().map(|l| l.name.as_str())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GenSpec {
    pub seed: u64,
    pub names: (String, String),
    pub fact: String,
    pub fact_rows: usize,
    pub dimensions: Vec<DimensionSpec>,
    pub left_measures: Vec<String>,
    pub right_measures: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Four dimensions present in both warehouses.
    Exp1,
    /// Two shared dimensions and one own dimension per warehouse.
    Exp2,
    /// A customer dimension whose hierarchies split one chain, plus a plain
    /// product dimension.
    Customer,
}

fn fanout_for(parent_values: usize, target_values: usize) -> usize {
    parent_values.div_ceil(target_values.max(1)).max(1)
}

fn levels(root_rows: usize, spec: &[(&str, usize)]) -> Vec<Level> {
    // fan-outs are clamped so that every level keeps at least one value
    let mut parent = root_rows;
    spec.iter()
        .map(|(name, fanout)| {
            let fanout = (*fanout).clamp(1, parent.max(1));
            parent = parent.div_ceil(fanout);
            Level { name: (*name).to_string(), fanout }
        })
        .collect()
}

fn hs(raw: &[&[&str]]) -> Option<Vec<Vec<String>>> {
    Some(raw.iter().map(|h| h.iter().map(|p| (*p).to_string()).collect()).collect())
}

impl GenSpec {
    pub fn shape(shape: Shape, seed: u64, dim_rows: usize, overlap: f64, fact_rows: usize) -> Self {
        let n = dim_rows.max(1);
        // nations are shared between customers and suppliers
        let nations = 25;
        let cities = n.div_ceil(4).max(1);
        let customer_geo = || {
            levels(n, &[("City", 4), ("Nation", fanout_for(cities, nations)), ("Region", 5)])
        };
        let supplier_geo = || levels(n, &[("Nation", fanout_for(n, nations)), ("Region", 5)]);
        let dim = |name: &str, root: &str, levels: Vec<Level>, left, right| DimensionSpec {
            name: name.into(),
            root: root.into(),
            rows: n,
            levels,
            overlap,
            left,
            right,
        };
        let (dimensions, names, fact) = match shape {
            Shape::Exp1 | Shape::Exp2 => {
                // Inside one warehouse, dimensions sharing a level carry the
                // same levels above it, so a warehouse merged with itself
                // gains nothing. Region reaches the second warehouse's rows
                // only across warehouses.
                let customer = dim(
                    "Customer",
                    "Custkey",
                    customer_geo(),
                    hs(&[&["Custkey", "City", "Nation", "Region"]]),
                    hs(&[&["Custkey", "Nation"]]),
                );
                let supplier = dim(
                    "Supplier",
                    "Suppkey",
                    supplier_geo(),
                    hs(&[&["Suppkey", "Nation", "Region"]]),
                    hs(&[&["Suppkey", "Nation"]]),
                );
                let part_levels = levels(n, &[("Brand", 5), ("Category", 5), ("Mfgr", 5)]);
                let date_levels = levels(n, &[("Month", 30), ("Semester", 6), ("Year", 2)]);
                let dims = if shape == Shape::Exp1 {
                    vec![
                        customer,
                        supplier,
                        dim(
                            "Part",
                            "Partkey",
                            part_levels,
                            hs(&[&["Partkey", "Brand", "Mfgr"]]),
                            hs(&[&["Partkey", "Category", "Mfgr"]]),
                        ),
                        dim(
                            "Date",
                            "Orderdate",
                            date_levels,
                            hs(&[&["Orderdate", "Month", "Semester", "Year"]]),
                            hs(&[&["Orderdate", "Month", "Year"]]),
                        ),
                    ]
                } else {
                    vec![
                        customer,
                        supplier,
                        dim("Part", "Partkey", part_levels, hs(&[&["Partkey", "Brand", "Category", "Mfgr"]]), None),
                        dim("Date", "Orderdate", date_levels, None, hs(&[&["Orderdate", "Month", "Year"]])),
                    ]
                };
                (dims, ("S1".to_string(), "S2".to_string()), "Lineorder")
            }
            Shape::Customer => {
                let chain = levels(
                    n,
                    &[("City", 2), ("Department", 3), ("Region", 4), ("Country", 3), ("Continent", 2)],
                );
                let customer = dim(
                    "Customer",
                    "Code",
                    chain,
                    hs(&[&["Code", "Department", "Region", "Continent"]]),
                    hs(&[&["Code", "City", "Department", "Country", "Continent"]]),
                );
                let product = dim(
                    "Product",
                    "Prodkey",
                    levels(n, &[("Category", 10)]),
                    hs(&[&["Prodkey", "Category"]]),
                    hs(&[&["Prodkey", "Category"]]),
                );
                (vec![customer, product], ("DW1".to_string(), "DW2".to_string()), "Sales")
            }
        };
        let measures = |ms: &[&str]| ms.iter().map(|m| (*m).to_string()).collect();
        GenSpec {
            seed,
            names,
            fact: fact.into(),
            fact_rows,
            dimensions,
            left_measures: measures(&["Quantity", "Revenue"]),
            right_measures: measures(&["Quantity", "Revenue", "Supplycost"]),
        }
    }

    fn check(&self) -> Result<(), GenError> {
        let mut possible: usize = 1;
        for d in &self.dimensions {
            if d.rows == 0 {
                return Err(GenError::EmptyDimension(d.name.clone()));
            }
            if !(0.0..=1.0).contains(&d.overlap) {
                return Err(GenError::InvalidOverlap { dimension: d.name.clone(), overlap: d.overlap.to_string() });
            }
            if d.left.is_none() && d.right.is_none() {
                return Err(GenError::UnusedDimension(d.name.clone()));
            }
            let mut parent = d.rows;
            for l in &d.levels {
                if l.fanout == 0 {
                    return Err(GenError::ZeroFanout { dimension: d.name.clone(), level: l.name.clone() });
                }
                if l.fanout > parent {
                    return Err(GenError::FanoutTooLarge {
                        dimension: d.name.clone(),
                        level: l.name.clone(),
                        fanout: l.fanout,
                        parent_values: parent,
                    });
                }
                parent = parent.div_ceil(l.fanout);
            }
            let chain = d.chain();
            for h in d.left.iter().chain(&d.right).flatten() {
                let positions: Option<Vec<usize>> =
                    h.iter().map(|p| chain.iter().position(|c| c == p)).collect();
                let ok = match positions {
                    Some(pos) => pos.first() == Some(&0) && pos.windows(2).all(|w| w[0] < w[1]),
                    None => false,
                };
                if !ok {
                    return Err(GenError::NotAChain { dimension: d.name.clone(), hierarchy: h.clone() });
                }
            }
            possible = possible.saturating_mul(d.rows);
        }
        if self.fact_rows > possible {
            return Err(GenError::TooManyFactRows { requested: self.fact_rows, possible });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TableTruth {
    pub table: String,
    pub rows1: Option<usize>,
    pub rows2: Option<usize>,
    /// Keys (or key tuples) present in both warehouses; absent when the
    /// table is not comparable across them.
    pub shared: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DimensionTruth {
    pub name: String,
    /// World level chain, root first.
    pub chain: Vec<String>,
    /// Each level determines the next.
    pub expected_fd_edges: Vec<(String, String)>,
    /// Per attribute of either side: cells of the key union that neither
    /// warehouse fills, an upper bound on what completion can add.
    pub union_null_cells: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub spec: GenSpec,
    pub tables: Vec<TableTruth>,
    pub dimensions: Vec<DimensionTruth>,
}

impl Manifest {
    pub fn table(&self, name: &str) -> Option<&TableTruth> {
        self.tables.iter().find(|t| t.table == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPair {
    pub left: StarSchema,
    pub right: StarSchema,
    pub manifest: Manifest,
}

fn token(level: &str, idx: usize) -> String {
    format!("{}_{idx:04}", level.to_lowercase())
}

/// World level indices of row `r`, root first.
fn world_indices(d: &DimensionSpec, r: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(d.levels.len() + 1);
    let mut idx = r;
    out.push(idx);
    for l in &d.levels {
        idx /= l.fanout;
        out.push(idx);
    }
    out
}

fn sample_keys(rng: &mut ChaCha8Rng, d: &DimensionSpec) -> (Vec<usize>, Vec<usize>) {
    let n = d.rows;
    if d.overlap == 0.0 {
        let mut perm: Vec<usize> = sample(rng, n, n).into_vec();
        let right = perm.split_off(n / 2);
        let mut left = perm;
        left.sort_unstable();
        let mut right = right;
        right.sort_unstable();
        return (left, right);
    }
    let k = ((d.overlap * n as f64).round() as usize).clamp(1, n);
    let mut left = sample(rng, n, k).into_vec();
    let mut right = sample(rng, n, k).into_vec();
    left.sort_unstable();
    right.sort_unstable();
    (left, right)
}

fn build_dimension(d: &DimensionSpec, hierarchies: &[Vec<String>], keys: &[usize], first_h: usize) -> Dimension {
    let chain = d.chain();
    let used: BTreeSet<usize> =
        hierarchies.iter().flatten().filter_map(|p| chain.iter().position(|c| c == p)).collect();
    let columns: Vec<Column> = used.iter().map(|&i| Column::text(chain[i])).collect();
    let rows = keys
        .iter()
        .map(|&r| {
            let idx = world_indices(d, r);
            used.iter().map(|&i| CellValue::Text(token(chain[i], idx[i]))).collect()
        })
        .collect();
    let hierarchies = hierarchies
        .iter()
        .enumerate()
        .map(|(k, h)| Hierarchy::new(format!("H{}", first_h + k), h.iter().map(AttributeName::new).collect()))
        .collect();
    Dimension { name: d.name.clone(), root: AttributeName::new(d.root.clone()), columns, hierarchies, rows }
}

pub fn generate_pair(spec: &GenSpec) -> Result<GeneratedPair, GenError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samples: Vec<(Vec<usize>, Vec<usize>)> = spec.dimensions.iter().map(|d| sample_keys(&mut rng, d)).collect();

    // world fact rows: distinct key tuples over all dimensions
    let mut seen = HashSet::with_capacity(spec.fact_rows);
    let mut world: Vec<(Vec<usize>, [u32; 3])> = Vec::with_capacity(spec.fact_rows);
    while world.len() < spec.fact_rows {
        let tuple: Vec<usize> = spec.dimensions.iter().map(|d| rng.gen_range(0..d.rows)).collect();
        if seen.insert(tuple.clone()) {
            let qty = rng.gen_range(1..=50);
            let price = rng.gen_range(1..=1000);
            let cost = rng.gen_range(1..=500);
            world.push((tuple, [qty, qty * price, cost]));
        }
    }

    let mut sides = Vec::new();
    for (side, name) in [(0usize, &spec.names.0), (1, &spec.names.1)] {
        let mut dimensions = Vec::new();
        let mut members: Vec<(usize, HashSet<usize>)> = Vec::new();
        for (i, d) in spec.dimensions.iter().enumerate() {
            let (hs, first_h) = match side {
                0 => (d.left.as_ref(), 1),
                _ => (d.right.as_ref(), d.left.as_ref().map_or(0, Vec::len) + 1),
            };
            let Some(hs) = hs else { continue };
            let keys = if side == 0 { &samples[i].0 } else { &samples[i].1 };
            dimensions.push(build_dimension(d, hs, keys, first_h));
            members.push((i, keys.iter().copied().collect()));
        }
        let measures = if side == 0 { &spec.left_measures } else { &spec.right_measures };
        let mut fact_seen = HashSet::new();
        let mut rows = Vec::new();
        for (tuple, values) in &world {
            if !members.iter().all(|(i, set)| set.contains(&tuple[*i])) {
                continue;
            }
            let projected: Vec<usize> = members.iter().map(|(i, _)| tuple[*i]).collect();
            if !fact_seen.insert(projected.clone()) {
                continue;
            }
            let mut row: Vec<CellValue> = members
                .iter()
                .zip(&projected)
                .map(|((i, _), &r)| CellValue::Text(token(&spec.dimensions[*i].root, r)))
                .collect();
            row.extend(measures.iter().map(|m| CellValue::Number(f64::from(measure_value(m, values)))));
            rows.push(row);
        }
        let fact = Fact {
            name: spec.fact.clone(),
            keys: members
                .iter()
                .map(|(i, _)| DimensionKey {
                    dimension: spec.dimensions[*i].name.clone(),
                    column: AttributeName::new(spec.dimensions[*i].root.clone()),
                })
                .collect(),
            measures: measures.iter().map(|m| Column::number(m.clone())).collect(),
            rows,
        };
        sides.push(StarSchema { name: name.clone(), fact, dimensions });
    }
    let right = sides.pop().expect("two sides");
    let left = sides.pop().expect("two sides");
    let manifest = manifest(spec, &samples, &left, &right);
    Ok(GeneratedPair { left, right, manifest })
}

fn measure_value(name: &str, values: &[u32; 3]) -> u32 {
    match name.to_lowercase().as_str() {
        "quantity" => values[0],
        "revenue" => values[1],
        _ => values[2],
    }
}

fn manifest(spec: &GenSpec, samples: &[(Vec<usize>, Vec<usize>)], left: &StarSchema, right: &StarSchema) -> Manifest {
    let mut tables = Vec::new();
    let mut dimensions = Vec::new();
    for (d, (k1, k2)) in spec.dimensions.iter().zip(samples) {
        let l = left.dimension(&d.name);
        let r = right.dimension(&d.name);
        let s1: HashSet<usize> = k1.iter().copied().collect();
        let shared = k2.iter().filter(|k| s1.contains(k)).count();
        tables.push(TableTruth {
            table: d.name.clone(),
            rows1: l.map(|x| x.rows.len()),
            rows2: r.map(|x| x.rows.len()),
            shared: (l.is_some() && r.is_some()).then_some(shared),
        });
        let chain: Vec<String> = d.chain().iter().map(|s| (*s).to_string()).collect();
        let mut union_null_cells = BTreeMap::new();
        if let (Some(l), Some(r)) = (l, r) {
            let union: BTreeSet<usize> = k1.iter().chain(k2).copied().collect();
            let s2: HashSet<usize> = k2.iter().copied().collect();
            for a in l.attributes().chain(r.attributes()) {
                let in_left = l.has_attribute(a);
                let in_right = r.has_attribute(a);
                // generated cells are never null, so a cell is empty exactly
                // when its key is missing from every side carrying the attribute
                let empty =
                    union.iter().filter(|k| !(in_left && s1.contains(k)) && !(in_right && s2.contains(k))).count();
                union_null_cells.insert(a.raw().to_string(), empty);
            }
        }
        dimensions.push(DimensionTruth {
            name: d.name.clone(),
            expected_fd_edges: chain.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect(),
            chain,
            union_null_cells,
        });
    }
    let same_dims = left.fact.keys == right.fact.keys;
    let fact_shared = same_dims.then(|| {
        let tuples = |f: &Fact| -> HashSet<Vec<ValueKey>> { f.rows.iter().filter_map(|r| f.key_tuple(r)).collect() };
        tuples(&left.fact).intersection(&tuples(&right.fact)).count()
    });
    tables.push(TableTruth {
        table: spec.fact.clone(),
        rows1: Some(left.fact.rows.len()),
        rows2: Some(right.fact.rows.len()),
        shared: fact_shared,
    });
    Manifest { format_version: MANIFEST_VERSION, seed: spec.seed, spec: spec.clone(), tables, dimensions }
}

/// Writes both warehouses and the manifest.
pub fn write_pair(pair: &GeneratedPair, dir1: &Path, dir2: &Path, manifest: &Path) -> Result<(), IoError> {
    write_dw(&Schema::Star(pair.left.clone()), dir1)?;
    write_dw(&Schema::Star(pair.right.clone()), dir2)?;
    if let Some(parent) = manifest.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| IoError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(manifest, pair.manifest.to_json())
        .map_err(|source| IoError::Io { path: manifest.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    #[test]
    fn overlap_sizes_follow_the_fraction() {
        let spec = GenSpec::shape(Shape::Customer, 1, 1000, 0.75, 2000);
        let pair = generate_pair(&spec).unwrap();
        let t = pair.manifest.table("Customer").unwrap();
        assert_eq!((t.rows1, t.rows2), (Some(750), Some(750)));
        let s1: HashSet<_> = pair.left.dimensions[0].rows_by_key().into_keys().collect();
        let shared = pair.right.dimensions[0].rows_by_key().into_keys().filter(|k| s1.contains(k)).count();
        assert_eq!(t.shared, Some(shared));
    }

    #[test]
    fn extreme_overlaps() {
        for (overlap, expect_shared) in [(1.0, 40), (0.0, 0)] {
            let spec = GenSpec::shape(Shape::Exp1, 3, 40, overlap, 200);
            let pair = generate_pair(&spec).unwrap();
            let t = pair.manifest.table("Customer").unwrap();
            assert_eq!(t.shared, Some(expect_shared));
            if overlap == 0.0 {
                assert_eq!(t.rows1.unwrap() + t.rows2.unwrap(), 40);
            }
        }
    }

    #[test]
    fn generated_tables_validate() {
        for shape in [Shape::Exp1, Shape::Exp2, Shape::Customer] {
            let pair = generate_pair(&GenSpec::shape(shape, 7, 120, 0.5, 500)).unwrap();
            assert!(validate(&pair.left).is_empty(), "{shape:?}");
            assert!(validate(&pair.right).is_empty(), "{shape:?}");
        }
    }

    #[test]
    fn same_seed_same_pair() {
        let spec = GenSpec::shape(Shape::Exp2, 11, 200, 0.75, 1000);
        assert_eq!(generate_pair(&spec).unwrap(), generate_pair(&spec).unwrap());
        let other = GenSpec { seed: 12, ..spec.clone() };
        assert_ne!(generate_pair(&spec).unwrap().left, generate_pair(&other).unwrap().left);
    }

    #[test]
    fn levels_are_functions_of_their_parent() {
        let pair = generate_pair(&GenSpec::shape(Shape::Customer, 5, 300, 1.0, 10)).unwrap();
        let d = &pair.right.dimensions[0];
        for w in d.columns.windows(2) {
            let (a, b) = (d.column_index(&w[0].name).unwrap(), d.column_index(&w[1].name).unwrap());
            let mut map = BTreeMap::new();
            for r in &d.rows {
                let prev = map.insert(r[a].to_string(), r[b].to_string());
                assert!(prev.is_none_or(|p| p == r[b].to_string()));
            }
        }
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let mut spec = GenSpec::shape(Shape::Customer, 1, 10, 0.5, 5);
        spec.dimensions[0].levels[0].fanout = 11;
        assert!(matches!(generate_pair(&spec), Err(GenError::FanoutTooLarge { .. })));
        spec.dimensions[0].levels[0].fanout = 0;
        assert!(matches!(generate_pair(&spec), Err(GenError::ZeroFanout { .. })));
        let spec = GenSpec::shape(Shape::Customer, 1, 10, 0.5, 101);
        assert!(matches!(generate_pair(&spec), Err(GenError::TooManyFactRows { .. })));
        let spec = GenSpec::shape(Shape::Customer, 1, 10, 1.5, 5);
        assert!(matches!(generate_pair(&spec), Err(GenError::InvalidOverlap { .. })));
        let mut spec = GenSpec::shape(Shape::Customer, 1, 10, 0.5, 5);
        spec.dimensions[0].left = hs(&[&["Code", "Region", "City"]]);
        assert!(matches!(generate_pair(&spec), Err(GenError::NotAChain { .. })));
    }
}

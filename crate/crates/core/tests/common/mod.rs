//! Fixtures and brute-force oracles shared by the integration tests. Nothing
//! here calls into the algorithms it is used to check.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dwmerge::generator::GenSpec;
use dwmerge::model::{AttributeName, CellValue, Column, Dimension, Hierarchy, Schema, StarSchema};

pub fn names(ps: &[&str]) -> Vec<AttributeName> {
    ps.iter().map(|p| AttributeName::new(*p)).collect()
}

pub fn h(name: &str, ps: &[&str]) -> Hierarchy {
    Hierarchy::new(name, names(ps))
}

/// Text dimension; an empty string is a null cell.
pub fn dim(name: &str, root: &str, cols: &[&str], hs: &[(&str, &[&str])], rows: &[&[&str]]) -> Dimension {
    Dimension {
        name: name.into(),
        root: root.into(),
        columns: cols.iter().map(|c| Column::text(*c)).collect(),
        hierarchies: hs.iter().map(|(n, ps)| h(n, ps)).collect(),
        rows: rows.iter().map(|r| r.iter().map(|c| CellValue::from(*c)).collect()).collect(),
    }
}

pub fn cell(d: &Dimension, key: &str, attr: &str) -> Option<String> {
    let k = d.column_index(&d.root).unwrap();
    let a = d.column_index(&AttributeName::new(attr))?;
    let row = d.rows.iter().find(|r| r[k].to_string() == key)?;
    match &row[a] {
        CellValue::Null => None,
        v => Some(v.to_string()),
    }
}

/// Customer dimensions of two warehouses: departments roll up to regions and
/// countries, both to continents.
pub fn geography_dims() -> (Dimension, Dimension) {
    let d1 = dim(
        "Customer",
        "Code",
        &["Code", "Department", "Region", "Continent"],
        &[("H1", &["Code", "Department", "Region", "Continent"])],
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
        &[("H2", &["Code", "City", "Department", "Country", "Continent"])],
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

/// Customer dimensions with a geographic and a professional hierarchy on
/// each side. On the shared customers neither domain determines the other.
/// `extra_h4_row` adds a second-warehouse customer whose subcategory no one
/// can roll up to a category.
pub fn two_domain_dims(extra_h4_row: bool) -> (Dimension, Dimension) {
    let d1 = dim(
        "Customer",
        "Code",
        &["Code", "Department", "Region", "Continent", "Profession", "Category"],
        &[
            ("H1", &["Code", "Department", "Region", "Continent"]),
            ("H2", &["Code", "Profession", "Category"]),
        ],
        &[
            &["C1", "Dep31", "Occitanie", "Europe", "Teacher", "Education"],
            &["C2", "Dep31", "Occitanie", "Europe", "Engineer", "Industry"],
            &["C3", "Dep31", "Occitanie", "Europe", "Farmer", "Agriculture"],
            &["C4", "Dep08", "Catalonia", "Europe", "Professor", "Education"],
            &["C5", "Dep75", "IleDeFrance", "Europe", "Teacher", "Education"],
            &["C6", "QC01", "Quebec", "America", "Teacher", "Education"],
            &["C7", "Dep81", "Occitanie", "Europe", "Engineer", "Industry"],
            &["C11", "QC01", "Quebec", "America", "Engineer", "Industry"],
            &["C12", "Dep69", "AuvergneRhoneAlpes", "Europe", "Teacher", "Education"],
            &["C13", "Dep31", "Occitanie", "Europe", "Professor", "Education"],
        ],
    );
    let mut rows: Vec<&[&str]> = vec![
        &["C1", "Toulouse", "Dep31", "France", "Europe", "Teacher", "Schooling"],
        &["C2", "Toulouse", "Dep31", "France", "Europe", "Engineer", "Mechanics"],
        &["C4", "Barcelona", "Dep08", "Spain", "Europe", "Professor", "University"],
        &["C6", "Montreal", "QC01", "Canada", "America", "Teacher", "Schooling"],
        &["C7", "Albi", "Dep81", "France", "Europe", "Engineer", "Mechanics"],
        &["C8", "Nimes", "Dep30", "France", "Europe", "Engineer", "Mechanics"],
        &["C9", "Castres", "Dep81", "France", "Europe", "Teacher", "Schooling"],
        &["C11", "Montreal", "QC01", "Canada", "America", "Engineer", "Mechanics"],
        &["C12", "Lyon", "Dep69", "France", "Europe", "Teacher", "Schooling"],
        &["C13", "Blagnac", "Dep31", "France", "Europe", "Professor", "University"],
    ];
    if extra_h4_row {
        rows.push(&["C10", "Pau", "Dep64", "France", "Europe", "Pilot", "Aviation"]);
    }
    let d2 = dim(
        "Customer",
        "Code",
        &["Code", "City", "Department", "Country", "Continent", "Profession", "Subcategory"],
        &[
            ("H3", &["Code", "City", "Department", "Country", "Continent"]),
            ("H4", &["Code", "Profession", "Subcategory"]),
        ],
        &rows,
    );
    (d1, d2)
}

/// Every single-attribute FD `a -> b` with at least one supporting row,
/// found by comparing all row pairs, with its support (weight of rows
/// non-null on both sides).
pub fn brute_force_fds(rows: &[(Vec<Option<String>>, u64)], width: usize) -> BTreeSet<(usize, usize, u64)> {
    let mut out = BTreeSet::new();
    for a in 0..width {
        for b in 0..width {
            if a == b {
                continue;
            }
            let both: Vec<&(Vec<Option<String>>, u64)> =
                rows.iter().filter(|(r, _)| r[a].is_some() && r[b].is_some()).collect();
            let violated = both.iter().enumerate().any(|(i, (x, _))| {
                both[i + 1..].iter().any(|(y, _)| x[a] == y[a] && x[b] != y[b])
            });
            let support: u64 = both.iter().map(|(_, w)| w).sum();
            if !violated && support > 0 {
                out.insert((a, b, support));
            }
        }
    }
    out
}

/// Nodes reachable from `from` by a path of length >= 1, by depth-first search.
pub fn reachable_from(edges: &BTreeSet<(usize, usize)>, from: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![from];
    while let Some(u) = stack.pop() {
        for &(x, y) in edges {
            if x == u && seen.insert(y) {
                stack.push(y);
            }
        }
    }
    seen
}

/// Edges of a DAG not implied by a longer path.
pub fn reduction_oracle(edges: &BTreeSet<(usize, usize)>) -> BTreeSet<(usize, usize)> {
    edges
        .iter()
        .filter(|&&(u, v)| {
            !edges.iter().any(|&(x, w)| x == u && w != v && reachable_from(edges, w).contains(&v))
        })
        .copied()
        .collect()
}

/// All paths from a node without incoming edge to a node without outgoing
/// edge.
pub fn maximal_paths(edges: &BTreeSet<(usize, usize)>) -> BTreeSet<Vec<usize>> {
    let nodes: BTreeSet<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    let sources = nodes.iter().filter(|&&n| !edges.iter().any(|&(_, b)| b == n));
    let mut out = BTreeSet::new();
    fn walk(edges: &BTreeSet<(usize, usize)>, path: &mut Vec<usize>, out: &mut BTreeSet<Vec<usize>>) {
        let last = *path.last().unwrap();
        let next: Vec<usize> = edges.iter().filter(|&&(a, _)| a == last).map(|&(_, b)| b).collect();
        if next.is_empty() {
            out.insert(path.clone());
        }
        for n in next {
            path.push(n);
            walk(edges, path, out);
            path.pop();
        }
    }
    for &s in sources {
        walk(edges, &mut vec![s], &mut out);
    }
    out
}

/// True value of `attr` for the row keyed `key` of a generated dimension,
/// recomputed from the level fan-outs of the spec.
pub fn world_value(spec: &GenSpec, dimension: &str, key: &str, attr: &str) -> Option<String> {
    let d = spec.dimensions.iter().find(|d| d.name == dimension)?;
    let mut idx: usize = key.rsplit('_').next()?.parse().ok()?;
    if attr.eq_ignore_ascii_case(&d.root) {
        return Some(key.to_string());
    }
    for l in &d.levels {
        idx /= l.fanout;
        if l.name.eq_ignore_ascii_case(attr) {
            return Some(format!("{}_{idx:04}", l.name.to_lowercase()));
        }
    }
    None
}

pub fn root_keys(d: &Dimension) -> BTreeSet<String> {
    let k = d.column_index(&d.root).unwrap();
    d.rows.iter().map(|r| r[k].to_string()).collect()
}

/// Non-null cells per root key, by normalized attribute name.
pub fn filled(d: &Dimension) -> BTreeMap<String, BTreeSet<String>> {
    let k = d.column_index(&d.root).unwrap();
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (i, c) in d.columns.iter().enumerate() {
        let set = out.entry(c.name.normalized().to_string()).or_default();
        for r in &d.rows {
            if !r[i].is_null() {
                set.insert(r[k].to_string());
            }
        }
    }
    out
}

pub fn fact_tuples(s: &StarSchema) -> BTreeSet<Vec<String>> {
    let f = &s.fact;
    f.rows.iter().map(|r| r[..f.keys.len()].iter().map(ToString::to_string).collect()).collect()
}

pub fn dimensions(s: &Schema) -> &[Dimension] {
    match s {
        Schema::Star(s) => &s.dimensions,
        Schema::Constellation(c) => &c.dimensions,
    }
}

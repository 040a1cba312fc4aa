//! Single-attribute functional dependency discovery over joined instances.

use std::collections::{BTreeSet, HashMap};

use log::debug;

use crate::model::{AttributeName, CellValue, Dimension, SubHierarchy, ValueKey};

/// `lhs -> rhs` holds on every supporting row; `support` counts rows where
/// both sides are non-null.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FdEdge {
    pub lhs: AttributeName,
    pub rhs: AttributeName,
    pub support: u64,
}

/// Transitively reduced, acyclic set of single-attribute FDs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FdGraph {
    pub edges: Vec<FdEdge>,
}

impl FdGraph {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges as two-element ordered sequences, the input shape of
    /// [`merge_parameters`](super::merge_parameters).
    pub fn sequences(&self) -> Vec<Vec<AttributeName>> {
        self.edges.iter().map(|e| vec![e.lhs.clone(), e.rhs.clone()]).collect()
    }

    pub fn has_edge(&self, lhs: &AttributeName, rhs: &AttributeName) -> bool {
        self.edges.iter().any(|e| &e.lhs == lhs && &e.rhs == rhs)
    }
}

/// A table of weighted distinct rows; a weight of `n` stands for `n`
/// identical rows.
#[derive(Debug, Clone, Default)]
pub struct FdTable {
    pub columns: Vec<AttributeName>,
    pub rows: Vec<(Vec<Option<ValueKey>>, u64)>,
}

impl FdTable {
    pub fn from_cells(columns: Vec<AttributeName>, rows: &[Vec<CellValue>]) -> Self {
        let rows = rows.iter().map(|r| (r.iter().map(CellValue::key).collect(), 1)).collect();
        Self { columns, rows }
    }

    /// Distinct non-null values per column.
    pub fn distinct_counts(&self) -> Vec<usize> {
        (0..self.columns.len())
            .map(|c| self.rows.iter().filter_map(|(r, _)| r[c].as_ref()).collect::<BTreeSet<_>>().len())
            .collect()
    }
}

/// Every single-attribute FD `a -> b` (a != b) that has no counterexample and
/// at least `min_support` supporting rows. Rows null on `a` or `b` are ignored
/// for that pair. Not reduced; both directions of an equivalence appear.
pub fn raw_fds(table: &FdTable, min_support: u64) -> Vec<FdEdge> {
    let n = table.columns.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let mut image: HashMap<&ValueKey, &ValueKey> = HashMap::new();
            let mut support = 0u64;
            let mut holds = true;
            for (row, w) in &table.rows {
                let (Some(x), Some(y)) = (&row[a], &row[b]) else { continue };
                support += w;
                match image.get(x) {
                    Some(prev) if *prev != y => {
                        holds = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        image.insert(x, y);
                    }
                }
            }
            if holds && support >= min_support {
                out.push(FdEdge { lhs: table.columns[a].clone(), rhs: table.columns[b].clone(), support });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FdOutcome {
    Graph(FdGraph),
    /// The two sub-hierarchies share no value of their first parameter.
    Undiscoverable,
}

/// Joins the instances of two sub-hierarchies on their common first
/// parameter and derives the reduced FD graph over their parameters.
///
/// Both sub-hierarchies must use a shared vocabulary: corresponding
/// parameters carry the same name. Matched parameters collapse to one node
/// whose value is taken from the left row when non-null. The first parameter
/// is kept a source and, when the last parameters correspond, the last one a
/// sink. Mutual dependencies are oriented from the attribute with more
/// distinct values to the one with fewer, ties by name.
pub fn discover_fds(
    sh1: &SubHierarchy,
    sh2: &SubHierarchy,
    left: &Dimension,
    right: &Dimension,
    min_support: u64,
) -> FdOutcome {
    let table = match join_sub_hierarchies(sh1, sh2, left, right) {
        Some(t) => t,
        None => return FdOutcome::Undiscoverable,
    };
    let first = sh1.first().clone();
    let last_matched = sh1.last() == sh2.last();
    let raw: Vec<FdEdge> = raw_fds(&table, min_support)
        .into_iter()
        .filter(|e| e.rhs != first && !(last_matched && &e.lhs == sh1.last()))
        .collect();
    let distinct = table.distinct_counts();
    FdOutcome::Graph(reduce(&table.columns, &distinct, raw))
}

/// Inner join of the two sides' projections on the first parameter. Returns
/// `None` when no value is shared.
pub fn join_sub_hierarchies(
    sh1: &SubHierarchy,
    sh2: &SubHierarchy,
    left: &Dimension,
    right: &Dimension,
) -> Option<FdTable> {
    let mut nodes: Vec<AttributeName> = sh1.parameters.clone();
    for p in &sh2.parameters {
        if !nodes.contains(p) {
            nodes.push(p.clone());
        }
    }
    let side1 = group_projection(left, &sh1.parameters);
    let side2 = group_projection(right, &sh2.parameters);
    let pos1: Vec<Option<usize>> = nodes.iter().map(|n| sh1.parameters.iter().position(|p| p == n)).collect();
    let pos2: Vec<Option<usize>> = nodes.iter().map(|n| sh2.parameters.iter().position(|p| p == n)).collect();

    let mut joined: HashMap<Vec<Option<ValueKey>>, u64> = HashMap::new();
    let mut any = false;
    for (v, tuples1) in &side1 {
        let Some(tuples2) = side2.get(v) else { continue };
        any = true;
        for (t1, c1) in tuples1 {
            for (t2, c2) in tuples2 {
                let row: Vec<Option<ValueKey>> = pos1
                    .iter()
                    .zip(&pos2)
                    .map(|(a, b)| {
                        let l = a.and_then(|i| t1[i].clone());
                        l.or_else(|| b.and_then(|j| t2[j].clone()))
                    })
                    .collect();
                *joined.entry(row).or_default() += c1 * c2;
            }
        }
    }
    if !any {
        return None;
    }
    let mut rows: Vec<_> = joined.into_iter().collect();
    rows.sort();
    Some(FdTable { columns: nodes, rows })
}

type Grouped = HashMap<ValueKey, HashMap<Vec<Option<ValueKey>>, u64>>;

fn group_projection(d: &Dimension, params: &[AttributeName]) -> Grouped {
    let idx: Vec<Option<usize>> = params.iter().map(|p| d.column_index(p)).collect();
    let mut out: Grouped = HashMap::new();
    for row in &d.rows {
        let t: Vec<Option<ValueKey>> = idx.iter().map(|i| i.and_then(|i| row[i].key())).collect();
        let Some(k) = t[0].clone() else { continue };
        *out.entry(k).or_default().entry(t).or_default() += 1;
    }
    out
}

/// Breaks cycles, then drops every edge implied by transitivity.
fn reduce(nodes: &[AttributeName], distinct: &[usize], raw: Vec<FdEdge>) -> FdGraph {
    let n = nodes.len();
    let idx = |a: &AttributeName| nodes.iter().position(|x| x == a).expect("edge endpoint is a node");
    // total order: more distinct values first (finer granularity), then name
    let rank = |i: usize| (std::cmp::Reverse(distinct[i]), nodes[i].normalized().to_string());

    let mut adj = vec![vec![None::<u64>; n]; n];
    for e in &raw {
        adj[idx(&e.lhs)][idx(&e.rhs)] = Some(e.support);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if adj[i][j].is_some() && adj[j][i].is_some() {
                let (keep, drop) = if rank(i) <= rank(j) { ((i, j), (j, i)) } else { ((j, i), (i, j)) };
                debug!("mutual FD {} <-> {}: keeping {} -> {}", nodes[i], nodes[j], nodes[keep.0], nodes[keep.1]);
                adj[drop.0][drop.1] = None;
            }
        }
    }
    let reach = closure(&adj);
    if (0..n).any(|i| reach[i][i]) {
        // longer cycles can survive when nulls break transitivity; keep only
        // edges that go forward in the total order inside each cycle
        for i in 0..n {
            for j in 0..n {
                if adj[i][j].is_some() && reach[j][i] && rank(i) > rank(j) {
                    debug!("cyclic FD {} -> {} dropped", nodes[i], nodes[j]);
                    adj[i][j] = None;
                }
            }
        }
    }
    let bool_adj: Vec<Vec<bool>> = adj.iter().map(|r| r.iter().map(Option::is_some).collect()).collect();
    let kept = transitive_reduction(&bool_adj);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if kept[i][j] {
                edges.push(FdEdge { lhs: nodes[i].clone(), rhs: nodes[j].clone(), support: adj[i][j].unwrap_or(0) });
            }
        }
    }
    FdGraph { edges }
}

fn closure<T>(adj: &[Vec<Option<T>>]) -> Vec<Vec<bool>> {
    let bool_adj: Vec<Vec<bool>> = adj.iter().map(|r| r.iter().map(Option::is_some).collect()).collect();
    reachability(&bool_adj)
}

/// Reachability through paths of length >= 1 (Floyd-Warshall).
pub fn reachability(adj: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut r = adj.to_vec();
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

/// Transitive reduction of a DAG given as an adjacency matrix: keeps `u -> v`
/// only when no other path leads from `u` to `v`.
pub fn transitive_reduction(adj: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = adj.len();
    let reach = reachability(adj);
    let mut out = adj.to_vec();
    for u in 0..n {
        for v in 0..n {
            if adj[u][v] && (0..n).any(|w| w != u && w != v && reach[u][w] && reach[w][v]) {
                out[u][v] = false;
            }
        }
    }
    out
}

//! Multidimensional data model: stars, constellations, dimensions, hierarchies
//! and facts, plus structural validation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("hierarchy `{hierarchy}` references unknown parameter `{parameter}` in dimension `{dimension}`")]
    UnknownParameter {
        dimension: String,
        hierarchy: String,
        parameter: String,
    },
}

/// A dimension attribute, measure or key column name.
///
/// Two names are equal when their normalized forms are equal: lower-cased
/// with every non-alphanumeric character removed, so `Order_Date` and
/// `orderdate` denote the same attribute.
#[derive(Clone)]
pub struct AttributeName {
    raw: String,
    normalized: String,
}

impl AttributeName {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let normalized = normalize_name(&raw);
        Self { raw, normalized }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn normalized(&self) -> &str {
        &self.normalized
    }
}

pub fn normalize_name(raw: &str) -> String {
    raw.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl PartialEq for AttributeName {
    fn eq(&self, other: &Self) -> bool {
        self.normalized == other.normalized
    }
}

impl Eq for AttributeName {}

impl Hash for AttributeName {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.normalized.hash(state);
    }
}

impl PartialOrd for AttributeName {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AttributeName {
    fn cmp(&self, other: &Self) -> Ordering {
        self.normalized.cmp(&other.normalized)
    }
}

impl fmt::Debug for AttributeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.raw)
    }
}

impl fmt::Display for AttributeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl From<&str> for AttributeName {
    fn from(raw: &str) -> Self {
        Self::new(raw)
    }
}

impl Serialize for AttributeName {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for AttributeName {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer).map(AttributeName::new)
    }
}

/// Convenience for building parameter lists in code and tests.
pub fn names(raw: &[&str]) -> Vec<AttributeName> {
    raw.iter().map(|r| AttributeName::new(*r)).collect()
}

/// One cell of a dimension or fact table.
///
/// `PartialEq` is structural (two nulls are equal) and is what value-equality
/// of whole tables uses. Use [`CellValue::matches`] for the data semantics
/// where null matches nothing.
#[derive(Debug, Clone, PartialEq)]
pub enum CellValue {
    Null,
    Text(String),
    Number(f64),
}

impl CellValue {
    pub fn text(s: impl Into<String>) -> Self {
        CellValue::Text(s.into())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, CellValue::Null)
    }

    /// Equality for FD discovery, joins and completion: null never matches,
    /// text compares after trimming surrounding whitespace.
    pub fn matches(&self, other: &CellValue) -> bool {
        match (self.key(), other.key()) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }

    /// Hashable, totally ordered form of a non-null value.
    pub fn key(&self) -> Option<ValueKey> {
        match self {
            CellValue::Null => None,
            CellValue::Text(s) => Some(ValueKey::Text(s.trim().to_string())),
            CellValue::Number(x) => Some(ValueKey::Number(ordered_bits(*x))),
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Null => Ok(()),
            CellValue::Text(s) => f.write_str(s),
            CellValue::Number(x) => write!(f, "{x}"),
        }
    }
}

impl From<&str> for CellValue {
    fn from(s: &str) -> Self {
        if s.is_empty() {
            CellValue::Null
        } else {
            CellValue::Text(s.to_string())
        }
    }
}

fn ordered_bits(x: f64) -> i64 {
    let x = if x == 0.0 { 0.0 } else { x };
    let bits = x.to_bits() as i64;
    bits ^ ((((bits >> 63) as u64) >> 1) as i64)
}

/// Normalized non-null value used as a join, grouping or sort key.
/// Numbers sort before text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueKey {
    Number(i64),
    Text(String),
}

impl fmt::Display for ValueKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueKey::Number(bits) => {
                let raw = bits ^ ((((bits >> 63) as u64) >> 1) as i64);
                write!(f, "{}", f64::from_bits(raw as u64))
            }
            ValueKey::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    #[default]
    Text,
    Number,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: AttributeName,
    pub kind: ColumnKind,
}

impl Column {
    pub fn text(name: impl Into<String>) -> Self {
        Self { name: AttributeName::new(name), kind: ColumnKind::Text }
    }

    pub fn number(name: impl Into<String>) -> Self {
        Self { name: AttributeName::new(name), kind: ColumnKind::Number }
    }
}

/// Ordered parameter sequence; each parameter rolls up to the next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hierarchy {
    pub name: String,
    pub parameters: Vec<AttributeName>,
}

impl Hierarchy {
    pub fn new(name: impl Into<String>, parameters: Vec<AttributeName>) -> Self {
        Self { name: name.into(), parameters }
    }

    pub fn from_names(name: impl Into<String>, parameters: &[&str]) -> Self {
        Self::new(name, names(parameters))
    }

    pub fn position(&self, p: &AttributeName) -> Option<usize> {
        self.parameters.iter().position(|q| q == p)
    }

    pub fn contains(&self, p: &AttributeName) -> bool {
        self.position(p).is_some()
    }

    /// True when `lower` precedes `upper` in the roll-up order.
    pub fn rolls_up(&self, lower: &AttributeName, upper: &AttributeName) -> bool {
        match (self.position(lower), self.position(upper)) {
            (Some(i), Some(j)) => i < j,
            _ => false,
        }
    }

    pub fn same_parameters(&self, other: &[AttributeName]) -> bool {
        self.parameters.as_slice() == other
    }

    pub fn last(&self) -> &AttributeName {
        self.parameters.last().expect("hierarchy has at least one parameter")
    }

    pub fn sub(&self, start: usize, end: usize) -> SubHierarchy {
        SubHierarchy {
            parent: self.name.clone(),
            start,
            parameters: self.parameters[start..=end].to_vec(),
        }
    }
}

impl fmt::Display for Hierarchy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}<{}>", self.name, join_names(&self.parameters))
    }
}

pub fn join_names(params: &[AttributeName]) -> String {
    params.iter().map(AttributeName::raw).collect::<Vec<_>>().join(",")
}

/// Contiguous run of a parent hierarchy, starting at index `start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubHierarchy {
    pub parent: String,
    pub start: usize,
    pub parameters: Vec<AttributeName>,
}

impl SubHierarchy {
    pub fn first(&self) -> &AttributeName {
        &self.parameters[0]
    }

    pub fn last(&self) -> &AttributeName {
        self.parameters.last().expect("sub-hierarchy is never empty")
    }

    pub fn contains(&self, p: &AttributeName) -> bool {
        self.parameters.contains(p)
    }

    pub fn is_subset_of(&self, other: &SubHierarchy) -> bool {
        self.parameters.iter().all(|p| other.contains(p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub root: AttributeName,
    pub columns: Vec<Column>,
    pub hierarchies: Vec<Hierarchy>,
    /// One row per root value; cells follow `columns`.
    pub rows: Vec<Vec<CellValue>>,
}

impl Dimension {
    pub fn column_index(&self, name: &AttributeName) -> Option<usize> {
        self.columns.iter().position(|c| &c.name == name)
    }

    pub fn has_attribute(&self, name: &AttributeName) -> bool {
        self.column_index(name).is_some()
    }

    pub fn attributes(&self) -> impl Iterator<Item = &AttributeName> {
        self.columns.iter().map(|c| &c.name)
    }

    pub fn root_index(&self) -> usize {
        self.column_index(&self.root).expect("root is a dimension attribute")
    }

    pub fn hierarchy(&self, name: &str) -> Option<&Hierarchy> {
        self.hierarchies.iter().find(|h| h.name == name)
    }

    pub fn root_key(&self, row: &[CellValue]) -> Option<ValueKey> {
        self.column_index(&self.root).and_then(|i| row.get(i)).and_then(CellValue::key)
    }

    /// Number of non-null cells in `attr`, zero when the attribute is absent.
    pub fn non_null_count(&self, attr: &AttributeName) -> usize {
        match self.column_index(attr) {
            Some(i) => self.rows.iter().filter(|r| !r[i].is_null()).count(),
            None => 0,
        }
    }

    /// Rows sorted by ascending root key.
    pub fn sort_rows(&mut self) {
        let idx = self.root_index();
        self.rows.sort_by(|a, b| a[idx].key().cmp(&b[idx].key()));
    }

    pub fn rows_by_key(&self) -> HashMap<ValueKey, usize> {
        let idx = self.root_index();
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r[idx].key().map(|k| (k, i)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionKey {
    pub dimension: String,
    pub column: AttributeName,
}

/// Fact table; each row holds the dimension keys followed by the measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Fact {
    pub name: String,
    pub keys: Vec<DimensionKey>,
    pub measures: Vec<Column>,
    pub rows: Vec<Vec<CellValue>>,
}

impl Fact {
    pub fn measure_index(&self, name: &AttributeName) -> Option<usize> {
        self.measures.iter().position(|m| &m.name == name).map(|i| i + self.keys.len())
    }

    pub fn key_index(&self, dimension: &str) -> Option<usize> {
        self.keys.iter().position(|k| k.dimension == dimension)
    }

    pub fn key_tuple(&self, row: &[CellValue]) -> Option<Vec<ValueKey>> {
        row[..self.keys.len()].iter().map(CellValue::key).collect()
    }

    pub fn sort_rows(&mut self) {
        let n = self.keys.len();
        self.rows.sort_by(|a, b| {
            let ka: Vec<_> = a[..n].iter().map(CellValue::key).collect();
            let kb: Vec<_> = b[..n].iter().map(CellValue::key).collect();
            ka.cmp(&kb)
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarSchema {
    pub name: String,
    pub fact: Fact,
    pub dimensions: Vec<Dimension>,
}

impl StarSchema {
    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    /// Copy with every table in canonical row order; value-equal schemas
    /// have equal canonical forms.
    pub fn canonical(&self) -> Self {
        let mut s = self.clone();
        s.dimensions.iter_mut().for_each(Dimension::sort_rows);
        s.fact.sort_rows();
        s
    }

    pub fn into_constellation(self) -> Constellation {
        let mut star = BTreeMap::new();
        star.insert(
            self.fact.name.clone(),
            self.fact.keys.iter().map(|k| k.dimension.clone()).collect(),
        );
        Constellation { name: self.name, facts: vec![self.fact], dimensions: self.dimensions, star }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub name: String,
    pub facts: Vec<Fact>,
    pub dimensions: Vec<Dimension>,
    /// Fact name to the names of its linked dimensions.
    pub star: BTreeMap<String, Vec<String>>,
}

impl Constellation {
    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    pub fn fact(&self, name: &str) -> Option<&Fact> {
        self.facts.iter().find(|f| f.name == name)
    }

    pub fn canonical(&self) -> Self {
        let mut c = self.clone();
        c.dimensions.iter_mut().for_each(Dimension::sort_rows);
        c.facts.iter_mut().for_each(Fact::sort_rows);
        c
    }

    /// A constellation with a single fact is a star.
    pub fn into_star(mut self) -> Option<StarSchema> {
        if self.facts.len() != 1 {
            return None;
        }
        let fact = self.facts.pop()?;
        Some(StarSchema { name: self.name, fact, dimensions: self.dimensions })
    }
}

/// Output of a merge: one star or a constellation.
#[derive(Debug, Clone, PartialEq)]
pub enum Schema {
    Star(StarSchema),
    Constellation(Constellation),
}

impl Schema {
    pub fn name(&self) -> &str {
        match self {
            Schema::Star(s) => &s.name,
            Schema::Constellation(c) => &c.name,
        }
    }

    pub fn dimensions(&self) -> &[Dimension] {
        match self {
            Schema::Star(s) => &s.dimensions,
            Schema::Constellation(c) => &c.dimensions,
        }
    }

    pub fn facts(&self) -> Vec<&Fact> {
        match self {
            Schema::Star(s) => vec![&s.fact],
            Schema::Constellation(c) => c.facts.iter().collect(),
        }
    }

    pub fn is_star(&self) -> bool {
        matches!(self, Schema::Star(_))
    }

    pub fn to_constellation(&self) -> Constellation {
        match self {
            Schema::Star(s) => s.clone().into_constellation(),
            Schema::Constellation(c) => c.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    DuplicateAttribute,
    RootNotAttribute,
    EmptyHierarchy,
    DuplicateParameter,
    UnknownParameter,
    HierarchyNotRooted,
    DuplicateHierarchyName,
    RowWidth,
    NullRoot,
    DuplicateRoot,
    DuplicateDimension,
    UnknownDimension,
    UnreferencedDimension,
    NullFactKey,
    DanglingFactKey,
    DuplicateFactKey,
    NonNumericMeasure,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::DuplicateAttribute => "attribute names must be distinct",
            Rule::RootNotAttribute => "root must be a dimension attribute",
            Rule::EmptyHierarchy => "hierarchy must have at least one parameter",
            Rule::DuplicateParameter => "hierarchy parameters must be distinct",
            Rule::UnknownParameter => "hierarchy parameter must be a dimension attribute",
            Rule::HierarchyNotRooted => "hierarchy must start at the dimension root",
            Rule::DuplicateHierarchyName => "hierarchy names must be distinct",
            Rule::RowWidth => "row width must match the column count",
            Rule::NullRoot => "root value must not be null",
            Rule::DuplicateRoot => "root values must be unique",
            Rule::DuplicateDimension => "dimension names must be distinct",
            Rule::UnknownDimension => "fact key references an absent dimension",
            Rule::UnreferencedDimension => "dimension is not linked to the fact",
            Rule::NullFactKey => "fact key value must not be null",
            Rule::DanglingFactKey => "fact key must exist in the referenced dimension",
            Rule::DuplicateFactKey => "fact key tuples must be unique",
            Rule::NonNumericMeasure => "numeric column holds a non-numeric value",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Violation {
    pub table: String,
    pub location: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.table, self.location, self.rule)
    }
}

/// Checks every structural invariant of a star. The result is sorted, so it
/// does not depend on row order.
pub fn validate(schema: &StarSchema) -> Vec<Violation> {
    validate_parts(std::slice::from_ref(&schema.fact), &schema.dimensions, true)
}

/// Same checks for a constellation; a dimension may be shared by several
/// facts but must be linked to at least one.
pub fn validate_constellation(schema: &Constellation) -> Vec<Violation> {
    validate_parts(&schema.facts, &schema.dimensions, true)
}

fn validate_parts(facts: &[Fact], dimensions: &[Dimension], require_linked: bool) -> Vec<Violation> {
    let mut out = BTreeSet::new();
    let mut seen_dims = BTreeSet::new();
    for d in dimensions {
        if !seen_dims.insert(d.name.as_str()) {
            out.insert(v(&d.name, "dimension", Rule::DuplicateDimension));
        }
        validate_dimension(d, &mut out);
    }
    for f in facts {
        validate_fact(f, dimensions, &mut out);
    }
    if require_linked {
        let linked: BTreeSet<&str> =
            facts.iter().flat_map(|f| f.keys.iter().map(|k| k.dimension.as_str())).collect();
        for d in dimensions {
            if !linked.contains(d.name.as_str()) {
                out.insert(v(&d.name, "dimension", Rule::UnreferencedDimension));
            }
        }
    }
    out.into_iter().collect()
}

fn v(table: &str, location: impl Into<String>, rule: Rule) -> Violation {
    Violation { table: table.to_string(), location: location.into(), rule }
}

fn validate_dimension(d: &Dimension, out: &mut BTreeSet<Violation>) {
    let mut names = BTreeSet::new();
    for c in &d.columns {
        if !names.insert(c.name.normalized()) {
            out.insert(v(&d.name, format!("column {}", c.name), Rule::DuplicateAttribute));
        }
    }
    let root_ok = d.has_attribute(&d.root);
    if !root_ok {
        out.insert(v(&d.name, format!("root {}", d.root), Rule::RootNotAttribute));
    }
    let mut hnames = BTreeSet::new();
    for h in &d.hierarchies {
        let loc = format!("hierarchy {}", h.name);
        if !hnames.insert(h.name.as_str()) {
            out.insert(v(&d.name, loc.clone(), Rule::DuplicateHierarchyName));
        }
        if h.parameters.is_empty() {
            out.insert(v(&d.name, loc, Rule::EmptyHierarchy));
            continue;
        }
        let mut ps = BTreeSet::new();
        for p in &h.parameters {
            if !ps.insert(p.normalized()) {
                out.insert(v(&d.name, format!("{loc} parameter {p}"), Rule::DuplicateParameter));
            }
            if !d.has_attribute(p) {
                out.insert(v(&d.name, format!("{loc} parameter {p}"), Rule::UnknownParameter));
            }
        }
        if h.parameters[0] != d.root {
            out.insert(v(&d.name, loc, Rule::HierarchyNotRooted));
        }
    }
    let width = d.columns.len();
    let mut counts: BTreeMap<ValueKey, usize> = BTreeMap::new();
    for row in &d.rows {
        if row.len() != width {
            let key = d.root_key(row).map(|k| k.to_string()).unwrap_or_default();
            out.insert(v(&d.name, format!("row {key}"), Rule::RowWidth));
            continue;
        }
        check_numeric(&d.name, &d.columns, row, 0, || d.root_key(row), out);
        if !root_ok {
            continue;
        }
        match d.root_key(row) {
            Some(k) => *counts.entry(k).or_default() += 1,
            None => {
                out.insert(v(&d.name, "row with null root", Rule::NullRoot));
            }
        }
    }
    for (k, n) in counts {
        if n > 1 {
            out.insert(v(&d.name, format!("root {k}"), Rule::DuplicateRoot));
        }
    }
}

fn check_numeric(
    table: &str,
    columns: &[Column],
    row: &[CellValue],
    offset: usize,
    key: impl Fn() -> Option<ValueKey>,
    out: &mut BTreeSet<Violation>,
) {
    for (i, c) in columns.iter().enumerate() {
        if c.kind == ColumnKind::Number && matches!(row[i + offset], CellValue::Text(_)) {
            let k = key().map(|k| k.to_string()).unwrap_or_default();
            out.insert(v(table, format!("row {k} column {}", c.name), Rule::NonNumericMeasure));
        }
    }
}

fn validate_fact(f: &Fact, dimensions: &[Dimension], out: &mut BTreeSet<Violation>) {
    let mut names = BTreeSet::new();
    for n in f.keys.iter().map(|k| &k.column).chain(f.measures.iter().map(|m| &m.name)) {
        if !names.insert(n.normalized()) {
            out.insert(v(&f.name, format!("column {n}"), Rule::DuplicateAttribute));
        }
    }
    let mut key_sets: Vec<Option<BTreeSet<ValueKey>>> = Vec::with_capacity(f.keys.len());
    for k in &f.keys {
        match dimensions.iter().find(|d| d.name == k.dimension) {
            Some(d) if d.has_attribute(&d.root) => {
                let idx = d.root_index();
                key_sets.push(Some(d.rows.iter().filter_map(|r| r.get(idx)?.key()).collect()));
            }
            Some(_) => key_sets.push(None),
            None => {
                out.insert(v(&f.name, format!("key {}", k.column), Rule::UnknownDimension));
                key_sets.push(None);
            }
        }
    }
    let width = f.keys.len() + f.measures.len();
    let mut tuples: BTreeMap<Vec<ValueKey>, usize> = BTreeMap::new();
    for row in &f.rows {
        if row.len() != width {
            out.insert(v(&f.name, format!("row {}", render_row(&row[..row.len().min(f.keys.len())])), Rule::RowWidth));
            continue;
        }
        let loc = render_row(&row[..f.keys.len()]);
        check_numeric(&f.name, &f.measures, row, f.keys.len(), || None, out);
        let mut complete = true;
        for (i, k) in f.keys.iter().enumerate() {
            match row[i].key() {
                None => {
                    complete = false;
                    out.insert(v(&f.name, format!("row ({loc}) key {}", k.column), Rule::NullFactKey));
                }
                Some(val) => {
                    if let Some(Some(set)) = key_sets.get(i) {
                        if !set.contains(&val) {
                            out.insert(v(
                                &f.name,
                                format!("row ({loc}) key {} -> {}", k.column, k.dimension),
                                Rule::DanglingFactKey,
                            ));
                        }
                    }
                }
            }
        }
        if complete {
            if let Some(t) = f.key_tuple(row) {
                *tuples.entry(t).or_default() += 1;
            }
        }
    }
    for (t, n) in tuples {
        if n > 1 {
            let loc = t.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
            out.insert(v(&f.name, format!("row ({loc})"), Rule::DuplicateFactKey));
        }
    }
}

fn render_row(cells: &[CellValue]) -> String {
    cells.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Whether a dimension row lies on hierarchy `h`: every parameter of `h`
/// holds a non-null value in the row.
pub fn conforms(dimension: &Dimension, row: &[CellValue], h: &Hierarchy) -> Result<bool, ModelError> {
    let mut all = true;
    for p in &h.parameters {
        let idx = dimension.column_index(p).ok_or_else(|| ModelError::UnknownParameter {
            dimension: dimension.name.clone(),
            hierarchy: h.name.clone(),
            parameter: p.raw().to_string(),
        })?;
        if row[idx].is_null() {
            all = false;
        }
    }
    Ok(all)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn t(s: &str) -> CellValue {
        CellValue::from(s)
    }

    pub fn dim(name: &str, root: &str, cols: &[&str], hs: &[(&str, &[&str])], rows: &[&[&str]]) -> Dimension {
        Dimension {
            name: name.into(),
            root: root.into(),
            columns: cols.iter().map(|c| Column::text(*c)).collect(),
            hierarchies: hs.iter().map(|(n, ps)| Hierarchy::from_names(*n, ps)).collect(),
            rows: rows.iter().map(|r| r.iter().map(|c| t(c)).collect()).collect(),
        }
    }

    fn two_dim_star() -> StarSchema {
        let customer = dim(
            "Customer",
            "Code",
            &["Code", "City"],
            &[("H1", &["Code", "City"])],
            &[&["C1", "Paris"], &["C2", "Lyon"]],
        );
        let product = dim("Product", "Pid", &["Pid"], &[("HP", &["Pid"])], &[&["P1"]]);
        let fact = Fact {
            name: "Sales".into(),
            keys: vec![
                DimensionKey { dimension: "Customer".into(), column: "Code".into() },
                DimensionKey { dimension: "Product".into(), column: "Pid".into() },
            ],
            measures: vec![Column::number("Quantity")],
            rows: vec![vec![t("C1"), t("P1"), CellValue::Number(3.0)]],
        };
        StarSchema { name: "s".into(), fact, dimensions: vec![customer, product] }
    }

    #[test]
    fn name_normalization() {
        let a = AttributeName::new("Order_Date");
        let b = AttributeName::new("orderdate ");
        assert_eq!(a, b);
        assert_eq!(a.normalized(), "orderdate");
        assert_eq!(a.raw(), "Order_Date");
        assert_ne!(AttributeName::new("City"), AttributeName::new("Country"));
    }

    #[test]
    fn null_matches_nothing() {
        assert!(!CellValue::Null.matches(&CellValue::Null));
        assert!(!CellValue::Null.matches(&t("a")));
        assert!(t(" a ").matches(&t("a")));
        assert!(CellValue::Number(1.0).matches(&CellValue::Number(1.0)));
        assert!(!CellValue::Number(1.0).matches(&t("1")));
        assert!(CellValue::Number(0.0).matches(&CellValue::Number(-0.0)));
    }

    #[test]
    fn value_keys_order_numbers_numerically() {
        let mut ks: Vec<_> = [-2.5, 10.0, 3.0, -100.0, 0.0]
            .iter()
            .map(|x| CellValue::Number(*x).key().unwrap())
            .collect();
        ks.sort();
        let back: Vec<String> = ks.iter().map(ToString::to_string).collect();
        assert_eq!(back, ["-100", "-2.5", "0", "3", "10"]);
    }

    #[test]
    fn well_formed_star_has_no_violations() {
        assert_eq!(validate(&two_dim_star()), vec![]);
    }

    #[test]
    fn duplicate_root_is_one_violation() {
        let mut s = two_dim_star();
        s.dimensions[0].rows.push(vec![t("C1"), t("Nice")]);
        let vs = validate(&s);
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].rule, Rule::DuplicateRoot);
        assert_eq!(vs[0].table, "Customer");
        assert!(vs[0].location.contains("C1"));
    }

    #[test]
    fn dangling_fact_key_is_reported() {
        // three fact rows, one of which points at a customer that does not exist
        let mut s = two_dim_star();
        s.fact.rows.push(vec![t("C2"), t("P1"), CellValue::Number(1.0)]);
        s.fact.rows.push(vec![t("C9"), t("P1"), CellValue::Number(1.0)]);
        let vs = validate(&s);
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].rule, Rule::DanglingFactKey);
        assert!(vs[0].location.contains("C9"));
    }

    #[test]
    fn hierarchy_rules() {
        let mut s = two_dim_star();
        s.dimensions[0].hierarchies.push(Hierarchy::from_names("Bad", &["City", "Zip", "City"]));
        let rules: Vec<Rule> = validate(&s).into_iter().map(|v| v.rule).collect();
        assert!(rules.contains(&Rule::HierarchyNotRooted));
        assert!(rules.contains(&Rule::UnknownParameter));
        assert!(rules.contains(&Rule::DuplicateParameter));
    }

    #[test]
    fn duplicate_fact_tuple_is_reported() {
        let mut s = two_dim_star();
        s.fact.rows.push(vec![t("C1"), t("P1"), CellValue::Number(9.0)]);
        let vs = validate(&s);
        assert_eq!(vs.iter().map(|v| v.rule).collect::<Vec<_>>(), vec![Rule::DuplicateFactKey]);
    }

    #[test]
    fn conforms_requires_all_parameters() {
        let d = dim(
            "Customer",
            "Code",
            &["Code", "City", "Department", "Region", "Country", "Continent"],
            &[],
            &[&["C1", "Paris", "D75", "IDF", "France", "Europe"], &["C3", "", "D75", "IDF", "", "Europe"]],
        );
        let merged = Hierarchy::from_names("Hm", &["Code", "City", "Department", "Region", "Country", "Continent"]);
        assert!(conforms(&d, &d.rows[0], &merged).unwrap());
        assert!(!conforms(&d, &d.rows[1], &merged).unwrap());
        let root_only = Hierarchy::from_names("R", &["Code"]);
        assert!(conforms(&d, &d.rows[1], &root_only).unwrap());
        let bad = Hierarchy::from_names("X", &["Code", "Planet"]);
        assert!(matches!(conforms(&d, &d.rows[0], &bad), Err(ModelError::UnknownParameter { .. })));
    }

    #[test]
    fn rolls_up_follows_order() {
        let h = Hierarchy::from_names("H", &["Code", "City", "Country"]);
        assert!(h.rolls_up(&"Code".into(), &"Country".into()));
        assert!(!h.rolls_up(&"Country".into(), &"City".into()));
        assert!(!h.rolls_up(&"City".into(), &"City".into()));
    }
}

//! Reading and writing warehouse directories, merge reports and user
//! correspondence files.
//!
//! A warehouse directory holds `schema.json` and one CSV file per table:
//!
//! ```json
//! {
//!   "formatVersion": 1,
//!   "name": "S1",
//!   "facts": [
//!     { "name": "Sales", "table": "Sales.csv",
//!       "measures": [ { "name": "Qty", "type": "number" } ],
//!       "dimensionKeys": [ { "dimension": "Customer", "column": "Custkey" } ] }
//!   ],
//!   "dimensions": [
//!     { "name": "Customer", "table": "Customer.csv", "id": "Custkey",
//!       "attributes": [ { "name": "Custkey" }, { "name": "City", "type": "text" } ],
//!       "hierarchies": [ { "name": "H1", "parameters": ["Custkey", "City"] } ] }
//!   ]
//! }
//! ```
//!
//! An `id` missing from `attributes` is added as the first, text-typed
//! column. `type` is `text` or `number`; attributes default to text, measures to
//! number. Fact key columns take the type of the referenced dimension's id.
//! CSV files are UTF-8 with a header line; an empty field is null.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::{AttrRef, MapAction, MapEntry, UserMap};
use crate::model::{
    validate, validate_constellation, AttributeName, CellValue, Column, ColumnKind, Constellation, Dimension,
    DimensionKey, Fact, Hierarchy, Schema, StarSchema, ValueKey, Violation,
};
use crate::report::MergeReport;

pub const DESCRIPTOR_FILE: &str = "schema.json";
pub const DESCRIPTOR_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Descriptor { path: PathBuf, source: serde_json::Error },
    #[error("{}: unsupported formatVersion {found}", path.display())]
    UnsupportedVersion { path: PathBuf, found: u32 },
    #[error("{}: expected exactly one fact, found {found}", path.display())]
    FactCount { path: PathBuf, found: usize },
    #[error("{}:{line}: {message}", path.display())]
    Csv { path: PathBuf, line: u64, message: String },
    #[error("{}:1: header lacks declared column `{column}`", path.display())]
    MissingColumn { path: PathBuf, column: String },
    #[error("{}:{line}: column `{column}` holds non-numeric value `{value}`", path.display())]
    BadNumber { path: PathBuf, line: u64, column: String, value: String },
    #[error("{}:{line}: null id", path.display())]
    NullRoot { path: PathBuf, line: u64 },
    #[error("{}:{line}: id `{key}` already used on line {first_line}", path.display())]
    DuplicateRoot { path: PathBuf, line: u64, key: String, first_line: u64 },
    #[error("{}:{line}: key tuple already used on line {first_line}", path.display())]
    DuplicateFactKey { path: PathBuf, line: u64, first_line: u64 },
    #[error("{}:{line}: `{column}` = `{value}` has no row in dimension `{dimension}`", path.display())]
    DanglingKey { path: PathBuf, line: u64, column: String, value: String, dimension: String },
    #[error("{}: invalid warehouse:\n  {}", path.display(), violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n  "))]
    Invalid { path: PathBuf, violations: Vec<Violation> },
    #[error("{}:{line}: {message}", path.display())]
    MapSyntax { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Duplicate ids and fact key tuples are errors instead of being
    /// dropped (first occurrence kept) with a warning.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Descriptor {
    pub format_version: u32,
    pub name: String,
    pub facts: Vec<FactDescriptor>,
    pub dimensions: Vec<DimensionDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FactDescriptor {
    pub name: String,
    pub table: String,
    #[serde(default)]
    pub measures: Vec<ColumnDescriptor>,
    pub dimension_keys: Vec<KeyDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnDescriptor {
    pub name: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ColumnKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyDescriptor {
    pub dimension: String,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionDescriptor {
    pub name: String,
    pub table: String,
    pub id: String,
    pub attributes: Vec<ColumnDescriptor>,
    #[serde(default)]
    pub hierarchies: Vec<HierarchyDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyDescriptor {
    pub name: String,
    pub parameters: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

pub fn read_descriptor(dir: &Path) -> Result<Descriptor, IoError> {
    let path = dir.join(DESCRIPTOR_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let desc: Descriptor =
        serde_json::from_str(&text).map_err(|source| IoError::Descriptor { path: path.clone(), source })?;
    if desc.format_version != DESCRIPTOR_VERSION {
        return Err(IoError::UnsupportedVersion { path, found: desc.format_version });
    }
    Ok(desc)
}

/// Loads a single-star warehouse and validates it.
pub fn load_dw(dir: &Path, opts: LoadOptions) -> Result<StarSchema, IoError> {
    match load_schema(dir, opts)? {
        Schema::Star(s) => Ok(s),
        Schema::Constellation(c) => {
            Err(IoError::FactCount { path: dir.join(DESCRIPTOR_FILE), found: c.facts.len() })
        }
    }
}

/// Loads a warehouse with any number of facts (at least one) and validates
/// it; a single fact gives a star.
pub fn load_schema(dir: &Path, opts: LoadOptions) -> Result<Schema, IoError> {
    let desc = read_descriptor(dir)?;
    let desc_path = dir.join(DESCRIPTOR_FILE);
    if desc.facts.is_empty() {
        return Err(IoError::FactCount { path: desc_path, found: 0 });
    }
    let dimensions =
        desc.dimensions.iter().map(|dd| load_dimension(dir, dd, opts)).collect::<Result<Vec<_>, _>>()?;
    let mut facts = Vec::new();
    for fd in &desc.facts {
        facts.push(load_fact(dir, fd, &dimensions, opts)?);
    }
    let schema = if facts.len() == 1 {
        let fact = facts.pop().expect("one fact");
        Schema::Star(StarSchema { name: desc.name.clone(), fact, dimensions })
    } else {
        let star = facts
            .iter()
            .map(|f| (f.name.clone(), f.keys.iter().map(|k| k.dimension.clone()).collect()))
            .collect();
        Schema::Constellation(Constellation { name: desc.name.clone(), facts, dimensions, star })
    };
    let violations = match &schema {
        Schema::Star(s) => validate(s),
        Schema::Constellation(c) => validate_constellation(c),
    };
    if !violations.is_empty() {
        return Err(IoError::Invalid { path: desc_path, violations });
    }
    Ok(schema)
}

struct Table {
    path: PathBuf,
    header: Vec<AttributeName>,
    /// Records with their 1-based line numbers.
    records: Vec<(u64, csv::StringRecord)>,
}

fn read_table(path: PathBuf) -> Result<Table, IoError> {
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(file);
    let csv_err = |path: &Path, e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(1);
        IoError::Csv { path: path.to_path_buf(), line, message: e.to_string() }
    };
    let header: Vec<AttributeName> =
        reader.headers().map_err(|e| csv_err(&path, e))?.iter().map(AttributeName::new).collect();
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(&path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        records.push((line, rec));
    }
    Ok(Table { path, header, records })
}

impl Table {
    fn column(&self, name: &AttributeName) -> Result<usize, IoError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::MissingColumn { path: self.path.clone(), column: name.raw().to_string() })
    }

    fn cell(&self, line: u64, raw: &str, column: &Column) -> Result<CellValue, IoError> {
        if raw.is_empty() {
            return Ok(CellValue::Null);
        }
        match column.kind {
            ColumnKind::Text => Ok(CellValue::Text(raw.to_string())),
            ColumnKind::Number => match raw.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(CellValue::Number(x)),
                _ => Err(IoError::BadNumber {
                    path: self.path.clone(),
                    line,
                    column: column.name.raw().to_string(),
                    value: raw.to_string(),
                }),
            },
        }
    }

    fn warn_extra(&self, declared: &[&AttributeName]) {
        for h in &self.header {
            if !declared.contains(&h) {
                warn!("{}: ignoring undeclared column `{h}`", self.path.display());
            }
        }
    }
}

fn load_dimension(
    dir: &Path,
    dd: &DimensionDescriptor,
    opts: LoadOptions,
) -> Result<Dimension, IoError> {
    let table = read_table(dir.join(&dd.table))?;
    let root = AttributeName::new(dd.id.clone());
    let mut columns: Vec<Column> = dd
        .attributes
        .iter()
        .map(|a| Column { name: AttributeName::new(a.name.clone()), kind: a.kind.unwrap_or(ColumnKind::Text) })
        .collect();
    // an id left out of `attributes` is an implicit leading text column
    if !columns.iter().any(|c| c.name == root) {
        columns.insert(0, Column::text(dd.id.clone()));
    }
    let positions = columns.iter().map(|c| table.column(&c.name)).collect::<Result<Vec<_>, _>>()?;
    table.warn_extra(&columns.iter().map(|c| &c.name).collect::<Vec<_>>());
    let root_col = columns.iter().position(|c| c.name == root);

    let mut rows = Vec::with_capacity(table.records.len());
    let mut seen: HashMap<ValueKey, u64> = HashMap::new();
    for (line, rec) in &table.records {
        let row = positions
            .iter()
            .zip(&columns)
            .map(|(&p, c)| table.cell(*line, &rec[p], c))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(rc) = root_col {
            let Some(k) = row[rc].key() else {
                return Err(IoError::NullRoot { path: table.path.clone(), line: *line });
            };
            if let Some(&first_line) = seen.get(&k) {
                if opts.strict {
                    return Err(IoError::DuplicateRoot {
                        path: table.path.clone(),
                        line: *line,
                        key: k.to_string(),
                        first_line,
                    });
                }
                warn!("{}:{line}: dropping row with repeated id `{k}` (first on line {first_line})", table.path.display());
                continue;
            }
            seen.insert(k, *line);
        }
        rows.push(row);
    }
    let hierarchies = dd
        .hierarchies
        .iter()
        .map(|h| Hierarchy::new(h.name.clone(), h.parameters.iter().map(AttributeName::new).collect()))
        .collect();
    Ok(Dimension { name: dd.name.clone(), root, columns, hierarchies, rows })
}

fn load_fact(dir: &Path, fd: &FactDescriptor, dims: &[Dimension], opts: LoadOptions) -> Result<Fact, IoError> {
    let table = read_table(dir.join(&fd.table))?;
    let keys: Vec<DimensionKey> = fd
        .dimension_keys
        .iter()
        .map(|k| DimensionKey { dimension: k.dimension.clone(), column: AttributeName::new(k.column.clone()) })
        .collect();
    let key_dims: Vec<Option<&Dimension>> = keys.iter().map(|k| dims.iter().find(|d| d.name == k.dimension)).collect();
    let mut columns: Vec<Column> = keys
        .iter()
        .zip(&key_dims)
        .map(|(k, d)| {
            let kind = d.and_then(|d| d.column_index(&d.root).map(|i| d.columns[i].kind)).unwrap_or_default();
            Column { name: k.column.clone(), kind }
        })
        .collect();
    let measures: Vec<Column> = fd
        .measures
        .iter()
        .map(|m| Column { name: AttributeName::new(m.name.clone()), kind: m.kind.unwrap_or(ColumnKind::Number) })
        .collect();
    columns.extend(measures.iter().cloned());
    let positions = columns.iter().map(|c| table.column(&c.name)).collect::<Result<Vec<_>, _>>()?;
    table.warn_extra(&columns.iter().map(|c| &c.name).collect::<Vec<_>>());
    let roots: Vec<Option<BTreeSet<ValueKey>>> =
        key_dims.iter().map(|d| d.map(|d| d.rows.iter().filter_map(|r| d.root_key(r)).collect())).collect();

    let mut rows = Vec::with_capacity(table.records.len());
    let mut seen: HashMap<Vec<ValueKey>, u64> = HashMap::new();
    for (line, rec) in &table.records {
        let row = positions
            .iter()
            .zip(&columns)
            .map(|(&p, c)| table.cell(*line, &rec[p], c))
            .collect::<Result<Vec<_>, _>>()?;
        for (k, key) in keys.iter().enumerate() {
            let Some(set) = &roots[k] else { continue };
            if row[k].key().is_some_and(|v| !set.contains(&v)) {
                return Err(IoError::DanglingKey {
                    path: table.path.clone(),
                    line: *line,
                    column: key.column.raw().to_string(),
                    value: row[k].to_string(),
                    dimension: key.dimension.clone(),
                });
            }
        }
        if let Some(tuple) = row[..keys.len()].iter().map(CellValue::key).collect::<Option<Vec<_>>>() {
            if let Some(&first_line) = seen.get(&tuple) {
                if opts.strict {
                    return Err(IoError::DuplicateFactKey { path: table.path.clone(), line: *line, first_line });
                }
                warn!("{}:{line}: dropping row with repeated key tuple (first on line {first_line})", table.path.display());
                continue;
            }
            seen.insert(tuple, *line);
        }
        rows.push(row);
    }
    Ok(Fact { name: fd.name.clone(), keys, measures, rows })
}

/// File name for a table, unique among `taken`.
fn table_file(name: &str, taken: &mut BTreeSet<String>) -> String {
    let stem: String =
        name.chars().map(|c| if c.is_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect();
    let mut file = format!("{stem}.csv");
    let mut k = 2;
    while !taken.insert(file.to_lowercase()) {
        file = format!("{stem}_{k}.csv");
        k += 1;
    }
    file
}

fn column_descriptor(c: &Column) -> ColumnDescriptor {
    ColumnDescriptor { name: c.name.raw().to_string(), kind: Some(c.kind) }
}

/// Writes descriptor and tables. Rows are sorted by id (dimensions) or key
/// tuple (facts), so equal schemas give identical bytes.
pub fn write_dw(schema: &Schema, dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut taken = BTreeSet::new();
    let mut dims = Vec::new();
    for d in schema.dimensions() {
        let file = table_file(&d.name, &mut taken);
        let mut sorted = d.clone();
        sorted.sort_rows();
        write_table(&dir.join(&file), sorted.columns.iter().map(|c| c.name.raw()), &sorted.rows)?;
        dims.push(DimensionDescriptor {
            name: d.name.clone(),
            table: file,
            id: d.root.raw().to_string(),
            attributes: d.columns.iter().map(column_descriptor).collect(),
            hierarchies: d
                .hierarchies
                .iter()
                .map(|h| HierarchyDescriptor {
                    name: h.name.clone(),
                    parameters: h.parameters.iter().map(|p| p.raw().to_string()).collect(),
                })
                .collect(),
        });
    }
    let mut facts = Vec::new();
    for f in schema.facts() {
        let file = table_file(&f.name, &mut taken);
        let mut sorted = f.clone();
        sorted.sort_rows();
        let header = f.keys.iter().map(|k| k.column.raw()).chain(f.measures.iter().map(|m| m.name.raw()));
        write_table(&dir.join(&file), header, &sorted.rows)?;
        facts.push(FactDescriptor {
            name: f.name.clone(),
            table: file,
            measures: f.measures.iter().map(column_descriptor).collect(),
            dimension_keys: f
                .keys
                .iter()
                .map(|k| KeyDescriptor { dimension: k.dimension.clone(), column: k.column.raw().to_string() })
                .collect(),
        });
    }
    let desc = Descriptor { format_version: DESCRIPTOR_VERSION, name: schema.name().to_string(), facts, dimensions: dims };
    let path = dir.join(DESCRIPTOR_FILE);
    let mut text = serde_json::to_string_pretty(&desc).expect("descriptor serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

fn write_table<'a>(path: &Path, header: impl Iterator<Item = &'a str>, rows: &[Vec<CellValue>]) -> Result<(), IoError> {
    let csv_err = |e: csv::Error| IoError::Csv { path: path.to_path_buf(), line: 0, message: e.to_string() };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.iter().map(ToString::to_string)).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Io { path: path.to_path_buf(), source: e.into_error() })?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn write_report(report: &MergeReport, path: &Path) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, report.to_json()).map_err(io_err(path))
}

/// Parses a user correspondence file. Each non-blank line outside `#`
/// comments reads `pair|forbid <Table>.<attribute> <Table>.<attribute>`,
/// the first reference naming the first warehouse.
pub fn parse_user_map(text: &str, path: &Path) -> Result<UserMap, IoError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| IoError::MapSyntax { path: path.to_path_buf(), line, message };
        let parts: Vec<&str> = content.split_whitespace().collect();
        let [action, left, right] = parts[..] else {
            return Err(err(format!("expected `pair|forbid <Table>.<attr> <Table>.<attr>`, got `{content}`")));
        };
        let action = match action {
            "pair" => MapAction::Pair,
            "forbid" => MapAction::Forbid,
            other => return Err(err(format!("unknown action `{other}`"))),
        };
        let reference = |s: &str| -> Result<AttrRef, IoError> {
            match s.split_once('.') {
                Some((owner, attr)) if !owner.is_empty() && !attr.is_empty() => Ok(AttrRef::new(owner, attr)),
                _ => Err(err(format!("`{s}` is not of the form <Table>.<attr>"))),
            }
        };
        entries.push(MapEntry { left: reference(left)?, right: reference(right)?, action, line });
    }
    Ok(UserMap { entries })
}

pub fn load_user_map(path: &Path) -> Result<UserMap, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_user_map(&text, path)
}

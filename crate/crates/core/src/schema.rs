//! Database schemas and in-memory table contents.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::text::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    Text,
    Number,
}

impl ColumnKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "string" | "text" => Some(ColumnKind::Text),
            "number" | "int" | "integer" | "float" => Some(ColumnKind::Number),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Text => "string",
            ColumnKind::Number => "number",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Column {
            name: name.into(),
            kind,
        }
    }
}

/// `column -> ref_table.ref_column`, declared on the table owning `column`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForeignKey {
    pub column: String,
    pub ref_table: String,
    pub ref_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<Column>,
    /// Link tables such as `movie_actor` carry no key of their own.
    pub primary_key: Option<String>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl TableDef {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// A qualified attribute `table.column`, by index into the owning [`Schema`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttrRef {
    pub table: usize,
    pub column: usize,
}

/// A resolved foreign-key edge: `from` holds values of `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct FkEdge {
    pub from: AttrRef,
    pub to: AttrRef,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("schema has no tables")]
    Empty,
    #[error("duplicate table `{0}`")]
    DuplicateTable(String),
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("primary key `{column}` of table `{table}` is not a column")]
    UnknownPrimaryKey { table: String, column: String },
    #[error("foreign key column `{column}` of table `{table}` does not exist")]
    UnknownForeignKeyColumn { table: String, column: String },
    #[error("foreign key `{table}.{column}` references missing `{target}`")]
    DanglingForeignKey {
        table: String,
        column: String,
        target: String,
    },
    #[error("table `{0}` is not connected to the rest of the schema by foreign keys")]
    Disconnected(String),
}

/// Validated set of tables with their foreign-key graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    tables: Vec<TableDef>,
    edges: Vec<FkEdge>,
}

impl Schema {
    pub fn new(tables: Vec<TableDef>) -> Result<Self, SchemaError> {
        if tables.is_empty() {
            return Err(SchemaError::Empty);
        }
        for (i, t) in tables.iter().enumerate() {
            if tables[..i]
                .iter()
                .any(|o| o.name.eq_ignore_ascii_case(&t.name))
            {
                return Err(SchemaError::DuplicateTable(t.name.clone()));
            }
            for (j, c) in t.columns.iter().enumerate() {
                if t.columns[..j]
                    .iter()
                    .any(|o| o.name.eq_ignore_ascii_case(&c.name))
                {
                    return Err(SchemaError::DuplicateColumn {
                        table: t.name.clone(),
                        column: c.name.clone(),
                    });
                }
            }
            if let Some(pk) = &t.primary_key {
                if t.column_index(pk).is_none() {
                    return Err(SchemaError::UnknownPrimaryKey {
                        table: t.name.clone(),
                        column: pk.clone(),
                    });
                }
            }
        }

        let find_table = |name: &str| {
            tables
                .iter()
                .position(|t| t.name.eq_ignore_ascii_case(name))
        };
        let mut edges = Vec::new();
        for (ti, t) in tables.iter().enumerate() {
            for fk in &t.foreign_keys {
                let col = t.column_index(&fk.column).ok_or_else(|| {
                    SchemaError::UnknownForeignKeyColumn {
                        table: t.name.clone(),
                        column: fk.column.clone(),
                    }
                })?;
                let dangling = |target: String| SchemaError::DanglingForeignKey {
                    table: t.name.clone(),
                    column: fk.column.clone(),
                    target,
                };
                let rt = find_table(&fk.ref_table).ok_or_else(|| dangling(fk.ref_table.clone()))?;
                let rc = tables[rt]
                    .column_index(&fk.ref_column)
                    .ok_or_else(|| dangling(format!("{}.{}", fk.ref_table, fk.ref_column)))?;
                edges.push(FkEdge {
                    from: AttrRef {
                        table: ti,
                        column: col,
                    },
                    to: AttrRef {
                        table: rt,
                        column: rc,
                    },
                });
            }
        }

        let schema = Schema { tables, edges };
        let reach = schema.distances_from(0);
        if let Some(t) = reach.iter().position(|d| d.is_none()) {
            return Err(SchemaError::Disconnected(schema.tables[t].name.clone()));
        }
        Ok(schema)
    }

    pub fn tables(&self) -> &[TableDef] {
        &self.tables
    }

    pub fn table(&self, index: usize) -> &TableDef {
        &self.tables[index]
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables
            .iter()
            .position(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn table_name(&self, index: usize) -> &str {
        &self.tables[index].name
    }

    /// All attributes, table by table in declaration order.
    pub fn attrs(&self) -> impl Iterator<Item = AttrRef> + '_ {
        self.tables.iter().enumerate().flat_map(|(t, def)| {
            (0..def.columns.len()).map(move |c| AttrRef {
                table: t,
                column: c,
            })
        })
    }

    pub fn attr_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    pub fn attrs_of(&self, table: usize) -> impl Iterator<Item = AttrRef> {
        (0..self.tables[table].columns.len()).map(move |c| AttrRef { table, column: c })
    }

    pub fn column(&self, attr: AttrRef) -> &Column {
        &self.tables[attr.table].columns[attr.column]
    }

    /// Qualified `table.column` name.
    pub fn attr_name(&self, attr: AttrRef) -> String {
        let t = &self.tables[attr.table];
        format!("{}.{}", t.name, t.columns[attr.column].name)
    }

    /// Resolves a qualified `table.column` name.
    pub fn parse_attr(&self, qualified: &str) -> Option<AttrRef> {
        let (t, c) = qualified.trim().split_once('.')?;
        let table = self.table_index(t)?;
        let column = self.tables[table].column_index(c)?;
        Some(AttrRef { table, column })
    }

    pub fn primary_key(&self, table: usize) -> Option<AttrRef> {
        let t = &self.tables[table];
        let pk = t.primary_key.as_ref()?;
        t.column_index(pk).map(|column| AttrRef { table, column })
    }

    pub fn fk_edges(&self) -> &[FkEdge] {
        &self.edges
    }

    /// First FK edge (declaration order) joining `a` and `b` in either direction.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<FkEdge> {
        self.edges.iter().copied().find(|e| {
            (e.from.table == a && e.to.table == b) || (e.from.table == b && e.to.table == a)
        })
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        a != b && self.edge_between(a, b).is_some()
    }

    pub fn neighbors(&self, table: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.tables.len())
            .filter(|&o| self.adjacent(table, o))
            .collect();
        out.dedup();
        out
    }

    /// Breadth-first hop counts over the undirected FK graph.
    pub fn distances_from(&self, start: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.tables.len()];
        dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(t) = queue.pop_front() {
            let d = dist[t].unwrap_or(0);
            for n in self.neighbors(t) {
                if dist[n].is_none() {
                    dist[n] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// One shortest path from `a` to `b`, both endpoints included.
    pub fn shortest_path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        let dist = self.distances_from(a);
        let mut d = dist[b]?;
        let mut path = vec![b];
        let mut cur = b;
        while d > 0 {
            cur = self
                .neighbors(cur)
                .into_iter()
                .find(|&n| dist[n] == Some(d - 1))?;
            path.push(cur);
            d -= 1;
        }
        path.reverse();
        Some(path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DataError {
    #[error("expected {expected} tables of rows, got {got}")]
    TableCount { expected: usize, got: usize },
    #[error("row {row} of table `{table}` has {got} values, expected {expected}")]
    Arity {
        table: String,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("duplicate primary key `{value}` in table `{table}`")]
    DuplicateKey { table: String, value: String },
    #[error("row {row} of table `{table}`: `{column}` value `{value}` has no match in `{target}`")]
    ForeignKeyViolation {
        table: String,
        row: usize,
        column: String,
        value: String,
        target: String,
    },
}

/// Immutable table contents. Every cell is a string; numbers keep their
/// exact textual form.
#[derive(Debug, Clone)]
pub struct Database {
    schema: Schema,
    rows: Vec<Vec<Vec<String>>>,
    /// Per attribute: normalized cell value -> row indices.
    index: Vec<Vec<BTreeMap<String, Vec<usize>>>>,
    normalized: Vec<Vec<Vec<String>>>,
}

impl Database {
    pub fn new(schema: Schema, rows: Vec<Vec<Vec<String>>>) -> Result<Self, DataError> {
        if rows.len() != schema.table_count() {
            return Err(DataError::TableCount {
                expected: schema.table_count(),
                got: rows.len(),
            });
        }
        for (t, table_rows) in rows.iter().enumerate() {
            let def = schema.table(t);
            for (r, row) in table_rows.iter().enumerate() {
                if row.len() != def.columns.len() {
                    return Err(DataError::Arity {
                        table: def.name.clone(),
                        row: r,
                        expected: def.columns.len(),
                        got: row.len(),
                    });
                }
            }
        }

        let normalized: Vec<Vec<Vec<String>>> = rows
            .iter()
            .map(|tr| {
                tr.iter()
                    .map(|row| row.iter().map(|v| normalize(v)).collect())
                    .collect()
            })
            .collect();
        let mut index: Vec<Vec<BTreeMap<String, Vec<usize>>>> = schema
            .tables()
            .iter()
            .map(|t| vec![BTreeMap::new(); t.columns.len()])
            .collect();
        for (t, table_rows) in normalized.iter().enumerate() {
            for (r, row) in table_rows.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    index[t][c].entry(v.clone()).or_default().push(r);
                }
            }
        }

        for t in 0..schema.table_count() {
            if let Some(pk) = schema.primary_key(t) {
                if let Some((v, _)) = index[t][pk.column].iter().find(|(_, rs)| rs.len() > 1) {
                    return Err(DataError::DuplicateKey {
                        table: schema.table_name(t).into(),
                        value: v.clone(),
                    });
                }
            }
        }
        for e in schema.fk_edges() {
            for (r, row) in normalized[e.from.table].iter().enumerate() {
                let v = &row[e.from.column];
                if !index[e.to.table][e.to.column].contains_key(v) {
                    return Err(DataError::ForeignKeyViolation {
                        table: schema.table_name(e.from.table).into(),
                        row: r,
                        column: schema.column(e.from).name.clone(),
                        value: rows[e.from.table][r][e.from.column].clone(),
                        target: schema.attr_name(e.to),
                    });
                }
            }
        }

        Ok(Database {
            schema,
            rows,
            index,
            normalized,
        })
    }

    /// A database with the schema and no rows.
    pub fn empty(schema: Schema) -> Self {
        let n = schema.table_count();
        Database::new(schema, vec![Vec::new(); n]).expect("empty tables are always valid")
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self, table: usize) -> &[Vec<String>] {
        &self.rows[table]
    }

    pub fn row_count(&self, table: usize) -> usize {
        self.rows[table].len()
    }

    pub fn value(&self, attr: AttrRef, row: usize) -> &str {
        &self.rows[attr.table][row][attr.column]
    }

    /// Normalized form of a cell, see [`crate::text::normalize`].
    pub fn normalized_value(&self, attr: AttrRef, row: usize) -> &str {
        &self.normalized[attr.table][row][attr.column]
    }

    /// Rows of `attr.table` whose `attr` cell normalizes to `normalized`.
    pub fn lookup(&self, attr: AttrRef, normalized: &str) -> &[usize] {
        self.index[attr.table][attr.column]
            .get(normalized)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Distinct normalized values of a column, sorted.
    pub fn distinct_values(&self, attr: AttrRef) -> impl Iterator<Item = &str> {
        self.index[attr.table][attr.column].keys().map(String::as_str)
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tables {
            write!(f, "{}(", t.name)?;
            for (i, c) in t.columns.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}:{}", c.name, c.kind.as_str())?;
            }
            f.write_str(")\n")?;
        }
        Ok(())
    }
}

/// Shorthand used by tests and the synthetic database builder.
pub fn table(
    name: &str,
    columns: &[(&str, ColumnKind)],
    primary_key: Option<&str>,
    foreign_keys: &[(&str, &str, &str)],
) -> TableDef {
    TableDef {
        name: name.into(),
        columns: columns.iter().map(|&(n, k)| Column::new(n, k)).collect(),
        primary_key: primary_key.map(String::from),
        foreign_keys: foreign_keys
            .iter()
            .map(|&(c, t, rc)| ForeignKey {
                column: c.into(),
                ref_table: t.into(),
                ref_column: rc.into(),
            })
            .collect(),
    }
}

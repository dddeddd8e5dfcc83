//! Schema documents, per-table CSV contents and template files.
//!
//! A schema file is TOML with one `[[table]]` entry per table:
//!
//! ```toml
//! [[table]]
//! name = "movie_actor"
//! columns = ["movie_name:string", "actor_name:string"]
//! foreign_keys = ["movie_name -> movie.name", "actor_name -> actor.name"]
//! ```
//!
//! `primary_key` is optional. Column kinds are `string` (the default when
//! the `:kind` suffix is left off) or `number`. Table contents live in
//! `<db-dir>/<table>.csv` with a header row naming the columns.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqlgen_core::datagen::{parse_templates, Template, TemplateError};
use sqlgen_core::schema::{DataError, SchemaError};
use sqlgen_core::{Column, ColumnKind, Database, ForeignKey, Schema, TableDef};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("{path}: table `{table}`: bad column spec `{spec}` (expected name or name:kind)")]
    ColumnSpec {
        path: PathBuf,
        table: String,
        spec: String,
    },
    #[error("{path}: table `{table}`: bad foreign key `{spec}` (expected `col -> table.col`)")]
    ForeignKeySpec {
        path: PathBuf,
        table: String,
        spec: String,
    },
    #[error("{path}: {source}")]
    Schema { path: PathBuf, source: SchemaError },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: header lacks column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: unknown column `{column}` in header")]
    UnknownColumn { path: PathBuf, column: String },
    #[error("{dir}: {source}")]
    Data { dir: PathBuf, source: DataError },
    #[error("{path}: {source}")]
    Template { path: PathBuf, source: TemplateError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FileError + '_ {
    move |source| FileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SchemaDoc {
    #[serde(rename = "table")]
    tables: Vec<TableDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    name: String,
    columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    primary_key: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    foreign_keys: Vec<String>,
}

fn parse_column(spec: &str) -> Option<Column> {
    let (name, kind) = match spec.split_once(':') {
        Some((n, k)) => (n.trim(), ColumnKind::parse(k)?),
        None => (spec.trim(), ColumnKind::Text),
    };
    (!name.is_empty()).then(|| Column::new(name, kind))
}

fn parse_foreign_key(spec: &str) -> Option<ForeignKey> {
    let (col, target) = spec.split_once("->")?;
    let (table, ref_col) = target.trim().split_once('.')?;
    let (col, table, ref_col) = (col.trim(), table.trim(), ref_col.trim());
    if col.is_empty() || table.is_empty() || ref_col.is_empty() {
        return None;
    }
    Some(ForeignKey {
        column: col.into(),
        ref_table: table.into(),
        ref_column: ref_col.into(),
    })
}

pub fn parse_schema(text: &str, path: &Path) -> Result<Schema, FileError> {
    let doc: SchemaDoc = toml::from_str(text).map_err(|source| FileError::Toml {
        path: path.to_path_buf(),
        source: Box::new(source),
    })?;
    let mut tables = Vec::with_capacity(doc.tables.len());
    for t in doc.tables {
        let columns = t
            .columns
            .iter()
            .map(|c| {
                parse_column(c).ok_or_else(|| FileError::ColumnSpec {
                    path: path.to_path_buf(),
                    table: t.name.clone(),
                    spec: c.clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let foreign_keys = t
            .foreign_keys
            .iter()
            .map(|f| {
                parse_foreign_key(f).ok_or_else(|| FileError::ForeignKeySpec {
                    path: path.to_path_buf(),
                    table: t.name.clone(),
                    spec: f.clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        tables.push(TableDef {
            name: t.name,
            columns,
            primary_key: t.primary_key,
            foreign_keys,
        });
    }
    Schema::new(tables).map_err(|source| FileError::Schema {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_schema(path: &Path) -> Result<Schema, FileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_schema(&text, path)
}

pub fn schema_to_toml(schema: &Schema) -> String {
    let doc = SchemaDoc {
        tables: schema
            .tables()
            .iter()
            .map(|t| TableDoc {
                name: t.name.clone(),
                columns: t.columns.iter().map(|c| format!("{}:{}", c.name, c.kind.as_str())).collect(),
                primary_key: t.primary_key.clone(),
                foreign_keys: t
                    .foreign_keys
                    .iter()
                    .map(|f| format!("{} -> {}.{}", f.column, f.ref_table, f.ref_column))
                    .collect(),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("schema documents always serialize")
}

pub fn table_path(dir: &Path, table: &str) -> PathBuf {
    dir.join(format!("{table}.csv"))
}

fn read_table(path: &Path, def: &TableDef) -> Result<Vec<Vec<String>>, FileError> {
    let csv_err = |source| FileError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers().map_err(csv_err)?.clone();
    // position of each schema column in the file
    let mut order = Vec::with_capacity(def.columns.len());
    for c in &def.columns {
        let pos = header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(&c.name))
            .ok_or_else(|| FileError::MissingColumn {
                path: path.to_path_buf(),
                column: c.name.clone(),
            })?;
        order.push(pos);
    }
    if let Some(extra) = header.iter().find(|h| def.column_index(h.trim()).is_none()) {
        return Err(FileError::UnknownColumn {
            path: path.to_path_buf(),
            column: extra.into(),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        rows.push(order.iter().map(|&i| record.get(i).unwrap_or("").to_string()).collect());
    }
    Ok(rows)
}

/// Reads `<dir>/<table>.csv` for every table of the schema.
pub fn load_database(schema: Schema, dir: &Path) -> Result<Database, FileError> {
    let rows = schema
        .tables()
        .iter()
        .map(|t| read_table(&table_path(dir, &t.name), t))
        .collect::<Result<Vec<_>, _>>()?;
    Database::new(schema, rows).map_err(|source| FileError::Data {
        dir: dir.to_path_buf(),
        source,
    })
}

pub fn write_database(db: &Database, dir: &Path) -> Result<(), FileError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (t, def) in db.schema().tables().iter().enumerate() {
        let path = table_path(dir, &def.name);
        let csv_err = |source| FileError::Csv {
            path: path.clone(),
            source,
        };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(def.columns.iter().map(|c| c.name.as_str())).map_err(csv_err)?;
        for row in db.rows(t) {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn load_templates(path: &Path, schema: &Schema) -> Result<Vec<Template>, FileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_templates(&text, schema).map_err(|source| FileError::Template {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a schema, its tables and a template file under `dir` as
/// `schema.toml`, `db/*.csv` and `templates.txt`.
pub fn write_corpus(db: &Database, templates: &str, dir: &Path) -> Result<(), FileError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let schema_path = dir.join("schema.toml");
    fs::write(&schema_path, schema_to_toml(db.schema())).map_err(io_err(&schema_path))?;
    write_database(db, &dir.join("db"))?;
    let tpl = dir.join("templates.txt");
    fs::write(&tpl, templates).map_err(io_err(&tpl))
}

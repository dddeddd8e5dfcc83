//! Line-delimited JSON datasets.
//!
//! One example per line:
//!
//! ```json
//! {"question": "which movies were released in 1999", "answer": ["Silent Harbor"],
//!  "gold_sql": ["select", "movie.name", "from", "movie", "where", "movie.year", "=", "1999", "EOS"],
//!  "conditions": 1, "tables": 1}
//! ```
//!
//! `gold_sql` is optional; each list entry is one SQL token, so a
//! multi-word value stays a single entry. Blank lines are skipped.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqlgen_core::datagen::Example;
use sqlgen_core::query::{classify_all, render_tokens, GrammarViolation, UnjoinableTables};
use sqlgen_core::{execute, parse_tokens, ResultSet, Schema, SqlQuery};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub question: String,
    pub answer: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sql: Option<Vec<String>>,
    pub conditions: usize,
    pub tables: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}:{line}: gold_sql rejected: {source}")]
    Gold {
        path: PathBuf,
        line: usize,
        source: GoldError,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum GoldError {
    #[error(transparent)]
    Grammar(#[from] GrammarViolation),
    #[error(transparent)]
    Unjoinable(#[from] UnjoinableTables),
}

impl Record {
    pub fn from_example(ex: &Example, schema: &Schema) -> Self {
        Record {
            question: ex.question.clone(),
            answer: ex.answer.iter().map(String::from).collect(),
            gold_sql: ex.gold.as_ref().map(|q| render_tokens(&q.to_tokens(), schema)),
            conditions: ex.conditions,
            tables: ex.tables,
        }
    }

    pub fn into_example(self, schema: &Schema) -> Result<Example, GoldError> {
        let gold = self.gold_sql.map(|t| parse_gold(&t, schema)).transpose()?;
        Ok(Example {
            question: self.question,
            answer: ResultSet::from_values(&self.answer),
            gold,
            conditions: self.conditions,
            tables: self.tables,
        })
    }
}

/// Parses gold tokens and fills in the join predicates.
pub fn parse_gold(tokens: &[String], schema: &Schema) -> Result<SqlQuery, GoldError> {
    Ok(parse_tokens(&classify_all(tokens, schema), schema)?.with_joins(schema)?)
}

pub fn read_dataset(path: &Path, schema: &Schema) -> Result<Vec<Example>, DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|source| DatasetError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        let ex = record.into_example(schema).map_err(|source| DatasetError::Gold {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_records<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in records {
        let line = serde_json::to_string(&r).expect("records serialize");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_dataset(path: &Path, examples: &[Example], schema: &Schema) -> Result<(), DatasetError> {
    write_records(path, examples.iter().map(|e| Record::from_example(e, schema)))
}

/// Whether a stored answer still matches its gold query on `db`.
pub fn gold_is_faithful(ex: &Example, db: &sqlgen_core::Database) -> Option<bool> {
    Some(execute(ex.gold.as_ref()?, db) == ex.answer)
}

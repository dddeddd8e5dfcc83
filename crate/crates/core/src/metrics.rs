//! Execution accuracy, redundancy, and the condition/table breakdown.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::datagen::Example;
use crate::exec::{execute, ResultSet};
use crate::query::SqlQuery;
use crate::schema::{Database, Schema};

/// Fills in join predicates when a multi-table query lacks them.
fn joined(q: &SqlQuery, schema: &Schema) -> Option<SqlQuery> {
    if q.tables.len() > 1 && q.joins.is_empty() {
        q.clone().with_joins(schema).ok()
    } else {
        Some(q.clone())
    }
}

/// A decode is correct when it executes to exactly the answer set; failed
/// decodes (`None`) are incorrect.
pub fn is_correct(decoded: Option<&SqlQuery>, db: &Database, answer: &ResultSet) -> bool {
    decoded
        .and_then(|q| joined(q, db.schema()))
        .is_some_and(|q| execute(&q, db) == *answer)
}

pub fn accuracy(decoded: &[Option<SqlQuery>], db: &Database, answers: &[ResultSet]) -> f64 {
    assert_eq!(decoded.len(), answers.len(), "one decode per example");
    let correct = decoded
        .iter()
        .zip(answers)
        .filter(|(q, a)| is_correct(q.as_ref(), db, a))
        .count();
    ratio(correct, decoded.len()).unwrap_or(0.0)
}

/// Whether the query lists a table that is neither the projection's table,
/// nor a condition's table, nor on a shortest foreign-key path between two
/// such tables.
pub fn is_redundant(q: &SqlQuery, schema: &Schema) -> bool {
    let mut required: Vec<usize> = Vec::from([q.select.table]);
    for c in &q.conditions {
        if !required.contains(&c.attr.table) {
            required.push(c.attr.table);
        }
    }
    let dist: Vec<Vec<Option<usize>>> = (0..schema.table_count()).map(|t| schema.distances_from(t)).collect();
    let on_path = |t: usize| {
        required.iter().any(|&a| {
            required.iter().any(|&b| {
                a != b
                    && matches!((dist[a][t], dist[t][b], dist[a][b]), (Some(x), Some(y), Some(d)) if x + y == d)
            })
        })
    };
    q.tables.iter().any(|&t| !required.contains(&t) && !on_path(t))
}

/// Share of redundant queries among the decodes that produced a query.
pub fn redundancy(decoded: &[Option<SqlQuery>], schema: &Schema) -> f64 {
    let parsed: Vec<&SqlQuery> = decoded.iter().flatten().collect();
    let redundant = parsed.iter().filter(|q| is_redundant(q, schema)).count();
    ratio(redundant, parsed.len()).unwrap_or(0.0)
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Bucket {
    pub correct: usize,
    pub total: usize,
}

impl Bucket {
    /// `None` for an empty bucket.
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.correct, self.total)
    }

    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Decodes that yielded a complete query.
    pub parsed: usize,
    pub redundant: usize,
    pub redundancy: f64,
    pub single_condition: Bucket,
    pub multi_condition: Bucket,
    pub single_table: Bucket,
    pub multi_table: Bucket,
}

/// Scores decodes against examples; buckets come from each example's
/// recorded condition and table counts.
pub fn evaluate(decoded: &[Option<SqlQuery>], examples: &[Example], db: &Database) -> EvalReport {
    assert_eq!(decoded.len(), examples.len(), "one decode per example");
    let mut r = EvalReport {
        total: examples.len(),
        ..EvalReport::default()
    };
    for (q, ex) in decoded.iter().zip(examples) {
        let ok = is_correct(q.as_ref(), db, &ex.answer);
        r.correct += usize::from(ok);
        if let Some(q) = q {
            r.parsed += 1;
            r.redundant += usize::from(is_redundant(q, db.schema()));
        }
        if ex.is_multi_condition() {
            r.multi_condition.add(ok);
        } else {
            r.single_condition.add(ok);
        }
        if ex.is_multi_table() {
            r.multi_table.add(ok);
        } else {
            r.single_table.add(ok);
        }
    }
    r.accuracy = ratio(r.correct, r.total).unwrap_or(0.0);
    r.redundancy = ratio(r.redundant, r.parsed).unwrap_or(0.0);
    r
}

fn fmt_ratio(x: Option<f64>) -> String {
    x.map_or_else(|| String::from("n/a"), |v| format!("{v:.4}"))
}

impl EvalReport {
    fn rows(&self) -> [(&'static str, Option<f64>, usize, usize); 6] {
        [
            ("accuracy", Some(self.accuracy), self.correct, self.total),
            ("redundancy", ratio(self.redundant, self.parsed).or(Some(0.0)), self.redundant, self.parsed),
            ("acc_sc", self.single_condition.accuracy(), self.single_condition.correct, self.single_condition.total),
            ("acc_mc", self.multi_condition.accuracy(), self.multi_condition.correct, self.multi_condition.total),
            ("acc_st", self.single_table.accuracy(), self.single_table.correct, self.single_table.total),
            ("acc_mt", self.multi_table.accuracy(), self.multi_table.correct, self.multi_table.total),
        ]
    }

    /// Human-readable table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, v, num, den) in self.rows() {
            let _ = writeln!(out, "{name:<12}{:>8}  ({num}/{den})", fmt_ratio(v));
        }
        out
    }

    /// `key=value` lines for scripts.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (name, v, num, den) in self.rows() {
            let _ = writeln!(out, "{name}={}", fmt_ratio(v));
            let _ = writeln!(out, "{name}.count={num}/{den}");
        }
        out
    }
}

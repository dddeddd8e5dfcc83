//! In-memory execution of [`SqlQuery`] values.
//!
//! Tables are joined left to right with index lookups on the FK predicates,
//! then the condition expression is evaluated with `and` binding tighter
//! than `or`, and the select attribute is projected into a set.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::query::{Connective, SqlQuery};
use crate::schema::{AttrRef, Database};
use crate::text::normalize;

/// Set of result values. Membership and equality use normalized text; the
/// first surface form seen is kept for display.
#[derive(Debug, Clone, Default, Eq)]
pub struct ResultSet {
    values: BTreeMap<String, String>,
}

impl ResultSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = ResultSet::new();
        for v in values {
            out.insert(v.as_ref());
        }
        out
    }

    pub fn insert(&mut self, value: &str) {
        self.values
            .entry(normalize(value))
            .or_insert_with(|| value.into());
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, value: &str) -> bool {
        self.values.contains_key(&normalize(value))
    }

    pub fn intersects(&self, other: &ResultSet) -> bool {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.values.keys().any(|k| large.values.contains_key(k))
    }

    pub fn is_subset(&self, other: &ResultSet) -> bool {
        self.values.keys().all(|k| other.values.contains_key(k))
    }

    /// Surface forms, ordered by normalized key.
    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.values.values().map(String::as_str)
    }
}

impl PartialEq for ResultSet {
    fn eq(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self.values.keys().zip(other.values.keys()).all(|(a, b)| a == b)
    }
}

impl fmt::Display for ResultSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, v) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(v)?;
        }
        f.write_str("}")
    }
}

/// Row indices, one per listed table.
type Tuple = Vec<usize>;

fn position_of(tables: &[usize], table: usize) -> usize {
    tables
        .iter()
        .position(|&t| t == table)
        .expect("attribute table is listed in the from-clause")
}

pub(crate) fn joined_tuples(query: &SqlQuery, db: &Database) -> Vec<Tuple> {
    let tables = &query.tables;
    let mut tuples: Vec<Tuple> = (0..db.row_count(tables[0]))
        .map(|r| alloc::vec![r])
        .collect();
    for k in 1..tables.len() {
        let t = tables[k];
        // predicates that become checkable once table k is present
        let preds: Vec<(AttrRef, AttrRef)> = query
            .joins
            .iter()
            .filter_map(|p| {
                let (lp, rp) = (position_of_opt(tables, p.left.table), position_of_opt(tables, p.right.table));
                match (lp, rp) {
                    (Some(l), Some(r)) if l.max(r) == k => {
                        if l == k {
                            Some((p.left, p.right))
                        } else {
                            Some((p.right, p.left))
                        }
                    }
                    _ => None,
                }
            })
            .collect();
        let mut next = Vec::new();
        for tuple in &tuples {
            match preds.split_first() {
                Some(((new_attr, old_attr), rest)) => {
                    let old_row = tuple[position_of(tables, old_attr.table)];
                    let key = db.normalized_value(*old_attr, old_row);
                    for &r in db.lookup(*new_attr, key) {
                        let ok = rest.iter().all(|(na, oa)| {
                            let orow = tuple[position_of(tables, oa.table)];
                            db.normalized_value(*na, r) == db.normalized_value(*oa, orow)
                        });
                        if ok {
                            let mut nt = tuple.clone();
                            nt.push(r);
                            next.push(nt);
                        }
                    }
                }
                None => {
                    for r in 0..db.row_count(t) {
                        let mut nt = tuple.clone();
                        nt.push(r);
                        next.push(nt);
                    }
                }
            }
        }
        tuples = next;
    }
    tuples
}

fn position_of_opt(tables: &[usize], table: usize) -> Option<usize> {
    tables.iter().position(|&t| t == table)
}

/// Splits the condition list into `or`-separated groups of `and`-ed indices.
pub(crate) fn disjuncts(query: &SqlQuery) -> Vec<Vec<usize>> {
    let mut groups = alloc::vec![alloc::vec![0]];
    for (i, c) in query.connectives.iter().enumerate() {
        match c {
            Connective::And => groups.last_mut().expect("non-empty").push(i + 1),
            Connective::Or => groups.push(alloc::vec![i + 1]),
        }
    }
    groups
}

/// Runs the query. Join predicates must already be present for multi-table
/// queries (see [`SqlQuery::with_joins`]).
pub fn execute(query: &SqlQuery, db: &Database) -> ResultSet {
    let tables = &query.tables;
    let conds: Vec<(usize, AttrRef, String)> = query
        .conditions
        .iter()
        .map(|c| (position_of(tables, c.attr.table), c.attr, normalize(&c.value)))
        .collect();
    let groups = disjuncts(query);
    let select_pos = position_of(tables, query.select.table);

    let mut out = ResultSet::new();
    for tuple in joined_tuples(query, db) {
        let holds = |i: usize| {
            let (p, attr, ref v) = conds[i];
            db.normalized_value(attr, tuple[p]) == v
        };
        let keep = conds.is_empty() || groups.iter().any(|g| g.iter().all(|&i| holds(i)));
        if keep {
            out.insert(db.value(query.select, tuple[select_pos]));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("condition index {index} out of range for a query with {count} conditions")]
pub struct ConditionIndexOutOfRange {
    pub index: usize,
    pub count: usize,
}

/// Executes the query restricted to its `i`-th condition, keeping the same
/// tables and join predicates.
pub fn execute_single_condition(
    query: &SqlQuery,
    i: usize,
    db: &Database,
) -> Result<ResultSet, ConditionIndexOutOfRange> {
    let single = query.single_condition(i).ok_or(ConditionIndexOutOfRange {
        index: i,
        count: query.conditions.len(),
    })?;
    Ok(execute(&single, db))
}

//! Template-driven question/answer generation and dataset splitting.
//!
//! Template syntax, one per line (`#` starts a comment):
//!
//! ```text
//! movie.name :: which movies were released in {movie.year}
//! movie.name or :: films directed by {movie.director} or {movie.director}
//! ```
//!
//! The attribute before `::` is projected; placeholders become conditions in
//! order, joined by `and` unless the header says `or`.

pub mod synthetic;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::exec::{execute, joined_tuples, ResultSet};
use crate::query::{Condition, Connective, SqlQuery};
use crate::schema::{AttrRef, Database, Schema};
use crate::text::normalize;
use crate::vocab::{extract_value_set, tokenize_question, LexiconOptions, ValueLexicon};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Text(String),
    Slot(AttrRef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub source: String,
    pub select: AttrRef,
    pub connective: Connective,
    parts: Vec<Part>,
}

impl Template {
    pub fn slots(&self) -> impl Iterator<Item = AttrRef> + '_ {
        self.parts.iter().filter_map(|p| match p {
            Part::Slot(a) => Some(*a),
            Part::Text(_) => None,
        })
    }

    pub fn slot_count(&self) -> usize {
        self.slots().count()
    }

    pub fn fill(&self, values: &[&str]) -> String {
        let mut out = String::new();
        let mut k = 0;
        for p in &self.parts {
            match p {
                Part::Text(t) => out.push_str(t),
                Part::Slot(_) => {
                    out.push_str(values[k]);
                    k += 1;
                }
            }
        }
        crate::text::collapse_whitespace(&out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("line {line}: expected `<table.column> [and|or] :: <question>`")]
    Syntax { line: usize },
    #[error("line {line}: unknown attribute `{name}`")]
    UnknownAttribute { line: usize, name: String },
    #[error("line {line}: unterminated placeholder")]
    Unterminated { line: usize },
    #[error("line {line}: template has no placeholders")]
    NoPlaceholders { line: usize },
}

pub fn parse_template(text: &str, line: usize, schema: &Schema) -> Result<Template, TemplateError> {
    let (head, body) = text.split_once("::").ok_or(TemplateError::Syntax { line })?;
    let mut head_words = head.split_whitespace();
    let select_name = head_words.next().ok_or(TemplateError::Syntax { line })?;
    let select = schema.parse_attr(select_name).ok_or_else(|| TemplateError::UnknownAttribute {
        line,
        name: select_name.into(),
    })?;
    let connective = match head_words.next().map(|w| w.to_ascii_lowercase()) {
        None => Connective::And,
        Some(w) if w == "and" => Connective::And,
        Some(w) if w == "or" => Connective::Or,
        Some(_) => return Err(TemplateError::Syntax { line }),
    };
    if head_words.next().is_some() {
        return Err(TemplateError::Syntax { line });
    }

    let mut parts = Vec::new();
    let mut rest = body.trim();
    while let Some(open) = rest.find('{') {
        if open > 0 {
            parts.push(Part::Text(rest[..open].into()));
        }
        let close = rest[open..].find('}').ok_or(TemplateError::Unterminated { line })? + open;
        let name = rest[open + 1..close].trim();
        let attr = schema.parse_attr(name).ok_or_else(|| TemplateError::UnknownAttribute {
            line,
            name: name.into(),
        })?;
        parts.push(Part::Slot(attr));
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        parts.push(Part::Text(rest.into()));
    }
    let t = Template {
        source: text.trim().into(),
        select,
        connective,
        parts,
    };
    if t.slot_count() == 0 {
        return Err(TemplateError::NoPlaceholders { line });
    }
    Ok(t)
}

/// Parses a template file; blank lines and `#` comments are skipped.
pub fn parse_templates(text: &str, schema: &Schema) -> Result<Vec<Template>, TemplateError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .map(|(i, l)| parse_template(l, i + 1, schema))
        .collect()
}

/// Smallest FK-connected table set covering the projection and every
/// condition, in owner-first breadth-first order.
pub fn minimal_tables(schema: &Schema, select: AttrRef, conditions: &[AttrRef]) -> Option<Vec<usize>> {
    let mut set = vec![select.table];
    for c in conditions {
        for t in schema.shortest_path(select.table, c.table)? {
            if !set.contains(&t) {
                set.push(t);
            }
        }
    }
    let q = SqlQuery {
        select,
        tables: set,
        conditions: Vec::new(),
        connectives: Vec::new(),
        joins: Vec::new(),
    };
    q.canonicalize(schema).map(|q| q.tables)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub question: String,
    pub answer: ResultSet,
    pub gold: Option<SqlQuery>,
    pub conditions: usize,
    pub tables: usize,
}

impl Example {
    pub fn is_multi_condition(&self) -> bool {
        self.conditions > 1
    }

    pub fn is_multi_table(&self) -> bool {
        self.tables > 1
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationStats {
    /// Examples produced per template source line.
    pub per_template: BTreeMap<String, usize>,
    pub multi_table: usize,
    pub multi_condition: usize,
    pub attempts: usize,
}

impl GenerationStats {
    pub fn multi_table_fraction(&self, total: usize) -> f64 {
        ratio(self.multi_table, total)
    }

    pub fn multi_condition_fraction(&self, total: usize) -> f64 {
        ratio(self.multi_condition, total)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatagenError {
    #[error("no templates")]
    NoTemplates,
    #[error("template `{template}` has unjoinable attributes")]
    Unjoinable { template: String },
    #[error("produced only {produced} of {requested} distinct examples after {attempts} attempts")]
    Exhausted {
        requested: usize,
        produced: usize,
        attempts: usize,
    },
}

/// Attempts allowed per requested example before giving up.
const ATTEMPTS_PER_EXAMPLE: usize = 200;

/// Draws `n` distinct examples. Each attempt picks a template uniformly and
/// fills it from database rows: `and` templates from one joined tuple (so
/// the answer is nonempty), `or` templates from independent tuples. An
/// attempt is kept only if the tokenized question's value set is exactly
/// the filled values, all distinct, and the answer is nonempty.
pub fn generate_dataset<R: Rng + ?Sized>(
    db: &Database,
    templates: &[Template],
    n: usize,
    rng: &mut R,
) -> Result<(Vec<Example>, GenerationStats), DatagenError> {
    let mut stats = GenerationStats::default();
    if n == 0 {
        return Ok((Vec::new(), stats));
    }
    if templates.is_empty() {
        return Err(DatagenError::NoTemplates);
    }
    let schema = db.schema();
    let lexicon = ValueLexicon::build(db, LexiconOptions::default());

    struct Prepared<'t> {
        template: &'t Template,
        slots: Vec<AttrRef>,
        base: SqlQuery,
        tuples: Vec<Vec<usize>>,
    }
    let mut prepared = Vec::with_capacity(templates.len());
    for t in templates {
        let slots: Vec<AttrRef> = t.slots().collect();
        let tables = minimal_tables(schema, t.select, &slots).ok_or_else(|| DatagenError::Unjoinable {
            template: t.source.clone(),
        })?;
        let base = SqlQuery {
            select: t.select,
            tables,
            conditions: Vec::new(),
            connectives: Vec::new(),
            joins: Vec::new(),
        }
        .with_joins(schema)
        .map_err(|_| DatagenError::Unjoinable {
            template: t.source.clone(),
        })?;
        let tuples = joined_tuples(&base, db);
        prepared.push(Prepared {
            template: t,
            slots,
            base,
            tuples,
        });
    }

    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    let budget = n * ATTEMPTS_PER_EXAMPLE;
    while out.len() < n {
        if stats.attempts >= budget {
            return Err(DatagenError::Exhausted {
                requested: n,
                produced: out.len(),
                attempts: stats.attempts,
            });
        }
        stats.attempts += 1;
        let p = &prepared[rng.random_range(0..prepared.len())];
        if p.tuples.is_empty() {
            continue;
        }
        let shared = rng.random_range(0..p.tuples.len());
        let values: Vec<&str> = p
            .slots
            .iter()
            .map(|&a| {
                let row = match p.template.connective {
                    Connective::And => shared,
                    Connective::Or => rng.random_range(0..p.tuples.len()),
                };
                let pos = p.base.tables.iter().position(|&t| t == a.table).expect("slot table listed");
                db.value(a, p.tuples[row][pos])
            })
            .collect();
        let keys: BTreeSet<String> = values.iter().map(|v| normalize(v)).collect();
        if keys.len() != values.len() {
            continue;
        }
        let question = p.template.fill(&values);
        if seen.contains(&normalize(&question)) {
            continue;
        }
        let tokens = tokenize_question(&question, &lexicon);
        if extract_value_set(&tokens, &lexicon) != keys {
            continue;
        }
        let gold = SqlQuery {
            conditions: p
                .slots
                .iter()
                .zip(&values)
                .map(|(&attr, v)| Condition {
                    attr,
                    value: v.to_string(),
                })
                .collect(),
            connectives: vec![p.template.connective; p.slots.len() - 1],
            ..p.base.clone()
        };
        let answer = execute(&gold, db);
        if answer.is_empty() {
            continue;
        }
        seen.insert(normalize(&question));
        *stats.per_template.entry(p.template.source.clone()).or_default() += 1;
        let ex = Example {
            question,
            answer,
            conditions: gold.conditions.len(),
            tables: gold.tables.len(),
            gold: Some(gold),
        };
        stats.multi_table += usize::from(ex.is_multi_table());
        stats.multi_condition += usize::from(ex.is_multi_condition());
        out.push(ex);
    }
    Ok((out, stats))
}

/// Part sizes for `n` items by largest remainder: floors of the exact
/// shares, then one extra item each to the largest fractional parts (ties go
/// to the larger fraction, then the earlier part). One item lands in the
/// largest part.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact = fractions.map(|f| f * n as f64);
    let mut sizes = exact.map(|x| (x + 1e-9) as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| {
        let (ri, rj) = (exact[i] - sizes[i] as f64, exact[j] - sizes[j] as f64);
        rj.partial_cmp(&ri)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(fractions[j].partial_cmp(&fractions[i]).unwrap_or(core::cmp::Ordering::Equal))
            .then(i.cmp(&j))
    });
    let mut left = n.saturating_sub(sizes.iter().sum());
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

/// Seeded shuffle, then consecutive parts of the given sizes.
pub fn split_by_sizes<T, R: Rng + ?Sized>(mut items: Vec<T>, sizes: [usize; 3], rng: &mut R) -> (Vec<T>, Vec<T>, Vec<T>) {
    assert!(sizes.iter().sum::<usize>() <= items.len(), "split sizes exceed the dataset");
    items.shuffle(rng);
    let mut it = items.into_iter();
    let a: Vec<T> = it.by_ref().take(sizes[0]).collect();
    let b: Vec<T> = it.by_ref().take(sizes[1]).collect();
    let c: Vec<T> = it.take(sizes[2]).collect();
    (a, b, c)
}

pub fn split<T, R: Rng + ?Sized>(items: Vec<T>, fractions: [f64; 3], rng: &mut R) -> (Vec<T>, Vec<T>, Vec<T>) {
    let sizes = split_sizes(items.len(), fractions);
    split_by_sizes(items, sizes, rng)
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::fixtures::{movie_db, movie_schema};
    use crate::seeded_rng;

    #[test]
    fn parses_templates() {
        let s = movie_schema();
        let ts = parse_templates(
            "# comment\n\nmovie.name :: movies in {movie.language} from {movie.year}\nactor.name or :: {actor.gender} or {actor.gender}\n",
            &s,
        )
        .unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[0].slot_count(), 2);
        assert_eq!(ts[0].connective, Connective::And);
        assert_eq!(ts[1].connective, Connective::Or);
        assert_eq!(ts[0].fill(&["Chinese", "2012"]), "movies in Chinese from 2012");
        assert_eq!(
            parse_templates("movie.name :: in {movie.area}", &s),
            Err(TemplateError::UnknownAttribute { line: 1, name: "movie.area".into() })
        );
        assert_eq!(parse_templates("movie.name :: nothing", &s), Err(TemplateError::NoPlaceholders { line: 1 }));
        assert_eq!(parse_templates("movie.name xor :: {movie.year}", &s), Err(TemplateError::Syntax { line: 1 }));
        assert!(matches!(parse_templates("movie.name :: {movie.year", &s), Err(TemplateError::Unterminated { .. })));
    }

    #[test]
    fn minimal_tables_bridge() {
        let s = movie_schema();
        let a = |n: &str| s.parse_attr(n).unwrap();
        assert_eq!(minimal_tables(&s, a("movie.name"), &[a("movie.year")]), Some(vec![0]));
        assert_eq!(minimal_tables(&s, a("movie.name"), &[a("actor.name")]), Some(vec![0, 1, 2]));
        assert_eq!(minimal_tables(&s, a("actor.name"), &[a("actor.gender")]), Some(vec![2]));
    }

    #[test]
    fn generates_faithful_examples() {
        let db = movie_db();
        let ts = parse_templates(
            "movie.name :: recommend some movies that are produced in {movie.language} in {movie.year}\n\
             movie.name :: movies acted by {actor.name}\n\
             movie.name or :: movies from {movie.year} or {movie.year}\n",
            db.schema(),
        )
        .unwrap();
        let (exs, stats) = generate_dataset(&db, &ts, 10, &mut seeded_rng(1)).unwrap();
        assert_eq!(exs.len(), 10);
        assert_eq!(stats.per_template.values().sum::<usize>(), 10);
        let mut qs = BTreeSet::new();
        for e in &exs {
            let gold = e.gold.as_ref().unwrap();
            assert_eq!(execute(gold, &db), e.answer);
            assert!(!e.answer.is_empty());
            assert_eq!(e.conditions, gold.conditions.len());
            assert_eq!(e.tables, gold.tables.len());
            assert!(qs.insert(e.question.clone()));
        }
        assert_eq!(stats.multi_table, exs.iter().filter(|e| e.is_multi_table()).count());
        let again = generate_dataset(&db, &ts, 10, &mut seeded_rng(1)).unwrap();
        assert_eq!(again.0, exs);
    }

    #[test]
    fn fig2_question_and_answer() {
        let db = movie_db();
        let ts = parse_templates(
            "movie.name :: recommend some movies that are produced in {movie.language} in {movie.year}",
            db.schema(),
        )
        .unwrap();
        let (exs, _) = generate_dataset(&db, &ts, 5, &mut seeded_rng(2)).unwrap();
        let e = exs.iter().find(|e| e.question.ends_with("Chinese in 2012")).expect("fixture has this pair");
        assert_eq!(e.question, "recommend some movies that are produced in Chinese in 2012");
        assert_eq!(e.answer, ResultSet::from_values(["Chinese Zodiac"]));
    }

    #[test]
    fn empty_request_and_exhaustion() {
        let db = movie_db();
        let ts = parse_templates("actor.name :: actors who are {actor.gender}", db.schema()).unwrap();
        assert!(generate_dataset(&db, &ts, 0, &mut seeded_rng(3)).unwrap().0.is_empty());
        assert!(matches!(
            generate_dataset(&db, &ts, 5, &mut seeded_rng(3)),
            Err(DatagenError::Exhausted { produced: 2, .. })
        ));
    }

    #[test]
    fn split_sizes_follow_fractions() {
        assert_eq!(split_sizes(10, DEFAULT_FRACTIONS), [8, 1, 1]);
        assert_eq!(split_sizes(1, DEFAULT_FRACTIONS), [1, 0, 0]);
        assert_eq!(split_sizes(0, DEFAULT_FRACTIONS), [0, 0, 0]);
        for n in 0..200 {
            let s = split_sizes(n, DEFAULT_FRACTIONS);
            assert_eq!(s.iter().sum::<usize>(), n);
            for (size, f) in s.iter().zip(DEFAULT_FRACTIONS) {
                assert!((*size as f64 - f * n as f64).abs() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn split_partitions_deterministically() {
        let items: Vec<u32> = (0..57).collect();
        let (a, b, c) = split(items.clone(), DEFAULT_FRACTIONS, &mut seeded_rng(9));
        let (a2, b2, c2) = split(items.clone(), DEFAULT_FRACTIONS, &mut seeded_rng(9));
        assert_eq!((&a, &b, &c), (&a2, &b2, &c2));
        let mut all: Vec<u32> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort();
        assert_eq!(all, items);
    }
}

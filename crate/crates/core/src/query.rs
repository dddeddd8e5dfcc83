//! The restricted SQL dialect produced by the decoder:
//!
//! ```text
//! select ATTR from TABLE (join TABLE)* where ATTR = VALUE ((and|or) ATTR = VALUE)* EOS
//! ```
//!
//! Join conditions are never emitted as tokens; they are derived from the
//! foreign keys by [`infer_join_predicates`].

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::schema::{AttrRef, Schema};
use crate::text::same_value;
use crate::vocab::{Keyword, EQ_TOKEN};

/// One token of a generated query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SqlToken {
    Keyword(Keyword),
    Eq,
    Table(usize),
    Attr(AttrRef),
    /// A value copied from the question.
    Value(String),
}

impl SqlToken {
    /// Classifies a token string: keywords, `=`, table and qualified
    /// attribute names are SQL tokens; anything else is a value.
    pub fn classify(s: &str, schema: &Schema) -> SqlToken {
        if let Some(k) = Keyword::parse(s) {
            SqlToken::Keyword(k)
        } else if s == EQ_TOKEN {
            SqlToken::Eq
        } else if let Some(t) = schema.table_index(s) {
            SqlToken::Table(t)
        } else if let Some(a) = schema.parse_attr(s) {
            SqlToken::Attr(a)
        } else {
            SqlToken::Value(s.to_string())
        }
    }

    pub fn render(&self, schema: &Schema) -> String {
        match self {
            SqlToken::Keyword(k) => k.as_str().into(),
            SqlToken::Eq => EQ_TOKEN.into(),
            SqlToken::Table(t) => schema.table_name(*t).into(),
            SqlToken::Attr(a) => schema.attr_name(*a),
            SqlToken::Value(v) => v.clone(),
        }
    }
}

pub fn classify_all<S: AsRef<str>>(tokens: &[S], schema: &Schema) -> Vec<SqlToken> {
    tokens
        .iter()
        .map(|t| SqlToken::classify(t.as_ref(), schema))
        .collect()
}

pub fn render_tokens(tokens: &[SqlToken], schema: &Schema) -> Vec<String> {
    tokens.iter().map(|t| t.render(schema)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Connective {
    And,
    Or,
}

impl Connective {
    pub fn keyword(self) -> Keyword {
        match self {
            Connective::And => Keyword::And,
            Connective::Or => Keyword::Or,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub attr: AttrRef,
    pub value: String,
}

impl Condition {
    pub fn same_as(&self, other: &Condition) -> bool {
        self.attr == other.attr && same_value(&self.value, &other.value)
    }
}

/// Equality between two attributes of joined tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JoinPredicate {
    pub left: AttrRef,
    pub right: AttrRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SqlQuery {
    pub select: AttrRef,
    pub tables: Vec<usize>,
    pub conditions: Vec<Condition>,
    /// `connectives[i]` joins `conditions[i]` and `conditions[i + 1]`.
    pub connectives: Vec<Connective>,
    /// Filled by [`SqlQuery::with_joins`]; empty straight out of the parser.
    pub joins: Vec<JoinPredicate>,
}

impl SqlQuery {
    /// Token sequence in the query's own table and condition order.
    pub fn to_tokens(&self) -> Vec<SqlToken> {
        let mut out = vec![
            SqlToken::Keyword(Keyword::Select),
            SqlToken::Attr(self.select),
            SqlToken::Keyword(Keyword::From),
        ];
        for (i, &t) in self.tables.iter().enumerate() {
            if i > 0 {
                out.push(SqlToken::Keyword(Keyword::Join));
            }
            out.push(SqlToken::Table(t));
        }
        out.push(SqlToken::Keyword(Keyword::Where));
        for (i, c) in self.conditions.iter().enumerate() {
            if i > 0 {
                out.push(SqlToken::Keyword(self.connectives[i - 1].keyword()));
            }
            out.push(SqlToken::Attr(c.attr));
            out.push(SqlToken::Eq);
            out.push(SqlToken::Value(c.value.clone()));
        }
        out.push(SqlToken::Keyword(Keyword::Eos));
        out
    }

    /// Reorders tables so the select attribute's owner comes first and every
    /// later table is FK-adjacent to an earlier one (breadth-first over the
    /// listed tables). Returns `None` when the listed tables are not
    /// FK-connected.
    pub fn canonicalize(&self, schema: &Schema) -> Option<SqlQuery> {
        let root = self.select.table;
        if !self.tables.contains(&root) {
            return None;
        }
        let mut order = vec![root];
        let mut queue = VecDeque::from([root]);
        while let Some(t) = queue.pop_front() {
            for &n in &self.tables {
                if !order.contains(&n) && schema.adjacent(t, n) {
                    order.push(n);
                    queue.push_back(n);
                }
            }
        }
        if order.len() != self.tables.len() {
            return None;
        }
        Some(SqlQuery {
            tables: order,
            joins: Vec::new(),
            ..self.clone()
        })
    }

    /// Copy of the query with join predicates derived from the foreign keys.
    pub fn with_joins(mut self, schema: &Schema) -> Result<Self, UnjoinableTables> {
        self.joins = infer_join_predicates(&self.tables, schema)?;
        Ok(self)
    }

    /// Same from-clause, only condition `i`.
    pub fn single_condition(&self, i: usize) -> Option<SqlQuery> {
        let c = self.conditions.get(i)?;
        Some(SqlQuery {
            conditions: vec![c.clone()],
            connectives: Vec::new(),
            ..self.clone()
        })
    }

    pub fn render(&self, schema: &Schema) -> String {
        render_tokens(&self.to_tokens(), schema).join(" ")
    }
}

/// What the parser wanted at the offending position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    Select,
    Attribute,
    From,
    Table,
    JoinOrWhere,
    Eq,
    Value,
    ConnectiveOrEos,
    EndOfInput,
    /// A table not already listed.
    NewTable,
    /// An attribute belonging to a listed table.
    ListedAttribute,
    /// A condition not already present.
    NewCondition,
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Expected::Select => "`select`",
            Expected::Attribute => "an attribute token",
            Expected::From => "`from`",
            Expected::Table => "a table token",
            Expected::JoinOrWhere => "`join` or `where`",
            Expected::Eq => "`=`",
            Expected::Value => "a value",
            Expected::ConnectiveOrEos => "`and`, `or` or `EOS`",
            Expected::EndOfInput => "end of input",
            Expected::NewTable => "a table not already listed",
            Expected::ListedAttribute => "an attribute of a listed table",
            Expected::NewCondition => "a condition not already present",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("grammar violation at token {position}: expected {expected}")]
pub struct GrammarViolation {
    pub position: usize,
    pub expected: Expected,
}

struct Cursor<'a> {
    tokens: &'a [SqlToken],
    pos: usize,
}

impl Cursor<'_> {
    fn fail<T>(&self, expected: Expected) -> Result<T, GrammarViolation> {
        Err(GrammarViolation {
            position: self.pos,
            expected,
        })
    }

    fn next(&mut self) -> Option<&SqlToken> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn keyword(&mut self, k: Keyword, expected: Expected) -> Result<(), GrammarViolation> {
        match self.tokens.get(self.pos) {
            Some(SqlToken::Keyword(x)) if *x == k => {
                self.pos += 1;
                Ok(())
            }
            _ => self.fail(expected),
        }
    }

    fn attr(&mut self) -> Result<AttrRef, GrammarViolation> {
        match self.tokens.get(self.pos) {
            Some(SqlToken::Attr(a)) => {
                self.pos += 1;
                Ok(*a)
            }
            _ => self.fail(Expected::Attribute),
        }
    }

    fn table(&mut self) -> Result<usize, GrammarViolation> {
        match self.tokens.get(self.pos) {
            Some(SqlToken::Table(t)) => {
                self.pos += 1;
                Ok(*t)
            }
            _ => self.fail(Expected::Table),
        }
    }
}

/// Parses a complete token sequence (including the trailing `EOS`) and checks
/// the structural invariants of [`SqlQuery`].
pub fn parse_tokens(tokens: &[SqlToken], _schema: &Schema) -> Result<SqlQuery, GrammarViolation> {
    let mut cur = Cursor { tokens, pos: 0 };
    cur.keyword(Keyword::Select, Expected::Select)?;
    let select = cur.attr()?;
    cur.keyword(Keyword::From, Expected::From)?;
    let mut tables = vec![cur.table()?];
    loop {
        match cur.tokens.get(cur.pos) {
            Some(SqlToken::Keyword(Keyword::Join)) => {
                cur.pos += 1;
                let t = cur.table()?;
                if tables.contains(&t) {
                    cur.pos -= 1;
                    return cur.fail(Expected::NewTable);
                }
                tables.push(t);
            }
            Some(SqlToken::Keyword(Keyword::Where)) => {
                cur.pos += 1;
                break;
            }
            _ => return cur.fail(Expected::JoinOrWhere),
        }
    }
    if !tables.contains(&select.table) {
        // report at the select attribute itself
        return Err(GrammarViolation {
            position: 1,
            expected: Expected::ListedAttribute,
        });
    }

    let mut conditions: Vec<Condition> = Vec::new();
    let mut connectives = Vec::new();
    loop {
        let attr_pos = cur.pos;
        let attr = cur.attr()?;
        if !tables.contains(&attr.table) {
            cur.pos = attr_pos;
            return cur.fail(Expected::ListedAttribute);
        }
        match cur.next() {
            Some(SqlToken::Eq) => {}
            _ => {
                cur.pos -= 1;
                return cur.fail(Expected::Eq);
            }
        }
        let value = match cur.next() {
            Some(SqlToken::Value(v)) => v.clone(),
            _ => {
                cur.pos -= 1;
                return cur.fail(Expected::Value);
            }
        };
        let cond = Condition { attr, value };
        if conditions.iter().any(|c| c.same_as(&cond)) {
            cur.pos -= 1;
            return cur.fail(Expected::NewCondition);
        }
        conditions.push(cond);
        match cur.next() {
            Some(SqlToken::Keyword(Keyword::And)) => connectives.push(Connective::And),
            Some(SqlToken::Keyword(Keyword::Or)) => connectives.push(Connective::Or),
            Some(SqlToken::Keyword(Keyword::Eos)) => break,
            _ => {
                cur.pos -= 1;
                return cur.fail(Expected::ConnectiveOrEos);
            }
        }
    }
    if cur.pos != tokens.len() {
        return cur.fail(Expected::EndOfInput);
    }
    Ok(SqlQuery {
        select,
        tables,
        conditions,
        connectives,
        joins: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("table `{table}` has no foreign key to any earlier table in the from-clause")]
pub struct UnjoinableTables {
    pub table: String,
}

/// One predicate per table after the first, linking it through a foreign key
/// to the earliest listed table it is adjacent to.
pub fn infer_join_predicates(
    tables: &[usize],
    schema: &Schema,
) -> Result<Vec<JoinPredicate>, UnjoinableTables> {
    let mut out = Vec::with_capacity(tables.len().saturating_sub(1));
    for (k, &t) in tables.iter().enumerate().skip(1) {
        let edge = tables[..k]
            .iter()
            .find_map(|&earlier| schema.edge_between(t, earlier))
            .ok_or_else(|| UnjoinableTables {
                table: schema.table_name(t).to_string(),
            })?;
        out.push(JoinPredicate {
            left: edge.from,
            right: edge.to,
        });
    }
    Ok(out)
}

impl fmt::Display for JoinPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}.{} = {}.{})",
            self.left.table, self.left.column, self.right.table, self.right.column
        )
    }
}

pub fn render_join(p: &JoinPredicate, schema: &Schema) -> String {
    format!("{} = {}", schema.attr_name(p.left), schema.attr_name(p.right))
}

//! Decoding grammar: a small state machine that yields, at every step, the
//! set of legal outputs over `V_SQL` plus the source positions.
//!
//! Accepted sequences always parse with [`crate::query::parse_tokens`], list
//! each table at most once, join every table to an earlier one through a
//! foreign key, and never repeat an `(attribute, value)` condition.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::query::SqlToken;
use crate::schema::{AttrRef, Schema};
use crate::vocab::{Keyword, TokenId, TokenSeq, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Start,
    AfterSelect,
    AfterSelectAttr,
    AfterFrom,
    AfterTable,
    AfterJoin,
    /// After `where` or after a connective.
    AfterWhere,
    AfterCondAttr,
    AfterEq,
    AfterValue,
    Done,
}

/// One decoder output: a `V_SQL` token or a copy of a source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Choice {
    Generate(TokenId),
    Copy(usize),
}

/// The part of the query a token belongs to, for reward assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// `select ... where`, the prefix `b`.
    Body,
    /// Attribute or `=` of a condition.
    CondAttr,
    /// A copied value.
    Value,
    /// `and` / `or`.
    Operator,
    Eos,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Body => "b",
            Role::CondAttr => "cond-attr",
            Role::Value => "value",
            Role::Operator => "operator",
            Role::Eos => "eos",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarState {
    pub phase: Phase,
    pub used_tables: Vec<usize>,
    /// `(attribute, normalized value)`, in emission order.
    pub used_conditions: Vec<(AttrRef, String)>,
    pub pending_attr: Option<AttrRef>,
    pub selected_attr: Option<AttrRef>,
    pub operator_count: usize,
}

impl GrammarState {
    pub fn initial() -> Self {
        GrammarState {
            phase: Phase::Start,
            used_tables: Vec::new(),
            used_conditions: Vec::new(),
            pending_attr: None,
            selected_attr: None,
            operator_count: 0,
        }
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }
}

impl Default for GrammarState {
    fn default() -> Self {
        Self::initial()
    }
}

/// Legality over `[V_SQL entries | source positions]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    bits: Vec<bool>,
    sql_len: usize,
}

impl Mask {
    pub fn new(sql_len: usize, source_len: usize) -> Self {
        Mask {
            bits: vec![false; sql_len + source_len],
            sql_len,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn sql_len(&self) -> usize {
        self.sql_len
    }

    pub fn get(&self, entry: usize) -> bool {
        self.bits[entry]
    }

    pub fn set(&mut self, entry: usize) {
        self.bits[entry] = true;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Indices of legal entries.
    pub fn legal(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn entry_of(&self, choice: Choice) -> usize {
        match choice {
            Choice::Generate(id) => id.0,
            Choice::Copy(j) => self.sql_len + j,
        }
    }

    pub fn choice_of(&self, entry: usize) -> Choice {
        if entry < self.sql_len {
            Choice::Generate(TokenId(entry))
        } else {
            Choice::Copy(entry - self.sql_len)
        }
    }

    pub fn allows(&self, choice: Choice) -> bool {
        let e = self.entry_of(choice);
        e < self.bits.len() && self.bits[e]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MaskConfig {
    /// Allow copying any source position, not only lexicon value chunks.
    pub loose_copy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("no legal continuation in phase {0:?}")]
    DeadEnd(Phase),
    #[error("token {token} is illegal in phase {phase:?}")]
    IllegalToken { phase: Phase, token: String },
}

/// Grammar context for decoding one question.
#[derive(Debug, Clone, Copy)]
pub struct GrammarMachine<'a> {
    pub schema: &'a Schema,
    pub vocab: &'a Vocabulary,
    pub source: &'a TokenSeq,
    pub config: MaskConfig,
    keys: &'a [String],
}

impl<'a> GrammarMachine<'a> {
    /// `keys` must hold the normalized text of each source token
    /// (see [`source_keys`]).
    pub fn new(
        schema: &'a Schema,
        vocab: &'a Vocabulary,
        source: &'a TokenSeq,
        keys: &'a [String],
        config: MaskConfig,
    ) -> Self {
        debug_assert_eq!(keys.len(), source.len());
        GrammarMachine {
            schema,
            vocab,
            source,
            config,
            keys,
        }
    }

    pub fn mask_len(&self) -> usize {
        self.vocab.sql_len() + self.source.len()
    }

    fn copyable(&self, j: usize) -> bool {
        self.config.loose_copy || self.source.get(j).is_value
    }

    fn legal_values(&self, state: &GrammarState, attr: AttrRef) -> impl Iterator<Item = usize> + '_ {
        let used: Vec<String> = state
            .used_conditions
            .iter()
            .filter(|(a, _)| *a == attr)
            .map(|(_, v)| v.clone())
            .collect();
        (0..self.source.len())
            .filter(move |&j| self.copyable(j) && !used.iter().any(|v| *v == self.keys[j]))
    }

    fn condition_attrs(&self, state: &GrammarState) -> Vec<AttrRef> {
        state
            .used_tables
            .iter()
            .flat_map(|&t| self.schema.attrs_of(t))
            .filter(|&a| self.legal_values(state, a).next().is_some())
            .collect()
    }

    fn joinable_tables(&self, state: &GrammarState) -> Vec<usize> {
        (0..self.schema.table_count())
            .filter(|t| !state.used_tables.contains(t))
            .filter(|&t| state.used_tables.iter().any(|&u| self.schema.adjacent(u, t)))
            .collect()
    }

    /// Legal entries for the next output.
    pub fn legal_mask(&self, state: &GrammarState) -> Result<Mask, GrammarError> {
        let v = self.vocab;
        let mut m = Mask::new(v.sql_len(), self.source.len());
        match state.phase {
            Phase::Start => m.set(v.keyword(Keyword::Select).0),
            Phase::AfterSelect => {
                for a in self.schema.attrs() {
                    m.set(v.attr_id(a).0);
                }
            }
            Phase::AfterSelectAttr => m.set(v.keyword(Keyword::From).0),
            Phase::AfterFrom => {
                if let Some(a) = state.selected_attr {
                    m.set(v.table_id(a.table).0);
                }
            }
            Phase::AfterTable => {
                if !self.joinable_tables(state).is_empty() {
                    m.set(v.keyword(Keyword::Join).0);
                }
                m.set(v.keyword(Keyword::Where).0);
            }
            Phase::AfterJoin => {
                for t in self.joinable_tables(state) {
                    m.set(v.table_id(t).0);
                }
            }
            Phase::AfterWhere => {
                for a in self.condition_attrs(state) {
                    m.set(v.attr_id(a).0);
                }
            }
            Phase::AfterCondAttr => m.set(v.eq_id().0),
            Phase::AfterEq => {
                if let Some(a) = state.pending_attr {
                    for j in self.legal_values(state, a) {
                        m.set(v.sql_len() + j);
                    }
                }
            }
            Phase::AfterValue => {
                if !self.condition_attrs(state).is_empty() {
                    m.set(v.keyword(Keyword::And).0);
                    m.set(v.keyword(Keyword::Or).0);
                }
                m.set(v.keyword(Keyword::Eos).0);
            }
            Phase::Done => {}
        }
        if m.count() == 0 {
            return Err(GrammarError::DeadEnd(state.phase));
        }
        Ok(m)
    }

    /// The query token a choice stands for.
    pub fn token_of(&self, choice: Choice) -> SqlToken {
        match choice {
            Choice::Copy(j) => SqlToken::Value(self.source.get(j).text.clone()),
            Choice::Generate(id) => {
                if let Some(k) = self.vocab.as_keyword(id) {
                    SqlToken::Keyword(k)
                } else if id == self.vocab.eq_id() {
                    SqlToken::Eq
                } else if let Some(t) = self.vocab.as_table(id) {
                    SqlToken::Table(t)
                } else if let Some(a) = self.vocab.as_attr(id) {
                    SqlToken::Attr(a)
                } else {
                    SqlToken::Value(self.vocab.token_of(id).into())
                }
            }
        }
    }

    /// Renders a choice for diagnostics.
    pub fn describe(&self, choice: Choice) -> String {
        match choice {
            Choice::Copy(j) => alloc::format!("copy[{}]={}", j, self.source.get(j).text),
            Choice::Generate(id) if id.0 < self.vocab.len() => self.vocab.token_of(id).into(),
            Choice::Generate(id) => alloc::format!("#{}", id.0),
        }
    }

    /// Applies a legal choice; returns the new state and the token's role.
    pub fn advance(
        &self,
        state: &GrammarState,
        choice: Choice,
    ) -> Result<(GrammarState, Role), GrammarError> {
        let legal = match self.legal_mask(state) {
            Ok(m) => m.allows(choice),
            Err(_) => false,
        };
        if !legal {
            return Err(GrammarError::IllegalToken {
                phase: state.phase,
                token: self.describe(choice),
            });
        }
        Ok(self.apply(state, choice))
    }

    fn apply(&self, state: &GrammarState, choice: Choice) -> (GrammarState, Role) {
        let mut next = state.clone();
        let token = self.token_of(choice);
        let role = match (state.phase, token) {
            (Phase::Start, _) => {
                next.phase = Phase::AfterSelect;
                Role::Body
            }
            (Phase::AfterSelect, SqlToken::Attr(a)) => {
                next.selected_attr = Some(a);
                next.phase = Phase::AfterSelectAttr;
                Role::Body
            }
            (Phase::AfterSelectAttr, _) => {
                next.phase = Phase::AfterFrom;
                Role::Body
            }
            (Phase::AfterFrom | Phase::AfterJoin, SqlToken::Table(t)) => {
                next.used_tables.push(t);
                next.phase = Phase::AfterTable;
                Role::Body
            }
            (Phase::AfterTable, SqlToken::Keyword(Keyword::Join)) => {
                next.phase = Phase::AfterJoin;
                Role::Body
            }
            (Phase::AfterTable, _) => {
                next.phase = Phase::AfterWhere;
                Role::Body
            }
            (Phase::AfterWhere, SqlToken::Attr(a)) => {
                next.pending_attr = Some(a);
                next.phase = Phase::AfterCondAttr;
                Role::CondAttr
            }
            (Phase::AfterCondAttr, _) => {
                next.phase = Phase::AfterEq;
                Role::CondAttr
            }
            (Phase::AfterEq, _) => {
                let j = match choice {
                    Choice::Copy(j) => j,
                    Choice::Generate(_) => unreachable!("mask admits only copies after `=`"),
                };
                let attr = next.pending_attr.take().expect("pending attribute after `=`");
                next.used_conditions.push((attr, self.keys[j].clone()));
                next.phase = Phase::AfterValue;
                Role::Value
            }
            (Phase::AfterValue, SqlToken::Keyword(Keyword::Eos)) => {
                next.phase = Phase::Done;
                Role::Eos
            }
            (Phase::AfterValue, _) => {
                next.operator_count += 1;
                next.phase = Phase::AfterWhere;
                Role::Operator
            }
            (phase, _) => unreachable!("legal choice in phase {phase:?}"),
        };
        (next, role)
    }
}

/// Normalized text of each source token, as the grammar compares values.
pub fn source_keys(source: &TokenSeq) -> Vec<String> {
    source.iter().map(|t| t.key()).collect()
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

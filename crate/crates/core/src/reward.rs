//! Point-wise rewards: a coverage term on copied values, connectives and
//! `EOS`, an execution term on the query body and condition attributes, and
//! their per-token combination.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::exec::{execute, execute_single_condition, ResultSet};
use crate::grammar::Role;
use crate::query::{parse_tokens, SqlQuery, SqlToken};
use crate::schema::Database;
use crate::text::normalize;
use crate::vocab::Keyword;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RewardError {
    #[error("the question has no detected values")]
    EmptyValueSet,
    #[error("token {index} ({role}) has no reward from its designated source")]
    MissingRole { index: usize, role: &'static str },
    #[error("{tokens} tokens but {roles} roles")]
    LengthMismatch { tokens: usize, roles: usize },
}

/// Reward for the tokens a term covers; `None` elsewhere.
pub type PartialReward = Vec<Option<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector {
    pub values: Vec<f64>,
    pub roles: Vec<Role>,
}

impl RewardVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn all_positive_one(&self) -> bool {
        self.values.iter().all(|&r| r == 1.0)
    }

    /// Aligned `token reward role` columns, one token per line.
    pub fn dump(&self, tokens: &[String]) -> String {
        let width = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(0);
        let mut out = String::new();
        for ((t, r), role) in tokens.iter().zip(&self.values).zip(&self.roles) {
            let _ = writeln!(out, "{t:<width$}  {r:>+8.4}  {}", role.as_str());
        }
        out
    }
}

fn check_lengths(tokens: &[SqlToken], roles: &[Role]) -> Result<(), RewardError> {
    if tokens.len() != roles.len() {
        return Err(RewardError::LengthMismatch {
            tokens: tokens.len(),
            roles: roles.len(),
        });
    }
    Ok(())
}

/// Coverage reward over value, operator and `EOS` tokens. `values` holds the
/// normalized value set of the question.
pub fn coverage_reward(
    tokens: &[SqlToken],
    roles: &[Role],
    values: &BTreeSet<String>,
) -> Result<PartialReward, RewardError> {
    check_lengths(tokens, roles)?;
    if values.is_empty() {
        return Err(RewardError::EmptyValueSet);
    }
    let k = values.len();
    let n_ops = roles.iter().filter(|&&r| r == Role::Operator).count();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut l = 0;
    let mut out = vec![None; tokens.len()];
    for (i, (tok, role)) in tokens.iter().zip(roles).enumerate() {
        out[i] = match role {
            Role::Value => {
                let key = match tok {
                    SqlToken::Value(v) => normalize(v),
                    _ => String::new(),
                };
                if values.contains(&key) && seen.insert(key) {
                    Some(1.0)
                } else {
                    Some(-1.0)
                }
            }
            Role::Operator => {
                l += 1;
                // l < k implies k ≥ 2, so the division is safe
                Some(match l.cmp(&k) {
                    core::cmp::Ordering::Less => 1.0 / (k - 1) as f64,
                    core::cmp::Ordering::Equal => -1.0,
                    core::cmp::Ordering::Greater => 0.0,
                })
            }
            Role::Eos => Some(match n_ops.cmp(&(k - 1)) {
                core::cmp::Ordering::Less => -1.0,
                core::cmp::Ordering::Equal => 1.0,
                core::cmp::Ordering::Greater => 0.0,
            }),
            Role::Body | Role::CondAttr => None,
        };
    }
    Ok(out)
}

/// The query formed by the complete conditions of a (possibly truncated)
/// token sequence, with join predicates filled in.
pub fn complete_prefix_query(tokens: &[SqlToken], roles: &[Role], db: &Database) -> Option<SqlQuery> {
    let last_value = roles.iter().rposition(|&r| r == Role::Value)?;
    let mut prefix = tokens[..=last_value].to_vec();
    prefix.push(SqlToken::Keyword(Keyword::Eos));
    parse_tokens(&prefix, db.schema()).ok()?.with_joins(db.schema()).ok()
}

/// Execution reward over body, condition-attribute and operator tokens.
///
/// Tokens past the last complete condition of a truncated sequence (a
/// dangling attribute, `=` or connective) get −1; if no condition is
/// complete, every covered token gets −1.
pub fn execution_reward(
    tokens: &[SqlToken],
    roles: &[Role],
    db: &Database,
    answer: &ResultSet,
) -> Result<PartialReward, RewardError> {
    check_lengths(tokens, roles)?;
    let mut out: PartialReward = roles
        .iter()
        .map(|r| match r {
            Role::Body | Role::CondAttr | Role::Operator => Some(-1.0),
            Role::Value | Role::Eos => None,
        })
        .collect();
    let Some(query) = complete_prefix_query(tokens, roles, db) else {
        return Ok(out);
    };
    let n = query.conditions.len();
    let matched = execute(&query, db) == *answer;
    let hits: Vec<bool> = if matched {
        Vec::new()
    } else {
        (0..n)
            .map(|i| {
                execute_single_condition(&query, i, db)
                    .map(|r| r.intersects(answer))
                    .unwrap_or(false)
            })
            .collect()
    };

    // condition index a token belongs to = number of values emitted before it
    let mut cond = 0;
    let mut ops = 0;
    for (i, role) in roles.iter().enumerate() {
        out[i] = match role {
            Role::Body => Some(if matched { 1.0 } else { -1.0 }),
            Role::CondAttr if cond < n => Some(if matched || hits[cond] { 1.0 } else { -1.0 }),
            Role::Operator => {
                ops += 1;
                // an operator is complete when the condition after it is
                if ops < n {
                    Some(if matched { 1.0 } else { 0.0 })
                } else {
                    Some(-1.0)
                }
            }
            Role::Value => {
                cond += 1;
                None
            }
            Role::CondAttr => Some(-1.0),
            Role::Eos => None,
        };
    }
    Ok(out)
}

/// Values and `EOS` from coverage, body and condition attributes from
/// execution, operators from the smaller of the two.
pub fn combine(coverage: &PartialReward, execution: &PartialReward, roles: &[Role]) -> Result<RewardVector, RewardError> {
    let mut values = Vec::with_capacity(roles.len());
    for (i, &role) in roles.iter().enumerate() {
        let c = coverage.get(i).copied().flatten();
        let e = execution.get(i).copied().flatten();
        let r = match role {
            Role::Value | Role::Eos => c,
            Role::Body | Role::CondAttr => e,
            Role::Operator => c.zip(e).map(|(c, e)| c.min(e)),
        };
        values.push(r.ok_or(RewardError::MissingRole {
            index: i,
            role: role.as_str(),
        })?);
    }
    Ok(RewardVector {
        values,
        roles: roles.to_vec(),
    })
}

/// Full reward for one decoded sequence.
pub fn compute_rewards(
    tokens: &[SqlToken],
    roles: &[Role],
    values: &BTreeSet<String>,
    db: &Database,
    answer: &ResultSet,
) -> Result<RewardVector, RewardError> {
    let c = coverage_reward(tokens, roles, values)?;
    let e = execution_reward(tokens, roles, db, answer)?;
    combine(&c, &e, roles)
}

/// One-line summary used in debug logs.
pub fn summarize(r: &RewardVector) -> String {
    let total: f64 = r.values.iter().sum();
    format!("{} tokens, total reward {:+.3}", r.len(), total)
}

//! Test-side oracles written against plain strings: a cross-product query
//! evaluator and a word-level transcription of the two reward procedures.
//! Nothing here calls into the executor or the reward module.

use std::collections::BTreeSet;

pub fn norm(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_ascii_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

pub struct NaiveTable {
    pub name: String,
    pub columns: Vec<String>,
    /// Cells already normalized.
    pub rows: Vec<Vec<String>>,
}

pub struct NaiveDb {
    pub tables: Vec<NaiveTable>,
    /// `("child.col", "parent.col")` pairs.
    pub fks: Vec<(String, String)>,
}

/// A query spelled out as attribute names and raw values.
#[derive(Debug, Clone)]
pub struct NaiveQuery {
    pub select: String,
    pub tables: Vec<String>,
    pub preds: Vec<(String, String)>,
    pub conds: Vec<(String, String)>,
    /// `"and"` / `"or"`, one fewer than `conds`.
    pub ops: Vec<String>,
}

impl NaiveDb {
    pub fn new(tables: Vec<(String, Vec<String>, Vec<Vec<String>>)>, fks: Vec<(String, String)>) -> Self {
        NaiveDb {
            tables: tables
                .into_iter()
                .map(|(name, columns, rows)| NaiveTable {
                    name,
                    columns,
                    rows: rows.iter().map(|r| r.iter().map(|c| norm(c)).collect()).collect(),
                })
                .collect(),
            fks,
        }
    }

    fn table(&self, name: &str) -> &NaiveTable {
        self.tables.iter().find(|t| t.name == name).unwrap_or_else(|| panic!("no table {name}"))
    }

    pub fn is_fk(&self, a: &str, b: &str) -> bool {
        self.fks.iter().any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    }

    /// Every FK edge with both ends among `tables`.
    pub fn fk_preds(&self, tables: &[String]) -> Vec<(String, String)> {
        let listed = |attr: &str| tables.iter().any(|t| attr.split('.').next() == Some(t.as_str()));
        self.fks.iter().filter(|(a, b)| listed(a) && listed(b)).cloned().collect()
    }

    /// Walks every combination of rows of the listed tables; a combination
    /// survives if all predicates hold and the condition expression (`and`
    /// before `or`) is true.
    pub fn execute(&self, q: &NaiveQuery) -> BTreeSet<String> {
        let ts: Vec<&NaiveTable> = q.tables.iter().map(|n| self.table(n)).collect();
        let locate = |attr: &str| -> (usize, usize) {
            let (t, c) = attr.split_once('.').expect("qualified attribute");
            let tp = q.tables.iter().position(|x| x == t).expect("table listed");
            let cp = ts[tp].columns.iter().position(|x| x == c).expect("column exists");
            (tp, cp)
        };
        let sel = locate(&q.select);
        let preds: Vec<((usize, usize), (usize, usize))> = q.preds.iter().map(|(a, b)| (locate(a), locate(b))).collect();
        let conds: Vec<((usize, usize), String)> = q.conds.iter().map(|(a, v)| (locate(a), norm(v))).collect();
        let mut groups: Vec<Vec<usize>> = vec![vec![0]];
        for (i, op) in q.ops.iter().enumerate() {
            match op.as_str() {
                "and" => groups.last_mut().unwrap().push(i + 1),
                "or" => groups.push(vec![i + 1]),
                other => panic!("operator {other}"),
            }
        }

        let mut out = BTreeSet::new();
        if ts.iter().any(|t| t.rows.is_empty()) {
            return out;
        }
        let mut idx = vec![0usize; ts.len()];
        loop {
            let cell = |(t, c): (usize, usize)| ts[t].rows[idx[t]][c].as_str();
            let joined = preds.iter().all(|&(a, b)| cell(a) == cell(b));
            if joined {
                let holds = |i: usize| cell(conds[i].0) == conds[i].1;
                if conds.is_empty() || groups.iter().any(|g| g.iter().all(|&i| holds(i))) {
                    out.insert(cell(sel).to_string());
                }
            }
            let mut k = ts.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < ts[k].rows.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// Partial and combined rewards for one word sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRewards {
    pub coverage: Vec<Option<f64>>,
    pub execution: Vec<Option<f64>>,
    pub combined: Vec<f64>,
    /// Whether the full query's result equals the answer.
    pub matched: bool,
}

/// `words` is the generated sequence (ending in `EOS`), `copied[i]` marks
/// words taken from the source, `u` the normalized value set.
pub fn rewards(
    words: &[String],
    copied: &[bool],
    u: &BTreeSet<String>,
    answer: &BTreeSet<String>,
    db: &NaiveDb,
) -> OracleRewards {
    let n = words.len();
    let k = u.len() as f64;
    let where_pos = words.iter().position(|w| w == "where").expect("where");
    let ops: Vec<usize> = (where_pos + 1..n)
        .filter(|&i| !copied[i] && (words[i] == "and" || words[i] == "or"))
        .collect();
    let eos = n - 1;
    assert_eq!(words[eos], "EOS");

    // coverage
    let mut rc: Vec<Option<f64>> = vec![None; n];
    let mut seen = BTreeSet::new();
    for i in 0..n {
        if copied[i] {
            let w = norm(&words[i]);
            if u.contains(&w) && !seen.contains(&w) {
                rc[i] = Some(1.0);
                seen.insert(w);
            } else {
                rc[i] = Some(-1.0);
            }
        }
    }
    for (l0, &i) in ops.iter().enumerate() {
        let l = (l0 + 1) as f64;
        rc[i] = Some(if l < k {
            1.0 / (k - 1.0)
        } else if l == k {
            -1.0
        } else {
            0.0
        });
    }
    let n_op = ops.len() as f64;
    rc[eos] = Some(if n_op < k - 1.0 {
        -1.0
    } else if n_op == k - 1.0 {
        1.0
    } else {
        0.0
    });

    // execution: segment by `where` and operators
    let b: Vec<usize> = (0..=where_pos).collect();
    let mut bounds = vec![where_pos];
    bounds.extend(&ops);
    bounds.push(eos);
    let clauses: Vec<Vec<usize>> = bounds.windows(2).map(|w| (w[0] + 1..w[1]).collect()).collect();
    for c in &clauses {
        assert_eq!(c.len(), 3, "clause is attribute = value");
        assert_eq!(words[c[1]], "=");
    }
    let c_prime: Vec<Vec<usize>> = clauses.iter().map(|c| c[..2].to_vec()).collect();

    let select = words[1].clone();
    let mut tables = vec![words[3].clone()];
    let mut i = 4;
    while words[i] == "join" {
        tables.push(words[i + 1].clone());
        i += 2;
    }
    assert_eq!(i, where_pos);
    let preds = db.fk_preds(&tables);
    let conds: Vec<(String, String)> = clauses.iter().map(|c| (words[c[0]].clone(), words[c[2]].clone())).collect();
    let query = NaiveQuery {
        select,
        tables,
        preds,
        conds: conds.clone(),
        ops: ops.iter().map(|&i| words[i].clone()).collect(),
    };
    let res = db.execute(&query);
    let matched = res == *answer;

    let mut re: Vec<Option<f64>> = vec![None; n];
    if matched {
        for &i in b.iter().chain(c_prime.iter().flatten()).chain(&ops) {
            re[i] = Some(1.0);
        }
    } else {
        for &i in &b {
            re[i] = Some(-1.0);
        }
        for &i in &ops {
            re[i] = Some(0.0);
        }
        for (ci, cond) in conds.iter().enumerate() {
            let qi = NaiveQuery {
                conds: vec![cond.clone()],
                ops: Vec::new(),
                ..query.clone()
            };
            let hit = !db.execute(&qi).is_disjoint(answer);
            for &i in &c_prime[ci] {
                re[i] = Some(if hit { 1.0 } else { -1.0 });
            }
        }
    }

    let combined = (0..n)
        .map(|i| {
            if ops.contains(&i) {
                rc[i].unwrap().min(re[i].unwrap())
            } else {
                match (rc[i], re[i]) {
                    (Some(c), None) => c,
                    (None, Some(e)) => e,
                    other => panic!("word {i} `{}` covered by {other:?}", words[i]),
                }
            }
        })
        .collect();
    OracleRewards {
        coverage: rc,
        execution: re,
        combined,
        matched,
    }
}

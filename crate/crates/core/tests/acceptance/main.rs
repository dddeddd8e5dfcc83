//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Set `ACCEPTANCE_ONLY=1,4` to run a subset.

mod naive;
mod regimes;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::Rng;
use sqlgen_core::datagen::{generate_dataset, parse_templates, synthetic};
use sqlgen_core::model::{
    decode_sample, loss_and_gradients, sequence_logprob, step_distribution, teacher_force, Dims, EncoderOutput,
    EpisodeEnd, ModelParams, TENSOR_NAMES,
};
use sqlgen_core::query::{Condition, Connective};
use sqlgen_core::reward::{combine, coverage_reward, execution_reward};
use sqlgen_core::schema::{table, ColumnKind, TableDef};
use sqlgen_core::train::{prepare, Item, Task, TrainMode};
use sqlgen_core::vocab::{tokenize_question, LexiconOptions, ValueLexicon, Vocabulary};
use sqlgen_core::{
    execute, parse_tokens, seeded_rng, AttrRef, Choice, Database, GrammarMachine, GrammarState, Mask, MaskConfig,
    ResultSet, Schema, SeededRng, SqlQuery,
};

use naive::{norm, NaiveDb, NaiveQuery};
use regimes::{run, Regime, Run};

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        ok,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ---------------------------------------------------------------- 1

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

/// Worst relative error between the analytic gradient of
/// `-Σ w_t log p_t` and central differences along fixed choices.
fn fd_worst(p: &ModelParams, m: &GrammarMachine<'_>, choices: &[Choice], w: &[f64]) -> f64 {
    let ep = teacher_force(p, m, choices).expect("choices are legal");
    let (loss, grads) = loss_and_gradients(p, &ep, w);
    let direct: f64 = -w.iter().zip(&ep.logprobs).map(|(a, b)| a * b).sum::<f64>();
    assert!((loss - direct).abs() <= 1e-12 * (1.0 + direct.abs()), "loss {loss} vs {direct}");

    let h = 1e-5;
    let mut q = p.clone();
    let mut worst: f64 = 0.0;
    for ti in 0..TENSOR_NAMES.len() {
        for k in 0..p.tensors()[ti].data.len() {
            let orig = p.tensors()[ti].data[k];
            q.tensors_mut()[ti].data[k] = orig + h;
            let up = sequence_logprob(&q, m, choices).unwrap();
            q.tensors_mut()[ti].data[k] = orig - h;
            let down = sequence_logprob(&q, m, choices).unwrap();
            q.tensors_mut()[ti].data[k] = orig;
            let numeric = -up.iter().zip(&down).zip(w).map(|((u, d), w)| w * (u - d)).sum::<f64>() / (2.0 * h);
            worst = worst.max(rel_err(grads.tensors()[ti].data[k], numeric));
        }
    }
    worst
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let corpus = synthetic::hard(11);
    let db = &corpus.db;
    let templates = parse_templates(corpus.templates, db.schema()).unwrap();
    let (examples, _) = generate_dataset(db, &templates, 40, &mut seeded_rng(11)).unwrap();
    let lexicon = ValueLexicon::build(db, LexiconOptions::default());
    let items = prepare(&examples, &lexicon);
    let (vocab, _) = Vocabulary::build(db.schema(), items.iter().map(|i| &i.source));
    let task = Task {
        db,
        vocab: &vocab,
        lexicon: &lexicon,
        mask: MaskConfig::default(),
    };
    let dims = Dims {
        embed: 4,
        enc_hidden: 3,
        dec_hidden: 5,
    };
    let (mut worst_rl, mut worst_sup) = (0.0f64, 0.0f64);
    let seeds = 20u64;
    for seed in 0..seeds {
        let item = &items[(seed as usize * 7) % items.len()];
        let mut rng = seeded_rng(100 + seed);
        let p = ModelParams::init_uniform(dims, vocab.len(), vocab.sql_len(), 0.5, &mut rng);
        let m = task.machine(item);

        let ep = decode_sample(&p, &m, 0.5, &mut rng, 40);
        let r = sqlgen_core::reward::compute_rewards(&ep.tokens, &ep.roles, &item.values, db, item.answer()).unwrap();
        worst_rl = worst_rl.max(fd_worst(&p, &m, &ep.choices, &r.values));

        let gold = task.gold_choices(item).unwrap().unwrap();
        worst_sup = worst_sup.max(fd_worst(&p, &m, &gold, &vec![1.0; gold.len()]));
    }
    let elapsed = start.elapsed();
    let ok = worst_rl < 1e-4 && worst_sup < 1e-4 && elapsed < Duration::from_secs(60);
    verdict(
        ok,
        format!(
            "gradient check, {seeds} seeds, dims 4/3/5: worst rel err rl {worst_rl:.2e}, supervised {worst_sup:.2e} (< 1e-4) in {}",
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 2

/// Compensated sum.
fn neumaier(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut worst_sum: f64 = 0.0;
    let mut worst_diff: f64 = 0.0;
    let mut masked_nonzero = 0usize;
    for inst in 0..1000u64 {
        let mut rng = seeded_rng(5000 + inst);
        let dims = Dims {
            embed: 3,
            enc_hidden: rng.random_range(1..=8),
            dec_hidden: rng.random_range(1..=12),
        };
        let sql_len = rng.random_range(1..=30);
        let src_len = rng.random_range(0..=12);
        let scale = [0.08, 0.5, 2.0][(inst % 3) as usize];
        let p = ModelParams::init_uniform(dims, 6, sql_len, scale, &mut rng);
        let states: Vec<Vec<f64>> = (0..src_len)
            .map(|_| (0..2 * dims.enc_hidden).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let enc = EncoderOutput::from_states(&p, states.clone());
        let s: Vec<f64> = (0..dims.dec_hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        let density: f64 = rng.random_range(0.05..1.0);
        let mut mask = Mask::new(sql_len, src_len);
        for e in 0..sql_len + src_len {
            if rng.random::<f64>() < density {
                mask.set(e);
            }
        }
        if mask.count() == 0 {
            mask.set(rng.random_range(0..sql_len + src_len));
        }

        let dist = step_distribution(&p, &s, &enc, &mask);

        // direct evaluation of the generate and copy scores
        let ds = dims.dec_hidden;
        let score = |e: usize| -> f64 {
            if e < sql_len {
                neumaier((0..ds).map(|k| p.out.data[e * ds + k] * s[k]))
            } else {
                let h = &states[e - sql_len];
                neumaier((0..ds).map(|k| {
                    let pre = neumaier((0..h.len()).map(|m| h[m] * p.copy.data[m * ds + k]));
                    s[k] / (1.0 + (-pre).exp())
                }))
            }
        };
        let legal: Vec<usize> = (0..sql_len + src_len).filter(|&e| mask.get(e)).collect();
        let scores: Vec<f64> = legal.iter().map(|&e| score(e)).collect();
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z = neumaier(scores.iter().map(|x| (x - top).exp()));
        let mut expected = vec![0.0; sql_len + src_len];
        for (&e, x) in legal.iter().zip(&scores) {
            expected[e] = (x - top).exp() / z;
        }

        worst_sum = worst_sum.max((dist.probs.iter().sum::<f64>() - 1.0).abs());
        for e in 0..sql_len + src_len {
            if !mask.get(e) && dist.probs[e] != 0.0 {
                masked_nonzero += 1;
            }
            worst_diff = worst_diff.max((dist.probs[e] - expected[e]).abs());
        }
    }
    let ok = worst_sum <= 1e-9 && masked_nonzero == 0 && worst_diff <= 1e-10;
    verdict(
        ok,
        format!(
            "step distribution, 1000 instances: |sum-1| max {worst_sum:.1e}, masked nonzero {masked_nonzero}, max diff vs direct {worst_diff:.1e} in {}",
            secs(start.elapsed())
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let corpus = synthetic::hard(5);
    let db = &corpus.db;
    let schema = db.schema();
    let templates = parse_templates(corpus.templates, schema).unwrap();
    let (examples, _) = generate_dataset(db, &templates, 200, &mut seeded_rng(5)).unwrap();
    let lexicon = ValueLexicon::build(db, LexiconOptions::default());
    let items = prepare(&examples, &lexicon);
    let (vocab, _) = Vocabulary::build(schema, items.iter().map(|i| &i.source));
    let task = Task {
        db,
        vocab: &vocab,
        lexicon: &lexicon,
        mask: MaskConfig::default(),
    };
    // long enough that no episode is cut off: at most 7 attributes × 2
    // values conditions of 4 tokens plus the body
    let max_len = 128;
    let (mut total, mut unfinished, mut unparsed, mut dup_tables, mut dup_conds) = (0, 0, 0, 0, 0);
    let mut rng = seeded_rng(77);
    let mut params = None;
    for (k, eps) in [0.0, 0.3, 1.0].into_iter().enumerate() {
        let n = if k == 0 { 3334 } else { 3333 };
        for i in 0..n {
            if i % 50 == 0 {
                let scale = [0.08, 0.5, 1.5][(i / 50) % 3];
                params = Some(ModelParams::init_uniform(Dims::default(), vocab.len(), vocab.sql_len(), scale, &mut rng));
            }
            let p = params.as_ref().unwrap();
            let item = &items[rng.random_range(0..items.len())];
            let ep = decode_sample(p, &task.machine(item), eps, &mut rng, max_len);
            total += 1;
            if ep.end != EpisodeEnd::Complete {
                unfinished += 1;
                continue;
            }
            let Ok(q) = parse_tokens(&ep.tokens, schema) else {
                unparsed += 1;
                continue;
            };
            if q.tables.iter().collect::<BTreeSet<_>>().len() != q.tables.len() {
                dup_tables += 1;
            }
            let conds: BTreeSet<(AttrRef, String)> = q.conditions.iter().map(|c| (c.attr, norm(&c.value))).collect();
            if conds.len() != q.conditions.len() {
                dup_conds += 1;
            }
        }
    }
    let ok = total >= 10_000 && unfinished == 0 && unparsed == 0 && dup_tables == 0 && dup_conds == 0;
    verdict(
        ok,
        format!(
            "grammatical decoding, {total} episodes at eps 0/0.3/1: unfinished {unfinished}, unparsed {unparsed}, duplicate tables {dup_tables}, duplicate conditions {dup_conds} in {}",
            secs(start.elapsed())
        ),
    )
}

// ---------------------------------------------------------------- 4

struct Toy {
    db: Database,
    naive: NaiveDb,
}

fn toy_movies() -> Toy {
    use ColumnKind::*;
    let defs: Vec<TableDef> = vec![
        table("movie", &[("name", Text), ("year", Number)], Some("name"), &[]),
        table(
            "movie_actor",
            &[("movie_name", Text), ("actor_name", Text)],
            None,
            &[("movie_name", "movie", "name"), ("actor_name", "actor", "name")],
        ),
        table("actor", &[("name", Text), ("birthplace", Text)], Some("name"), &[]),
    ];
    let rows: Vec<Vec<Vec<&str>>> = vec![
        vec![
            vec!["Silent Harbor", "2001"],
            vec!["Golden Field", "2001"],
            vec!["Iron Gate", "2005"],
            vec!["Quiet River", "1999"],
        ],
        vec![
            vec!["Silent Harbor", "Jackie Chan"],
            vec!["Iron Gate", "Jackie Chan"],
            vec!["Golden Field", "Anna Lee"],
            vec!["Silent Harbor", "Anna Lee"],
            vec!["Quiet River", "Mark Stone"],
        ],
        vec![
            vec!["Jackie Chan", "Hong Kong"],
            vec!["Anna Lee", "Seoul"],
            vec!["Mark Stone", "Boston"],
        ],
    ];
    let owned: Vec<Vec<Vec<String>>> = rows
        .iter()
        .map(|t| t.iter().map(|r| r.iter().map(|c| c.to_string()).collect()).collect())
        .collect();
    let naive = NaiveDb::new(
        vec![
            ("movie".into(), vec!["name".into(), "year".into()], owned[0].clone()),
            ("movie_actor".into(), vec!["movie_name".into(), "actor_name".into()], owned[1].clone()),
            ("actor".into(), vec!["name".into(), "birthplace".into()], owned[2].clone()),
        ],
        vec![
            ("movie_actor.movie_name".into(), "movie.name".into()),
            ("movie_actor.actor_name".into(), "actor.name".into()),
        ],
    );
    let db = Database::new(Schema::new(defs).unwrap(), owned).unwrap();
    Toy { db, naive }
}

fn enumerate(m: &GrammarMachine<'_>, max_len: usize) -> Vec<Vec<Choice>> {
    fn go(m: &GrammarMachine<'_>, s: GrammarState, prefix: &mut Vec<Choice>, max_len: usize, out: &mut Vec<Vec<Choice>>) {
        if s.is_done() {
            out.push(prefix.clone());
            return;
        }
        if prefix.len() == max_len {
            return;
        }
        let Ok(mask) = m.legal_mask(&s) else { return };
        for e in mask.legal().collect::<Vec<_>>() {
            let c = mask.choice_of(e);
            let (next, _) = m.advance(&s, c).unwrap();
            prefix.push(c);
            go(m, next, prefix, max_len, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(m, GrammarState::initial(), &mut Vec::new(), max_len, &mut out);
    out
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let toy = toy_movies();
    let db = &toy.db;
    let schema = db.schema();
    let question = "movies acted by Jackie Chan in 2001";
    let u: BTreeSet<String> = ["Jackie Chan", "2001"].iter().map(|v| norm(v)).collect();

    let answer_query = NaiveQuery {
        select: "movie.name".into(),
        tables: vec!["movie".into(), "movie_actor".into()],
        preds: toy.naive.fk_preds(&["movie".into(), "movie_actor".into()]),
        conds: vec![
            ("movie_actor.actor_name".into(), "Jackie Chan".into()),
            ("movie.year".into(), "2001".into()),
        ],
        ops: vec!["and".into()],
    };
    let answer = toy.naive.execute(&answer_query);
    assert_eq!(answer, BTreeSet::from(["silent harbor".to_string()]));

    let lexicon = ValueLexicon::build(db, LexiconOptions::default());
    let example = sqlgen_core::datagen::Example {
        question: question.into(),
        answer: ResultSet::from_values(["Silent Harbor"]),
        gold: None,
        conditions: 2,
        tables: 2,
    };
    let item = Item::new(example, &lexicon);
    assert_eq!(item.values, u, "lexicon finds exactly the two values");
    let source = tokenize_question(question, &lexicon);
    let (vocab, _) = Vocabulary::build(schema, [&source]);
    let m = GrammarMachine::new(schema, &vocab, &item.source, &item.keys, MaskConfig::default());

    let all = enumerate(&m, 20);
    let (mut cov_mismatch, mut exe_mismatch, mut comb_mismatch) = (0, 0, 0);
    let (mut all_one, mut correct, mut disagree, mut above_one) = (0, 0, 0, 0);
    for choices in &all {
        let mut state = GrammarState::initial();
        let mut roles = Vec::new();
        for &c in choices {
            let (next, role) = m.advance(&state, c).unwrap();
            roles.push(role);
            state = next;
        }
        let tokens: Vec<_> = choices.iter().map(|&c| m.token_of(c)).collect();
        let words: Vec<String> = tokens.iter().map(|t| t.render(schema)).collect();
        let copied: Vec<bool> = choices.iter().map(|c| matches!(c, Choice::Copy(_))).collect();

        let lib_c = coverage_reward(&tokens, &roles, &item.values).unwrap();
        let lib_e = execution_reward(&tokens, &roles, db, item.answer()).unwrap();
        let lib = combine(&lib_c, &lib_e, &roles).unwrap();
        let oracle = naive::rewards(&words, &copied, &u, &answer, &toy.naive);
        cov_mismatch += usize::from(lib_c != oracle.coverage);
        exe_mismatch += usize::from(lib_e != oracle.execution);
        comb_mismatch += usize::from(lib.values != oracle.combined);

        above_one += usize::from(oracle.combined.iter().any(|&r| r > 1.0));
        let ones = oracle.combined.iter().all(|&r| r == 1.0);
        let copies: Vec<String> = (0..words.len()).filter(|&i| copied[i]).map(|i| norm(&words[i])).collect();
        let n_ops = (0..words.len())
            .filter(|&i| !copied[i] && (words[i] == "and" || words[i] == "or"))
            .count();
        let each_once = copies.len() == u.len() && copies.iter().cloned().collect::<BTreeSet<_>>() == u;
        let is_correct = oracle.matched && each_once && n_ops == u.len() - 1;
        all_one += usize::from(ones);
        correct += usize::from(is_correct);
        disagree += usize::from(ones != is_correct);
    }
    let elapsed = start.elapsed();
    let ok = cov_mismatch == 0
        && exe_mismatch == 0
        && comb_mismatch == 0
        && all_one > 0
        && disagree == 0
        && above_one == 0
        && elapsed < Duration::from_secs(120);
    verdict(
        ok,
        format!(
            "reward oracle, {} queries of <= 20 tokens: mismatches coverage {cov_mismatch} execution {exe_mismatch} combined {comb_mismatch}; all-(+1) {all_one}, correct {correct}, disagreements {disagree} in {}",
            all.len(),
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 5

const POOL: [&str; 12] = ["red", "Red", "blue", "BLUE", "green", "dark  red", "Dark Red", "1", "2", "3", "01", "x"];

fn recase(s: &str, rng: &mut SeededRng) -> String {
    match rng.random_range(0..3) {
        0 => s.to_uppercase(),
        1 => s.to_lowercase(),
        _ => s.to_string(),
    }
}

struct Micro {
    db: Database,
    naive: NaiveDb,
}

fn micro_db(rng: &mut SeededRng) -> Micro {
    let n_tables = rng.random_range(1..=4);
    let mut defs = Vec::new();
    let mut naive_tables = Vec::new();
    let mut fks = Vec::new();
    let mut rows_all: Vec<Vec<Vec<String>>> = Vec::new();
    for k in 0..n_tables {
        let name = format!("t{k}");
        let a_kind = if rng.random() { ColumnKind::Text } else { ColumnKind::Number };
        let mut cols: Vec<(String, ColumnKind)> =
            vec![("id".into(), ColumnKind::Text), ("a".into(), a_kind), ("b".into(), ColumnKind::Text)];
        let mut parents: Vec<usize> = Vec::new();
        if k > 0 {
            parents.push(rng.random_range(0..k));
            if k >= 2 && rng.random::<f64>() < 0.3 {
                let other = rng.random_range(0..k);
                if other != parents[0] {
                    parents.push(other);
                }
            }
        }
        for (i, _) in parents.iter().enumerate() {
            cols.push((format!("ref{i}"), ColumnKind::Text));
        }
        let n_rows = rng.random_range(0..=50);
        let rows: Vec<Vec<String>> = (0..n_rows)
            .map(|r| {
                let mut row = vec![
                    format!("k{r}"),
                    if a_kind == ColumnKind::Number {
                        rng.random_range(0..4).to_string()
                    } else {
                        recase(POOL[rng.random_range(0..POOL.len())], rng)
                    },
                    recase(POOL[rng.random_range(0..POOL.len())], rng),
                ];
                for &p in &parents {
                    let parent_rows = rows_all[p].len();
                    // an empty parent leaves nothing to reference
                    row.push(if parent_rows == 0 {
                        String::new()
                    } else {
                        recase(&format!("k{}", rng.random_range(0..parent_rows)), rng)
                    });
                }
                row
            })
            .collect();
        let rows: Vec<Vec<String>> = if parents.iter().any(|&p| rows_all[p].is_empty()) {
            Vec::new()
        } else {
            rows
        };
        let col_refs: Vec<(&str, ColumnKind)> = cols.iter().map(|(n, k)| (n.as_str(), *k)).collect();
        let fk_names: Vec<(String, String)> =
            parents.iter().enumerate().map(|(i, &p)| (format!("ref{i}"), format!("t{p}"))).collect();
        let fk_refs: Vec<(&str, &str, &str)> = fk_names.iter().map(|(c, t)| (c.as_str(), t.as_str(), "id")).collect();
        defs.push(table(&name, &col_refs, Some("id"), &fk_refs));
        for (c, t) in &fk_names {
            fks.push((format!("{name}.{c}"), format!("{t}.id")));
        }
        naive_tables.push((name, cols.iter().map(|(n, _)| n.clone()).collect(), rows.clone()));
        rows_all.push(rows);
    }
    let db = Database::new(Schema::new(defs).unwrap(), rows_all).unwrap();
    Micro {
        db,
        naive: NaiveDb::new(naive_tables, fks),
    }
}

fn random_query(db: &Database, rng: &mut SeededRng) -> SqlQuery {
    let schema = db.schema();
    let mut tables = vec![rng.random_range(0..schema.table_count())];
    loop {
        let options: Vec<usize> = (0..schema.table_count())
            .filter(|t| !tables.contains(t) && tables.iter().any(|&u| schema.adjacent(u, *t)))
            .collect();
        if options.is_empty() || rng.random::<f64>() < 0.4 {
            break;
        }
        tables.push(options[rng.random_range(0..options.len())]);
    }
    let attrs: Vec<AttrRef> = tables.iter().flat_map(|&t| schema.attrs_of(t)).collect();
    let select = attrs[rng.random_range(0..attrs.len())];
    let n_conds = rng.random_range(1..=3);
    let mut conditions: Vec<Condition> = Vec::new();
    let mut seen = BTreeSet::new();
    while conditions.len() < n_conds {
        let attr = attrs[rng.random_range(0..attrs.len())];
        let rows = db.rows(attr.table);
        let value = if !rows.is_empty() && rng.random::<f64>() < 0.75 {
            recase(&rows[rng.random_range(0..rows.len())][attr.column], rng)
        } else {
            POOL[rng.random_range(0..POOL.len())].to_string()
        };
        if value.trim().is_empty() || !seen.insert((attr, norm(&value))) {
            continue;
        }
        conditions.push(Condition { attr, value });
    }
    let connectives = (1..n_conds)
        .map(|_| if rng.random() { Connective::And } else { Connective::Or })
        .collect();
    let q = SqlQuery {
        select,
        tables,
        conditions,
        connectives,
        joins: Vec::new(),
    };
    let reparsed = parse_tokens(&q.to_tokens(), schema).expect("generated query is grammatical");
    assert_eq!(reparsed, q);
    q.with_joins(schema).expect("tables are FK-connected")
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let mut rng = seeded_rng(2024);
    let (mut checked, mut mismatches, mut unsound, mut nonempty) = (0, 0, 0, 0);
    for _ in 0..100 {
        let micro = micro_db(&mut rng);
        let schema = micro.db.schema();
        for _ in 0..50 {
            let q = random_query(&micro.db, &mut rng);
            let preds: Vec<(String, String)> = q
                .joins
                .iter()
                .map(|p| (schema.attr_name(p.left), schema.attr_name(p.right)))
                .collect();
            unsound += preds.iter().filter(|(a, b)| !micro.naive.is_fk(a, b)).count();
            let nq = NaiveQuery {
                select: schema.attr_name(q.select),
                tables: q.tables.iter().map(|&t| schema.table_name(t).to_string()).collect(),
                preds,
                conds: q.conditions.iter().map(|c| (schema.attr_name(c.attr), c.value.clone())).collect(),
                ops: q
                    .connectives
                    .iter()
                    .map(|c| match c {
                        Connective::And => "and".to_string(),
                        Connective::Or => "or".to_string(),
                    })
                    .collect(),
            };
            let expected = micro.naive.execute(&nq);
            let got = execute(&q, &micro.db);
            let got_keys: BTreeSet<String> = got.iter().map(norm).collect();
            if got_keys != expected || got.len() != expected.len() {
                mismatches += 1;
            }
            nonempty += usize::from(!expected.is_empty());
            checked += 1;
        }
    }
    let ok = mismatches == 0 && unsound == 0 && checked == 5000;
    verdict(
        ok,
        format!(
            "executor vs cross product, 100 databases x 50 queries: {mismatches} mismatches, {unsound} non-FK joins, {nonempty}/{checked} nonempty in {}",
            secs(start.elapsed())
        ),
    )
}

// ---------------------------------------------------------------- 6-8

const SEED: u64 = 1;
/// Hard-regime runs train through long plateaus; keep going and take the
/// best validation checkpoint.
const HARD_PATIENCE: usize = 100;
const DEFAULT_PATIENCE: usize = 10;

struct Learning {
    easy: Run,
    rl: Run,
    supervised: Run,
    pretrain_rl: Run,
}

fn learning_runs() -> Learning {
    Learning {
        easy: run(Regime::Easy, TrainMode::Rl, SEED, DEFAULT_PATIENCE),
        rl: run(Regime::Hard, TrainMode::Rl, SEED, HARD_PATIENCE),
        supervised: run(Regime::Hard, TrainMode::Supervised, SEED, HARD_PATIENCE),
        pretrain_rl: run(Regime::Hard, TrainMode::PretrainThenRl, SEED, HARD_PATIENCE),
    }
}

fn criterion_6(l: &Learning) -> Verdict {
    let e = &l.easy;
    let ok = e.test.accuracy >= 0.90 && e.test.accuracy > e.untrained.accuracy && e.elapsed < Duration::from_secs(600);
    verdict(
        ok,
        format!(
            "easy regime 100/20/20: test accuracy {:.3} (>= 0.90), untrained {:.3} in {}",
            e.test.accuracy,
            e.untrained.accuracy,
            secs(e.elapsed)
        ),
    )
}

fn criterion_7(l: &Learning) -> Verdict {
    let (rl, sup, pt) = (&l.rl, &l.supervised, &l.pretrain_rl);
    let total = rl.elapsed + sup.elapsed + pt.elapsed;
    let a = rl.test.accuracy >= 0.50;
    let b = pt.test.accuracy >= rl.test.accuracy;
    let c = rl.test.redundancy > sup.test.redundancy;
    verdict(
        a && b && c && total < Duration::from_secs(3600),
        format!(
            "hard regime 400/50/50: (a) rl accuracy {:.3} >= 0.50 {}; (b) pretrain-then-rl {:.3} >= rl {}; (c) redundancy rl {:.3} > supervised {:.3} {} (supervised accuracy {:.3}) in {}",
            rl.test.accuracy,
            a,
            pt.test.accuracy,
            b,
            rl.test.redundancy,
            sup.test.redundancy,
            c,
            sup.test.accuracy,
            secs(total)
        ),
    )
}

fn criterion_8(l: &Learning) -> Verdict {
    let start = Instant::now();
    let again = learning_runs();
    let pairs = [
        ("easy", &l.easy, &again.easy),
        ("hard rl", &l.rl, &again.rl),
        ("hard supervised", &l.supervised, &again.supervised),
        ("hard pretrain-then-rl", &l.pretrain_rl, &again.pretrain_rl),
    ];
    let differing: Vec<&str> = pairs
        .iter()
        .filter(|(_, a, b)| a.fingerprint() != b.fingerprint())
        .map(|(n, _, _)| *n)
        .collect();
    verdict(
        differing.is_empty(),
        format!(
            "determinism, reruns of 6-7 with seed {SEED}: reports, evaluations and parameters identical{} in {}",
            if differing.is_empty() {
                String::new()
            } else {
                format!(" except {}", differing.join(", "))
            },
            secs(start.elapsed())
        ),
    )
}

fn main() {
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|s| s.contains(&n));

    let mut failed = 0;
    let mut report = |n: u32, v: Verdict| {
        println!("criterion {n} {}: {}", if v.ok { "PASS" } else { "FAIL" }, v.detail);
        if !v.ok {
            failed += 1;
        }
    };
    let quick: [(u32, fn() -> Verdict); 5] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
    ];
    for (n, f) in quick {
        if wanted(n) {
            report(n, f());
        }
    }
    if wanted(6) || wanted(7) || wanted(8) {
        let l = learning_runs();
        if wanted(6) {
            report(6, criterion_6(&l));
        }
        if wanted(7) {
            report(7, criterion_7(&l));
        }
        if wanted(8) {
            report(8, criterion_8(&l));
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

//! Command-line driver.
//!
//! Options that may also come from `--config` are `Option`s here; the
//! resolved value is flag, then file, then the built-in default.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sqlgen_core::datagen::{generate_dataset, split_by_sizes, split_sizes, Example, DEFAULT_FRACTIONS};
use sqlgen_core::query::classify_all;
use sqlgen_core::train::{self, prepare, tokens_to_query, Item, Task, TrainConfig, TrainError, TrainMode};
use sqlgen_core::vocab::{LexiconOptions, ValueLexicon, Vocabulary};
use sqlgen_core::{execute, metrics, seeded_rng, Database, MaskConfig, SqlQuery};

use crate::checkpoint::Checkpoint;
use crate::config::ConfigFile;
use crate::dataset::{read_dataset, write_dataset};
use crate::files::{load_database, load_schema, load_templates};
use crate::sql_text::{join_sql, split_sql};

#[derive(Debug, Parser)]
#[command(name = "sqlgen", version, about = "Generate SQL from questions, trained from question/answer pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill question templates from a database into train/val/test JSONL files
    GenData(GenData),
    /// Train a model and write a checkpoint directory
    Train(TrainArgs),
    /// Score a checkpoint, or a file of predicted queries, on a dataset
    Eval(EvalArgs),
    /// Decode one question and print the query and its result
    Predict(PredictArgs),
    /// Execute a query written as space-separated tokens
    ExecSql(ExecSql),
}

#[derive(Debug, Args)]
pub struct DbArgs {
    /// Schema file (TOML)
    #[arg(long, value_name = "FILE")]
    pub schema: PathBuf,
    /// Directory holding one <table>.csv per table
    #[arg(long, value_name = "DIR")]
    pub db_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenData {
    #[command(flatten)]
    pub db: DbArgs,
    /// Template file, one `select [and|or] :: text` per line
    #[arg(long, value_name = "FILE")]
    pub templates: PathBuf,
    /// Output directory for train.jsonl, val.jsonl and test.jsonl
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of examples (default: 500, or the sum of --sizes)
    #[arg(long)]
    pub n: Option<usize>,
    /// Explicit split sizes TRAIN,VAL,TEST (default: 80/10/10 percent of --n)
    #[arg(long, value_name = "TRAIN,VAL,TEST")]
    pub sizes: Option<String>,
    /// Random seed (default: 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file supplying defaults for the flags above
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub db: DbArgs,
    /// Training set (JSONL)
    #[arg(long, value_name = "FILE")]
    pub train: PathBuf,
    /// Validation set for early stopping (JSONL)
    #[arg(long, value_name = "FILE")]
    pub val: PathBuf,
    /// Checkpoint directory to write
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Also write the per-epoch report here
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// rl, supervised or pretrain-then-rl (default: rl)
    #[arg(long)]
    pub mode: Option<String>,
    /// Maximum epochs per stage, at most 100 (default: 100)
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Probability of sampling instead of taking the argmax (default: 0.3)
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Epochs without validation improvement before stopping (default: 10)
    #[arg(long)]
    pub patience: Option<usize>,
    /// Adam learning rate (default: 0.001)
    #[arg(long)]
    pub lr: Option<f64>,
    /// Decode length cap (default: 64)
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Random seed (default: 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Allow copying any source word, not only detected values (default: off)
    #[arg(long)]
    pub loose_copy_mask: bool,
    /// Leave primary-key columns out of the value lexicon (default: off)
    #[arg(long)]
    pub exclude_primary_keys: bool,
    /// TOML file supplying defaults for the flags above
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub db: DbArgs,
    /// Dataset to score (JSONL)
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Checkpoint directory to decode with
    #[arg(long, value_name = "DIR", required_unless_present = "predictions", conflicts_with = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Score these queries instead: one JSON token list (or null) per line, aligned with --data
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub db: DbArgs,
    /// Checkpoint directory
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    /// The question
    #[arg(long)]
    pub question: String,
}

#[derive(Debug, Args)]
pub struct ExecSql {
    #[command(flatten)]
    pub db: DbArgs,
    /// Query tokens, e.g. `select movie.name from movie where movie.year = 2012 EOS`;
    /// quote multi-word values with double quotes; a missing EOS is added
    #[arg(long)]
    pub sql: String,
}

/// A failed run: the message is printed on one line and the kind picks the
/// exit status.
#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Usage,
    Data,
    Internal,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Usage => 2,
            FailureKind::Data => 3,
            FailureKind::Internal => 4,
        }
    }
}

impl Failure {
    fn usage(m: impl Into<String>) -> Self {
        Failure {
            kind: FailureKind::Usage,
            message: m.into(),
        }
    }

    fn data(e: impl std::fmt::Display) -> Self {
        Failure {
            kind: FailureKind::Data,
            message: e.to_string(),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let kind = match e {
            TrainError::InvalidConfig(_) => FailureKind::Usage,
            TrainError::Reward(_) => FailureKind::Internal,
            _ => FailureKind::Data,
        };
        Failure {
            kind,
            message: e.to_string(),
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    match cli.command {
        Command::GenData(a) => gen_data(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Predict(a) => predict_cmd(a, out),
        Command::ExecSql(a) => exec_sql(a, out),
    }
}

fn load_db(a: &DbArgs) -> Result<Database, Failure> {
    let schema = load_schema(&a.schema).map_err(Failure::data)?;
    load_database(schema, &a.db_dir).map_err(Failure::data)
}

fn emit(out: &mut dyn std::io::Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(|e| Failure {
        kind: FailureKind::Internal,
        message: format!("writing output: {e}"),
    })
}

fn parse_sizes(s: &str) -> Result<[usize; 3], Failure> {
    let bad = || Failure::usage(format!("--sizes expects TRAIN,VAL,TEST, got `{s}`"));
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    parts.try_into().map_err(|_| bad())
}

fn gen_data(a: GenData, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    let file = ConfigFile::load_opt(a.config.as_deref()).map_err(Failure::data)?;
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let sizes = a.sizes.or(file.sizes).map(|s| parse_sizes(&s)).transpose()?;
    let n = a.n.or(file.n);
    let (n, sizes) = match (n, sizes) {
        (Some(n), Some(s)) if s.iter().sum::<usize>() != n => {
            return Err(Failure::usage(format!("--sizes add up to {}, but --n is {n}", s.iter().sum::<usize>())));
        }
        (_, Some(s)) => (s.iter().sum(), s),
        (n, None) => {
            let n = n.unwrap_or(500);
            (n, split_sizes(n, DEFAULT_FRACTIONS))
        }
    };
    log::info!(
        "gen-data schema={} db_dir={} templates={} out={} n={n} sizes={},{},{} seed={seed}",
        a.db.schema.display(),
        a.db.db_dir.display(),
        a.templates.display(),
        a.out.display(),
        sizes[0],
        sizes[1],
        sizes[2]
    );

    let db = load_db(&a.db)?;
    let templates = load_templates(&a.templates, db.schema()).map_err(Failure::data)?;
    let mut rng = seeded_rng(seed);
    let (examples, stats) = generate_dataset(&db, &templates, n, &mut rng).map_err(Failure::data)?;
    let (tr, va, te) = split_by_sizes(examples, sizes, &mut rng);
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::data(format!("{}: {e}", a.out.display())))?;
    for (name, part) in [("train", &tr), ("val", &va), ("test", &te)] {
        write_dataset(&a.out.join(format!("{name}.jsonl")), part, db.schema()).map_err(Failure::data)?;
    }

    let mut s = String::new();
    let _ = writeln!(s, "examples={n} train={} val={} test={}", tr.len(), va.len(), te.len());
    let _ = writeln!(s, "attempts={}", stats.attempts);
    let _ = writeln!(s, "multi_table={:.3}", stats.multi_table_fraction(n));
    let _ = writeln!(s, "multi_condition={:.3}", stats.multi_condition_fraction(n));
    for (template, count) in &stats.per_template {
        let _ = writeln!(s, "template {count:>5}  {template}");
    }
    emit(out, &s)
}

fn resolve_train(a: &TrainArgs, file: &ConfigFile) -> Result<(TrainConfig, LexiconOptions), Failure> {
    let d = TrainConfig::default();
    let mode = match a.mode.as_ref().or(file.mode.as_ref()) {
        Some(m) => TrainMode::parse(m)
            .ok_or_else(|| Failure::usage(format!("unknown mode `{m}`; expected rl, supervised or pretrain-then-rl")))?,
        None => d.mode,
    };
    let config = TrainConfig {
        mode,
        epochs: a.epochs.or(file.epochs).unwrap_or(d.epochs),
        epsilon: a.epsilon.or(file.epsilon).unwrap_or(d.epsilon),
        adam: train::AdamConfig {
            lr: a.lr.or(file.lr).unwrap_or(d.adam.lr),
            ..d.adam
        },
        patience: a.patience.or(file.patience).unwrap_or(d.patience),
        seed: a.seed.or(file.seed).unwrap_or(d.seed),
        max_len: a.max_len.or(file.max_len).unwrap_or(d.max_len),
        mask: MaskConfig {
            loose_copy: a.loose_copy_mask || file.loose_copy_mask.unwrap_or(false),
        },
        ..d
    };
    config.validate()?;
    let lexicon = LexiconOptions {
        exclude_primary_keys: a.exclude_primary_keys || file.exclude_primary_keys.unwrap_or(false),
    };
    Ok((config, lexicon))
}

fn train_cmd(a: TrainArgs, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    let file = ConfigFile::load_opt(a.config.as_deref()).map_err(Failure::data)?;
    let (config, lex_opts) = resolve_train(&a, &file)?;
    log::info!(
        "train schema={} db_dir={} train={} val={} out={} exclude_primary_keys={}\n{}",
        a.db.schema.display(),
        a.db.db_dir.display(),
        a.train.display(),
        a.val.display(),
        a.out.display(),
        lex_opts.exclude_primary_keys,
        config.echo().trim_end()
    );

    let db = load_db(&a.db)?;
    let lexicon = ValueLexicon::build(&db, lex_opts);
    let tr = prepare(&read_dataset(&a.train, db.schema()).map_err(Failure::data)?, &lexicon);
    let va = prepare(&read_dataset(&a.val, db.schema()).map_err(Failure::data)?, &lexicon);
    let (vocab, warnings) = Vocabulary::build(db.schema(), tr.iter().map(|i| &i.source));
    for w in &warnings {
        log::warn!("{w}");
    }
    let task = Task {
        db: &db,
        vocab: &vocab,
        lexicon: &lexicon,
        mask: config.mask,
    };
    let p0 = train::init_params(&vocab, &config);
    let (params, report) = train::train(&task, &tr, &va, p0, &config)?;
    let lines = report.to_lines();
    if let Some(path) = &a.report {
        std::fs::write(path, &lines).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    }
    Checkpoint::new(params, vocab, lex_opts, &config)
        .save(&a.out)
        .map_err(Failure::data)?;
    emit(out, &lines)
}

/// Loads a checkpoint and the matching task context.
struct Loaded {
    db: Database,
    ck: Checkpoint,
    lexicon: ValueLexicon,
}

impl Loaded {
    fn open(db: &DbArgs, dir: &Path) -> Result<Self, Failure> {
        let db = load_db(db)?;
        let ck = Checkpoint::load(dir, db.schema()).map_err(Failure::data)?;
        log::info!("checkpoint {}\n{}", dir.display(), ck.manifest().trim_end());
        let lexicon = ValueLexicon::build(&db, ck.lexicon);
        Ok(Loaded { db, ck, lexicon })
    }

    fn task(&self) -> Task<'_> {
        Task {
            db: &self.db,
            vocab: &self.ck.vocab,
            lexicon: &self.lexicon,
            mask: self.ck.mask,
        }
    }
}

fn eval_cmd(a: EvalArgs, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    log::info!(
        "eval schema={} db_dir={} data={} checkpoint={:?} predictions={:?}",
        a.db.schema.display(),
        a.db.db_dir.display(),
        a.data.display(),
        a.checkpoint,
        a.predictions
    );
    let (db, decoded, examples): (Database, Vec<Option<SqlQuery>>, Vec<Example>) = match (&a.checkpoint, &a.predictions) {
        (Some(dir), _) => {
            let l = Loaded::open(&a.db, dir)?;
            let examples = read_dataset(&a.data, l.db.schema()).map_err(Failure::data)?;
            let items = prepare(&examples, &l.lexicon);
            let task = l.task();
            let decoded = items.iter().map(|it| task.decode(&l.ck.params, it, l.ck.max_len)).collect();
            (l.db, decoded, examples)
        }
        (None, Some(path)) => {
            let db = load_db(&a.db)?;
            let examples = read_dataset(&a.data, db.schema()).map_err(Failure::data)?;
            let decoded = read_predictions(path, &db)?;
            if decoded.len() != examples.len() {
                return Err(Failure::data(format!(
                    "{}: {} predictions for {} examples",
                    path.display(),
                    decoded.len(),
                    examples.len()
                )));
            }
            (db, decoded, examples)
        }
        (None, None) => return Err(Failure::usage("eval needs --checkpoint or --predictions")),
    };
    let report = metrics::evaluate(&decoded, &examples, &db);
    emit(out, &format!("{}\n{}", report.to_text(), report.to_key_values()))
}

/// One JSON value per non-blank line: a token list, or `null` for no query.
/// Lists that do not parse count as failed decodes.
fn read_predictions(path: &Path, db: &Database) -> Result<Vec<Option<SqlQuery>>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Option<Vec<String>> = serde_json::from_str(line)
            .map_err(|e| Failure::data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(tokens.and_then(|t| tokens_to_query(&classify_all(&t, db.schema()), db)));
    }
    Ok(out)
}

fn predict_cmd(a: PredictArgs, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    log::info!(
        "predict schema={} db_dir={} checkpoint={} question={:?}",
        a.db.schema.display(),
        a.db.db_dir.display(),
        a.checkpoint.display(),
        a.question
    );
    let l = Loaded::open(&a.db, &a.checkpoint)?;
    let example = Example {
        question: a.question.clone(),
        answer: Default::default(),
        gold: None,
        conditions: 0,
        tables: 0,
    };
    let item = Item::new(example, &l.lexicon);
    log::debug!("detected values: {:?}", item.values);
    if item.values.is_empty() && !l.ck.mask.loose_copy {
        return Err(Failure::data("no database value found in the question"));
    }
    let task = l.task();
    let ep = sqlgen_core::model::decode_greedy(&l.ck.params, &task.machine(&item), l.ck.max_len);
    let rendered: Vec<String> = ep.tokens.iter().map(|t| t.render(l.db.schema())).collect();
    let query = match ep.end {
        sqlgen_core::model::EpisodeEnd::Complete => tokens_to_query(&ep.tokens, &l.db),
        _ => None,
    };
    let query = query.ok_or_else(|| Failure::data(format!("decoding did not finish: {}", join_sql(&rendered))))?;
    let mut s = join_sql(&rendered);
    s.push('\n');
    for v in execute(&query, &l.db).iter() {
        s.push_str(v);
        s.push('\n');
    }
    emit(out, &s)
}

fn exec_sql(a: ExecSql, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    log::info!(
        "exec-sql schema={} db_dir={} sql={:?}",
        a.db.schema.display(),
        a.db.db_dir.display(),
        a.sql
    );
    let db = load_db(&a.db)?;
    let mut words = split_sql(&a.sql).map_err(|e| Failure::usage(format!("--sql: {e}")))?;
    if words.last().map(String::as_str) != Some("EOS") {
        words.push("EOS".into());
    }
    let tokens = classify_all(&words, db.schema());
    let query = sqlgen_core::parse_tokens(&tokens, db.schema())
        .map_err(|e| Failure::usage(format!("--sql: {e}")))?
        .with_joins(db.schema())
        .map_err(|e| Failure::usage(format!("--sql: {e}")))?;
    let mut s = String::new();
    for v in execute(&query, &db).iter() {
        s.push_str(v);
        s.push('\n');
    }
    emit(out, &s)
}

/// Flushes stdout after `run`; split out so tests can capture output.
pub fn run_to_stdout(cli: Cli) -> Result<(), Failure> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run(cli, &mut lock)?;
    lock.flush().map_err(|e| Failure {
        kind: FailureKind::Internal,
        message: format!("writing output: {e}"),
    })
}

//! Training: single-sample policy gradient with ε-greedy exploration,
//! supervised teacher forcing, Adam, and early stopping on validation
//! accuracy.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::seq::SliceRandom;

use crate::datagen::Example;
use crate::exec::ResultSet;
use crate::grammar::{source_keys, Choice, GrammarError, GrammarMachine, GrammarState, MaskConfig};
use crate::linalg::sqrt;
use crate::metrics::{evaluate, EvalReport};
use crate::model::{
    decode_greedy, decode_sample, loss_and_gradients, teacher_force, Dims, EpisodeEnd, ModelParams, DEFAULT_MAX_LEN,
    INIT_SCALE,
};
use crate::query::{parse_tokens, SqlQuery, SqlToken};
use crate::reward::{compute_rewards, RewardError};
use crate::schema::Database;
use crate::text::same_value;
use crate::vocab::{extract_value_set, tokenize_question, TokenSeq, ValueLexicon, Vocabulary};
use crate::{seeded_rng, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, like: &ModelParams) -> Self {
        Adam {
            config,
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    /// One bias-corrected update of `params` along `grads`.
    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        let c = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - crate::linalg::powi(c.beta1, t);
        let bc2 = 1.0 - crate::linalg::powi(c.beta2, t);
        let ps = params.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in ps.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * gi;
                v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * gi * gi;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                p.data[i] -= c.lr * m_hat / (sqrt(v_hat) + c.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Rl,
    Supervised,
    PretrainThenRl,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Rl => "rl",
            TrainMode::Supervised => "supervised",
            TrainMode::PretrainThenRl => "pretrain-then-rl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rl" => Some(TrainMode::Rl),
            "supervised" => Some(TrainMode::Supervised),
            "pretrain-then-rl" => Some(TrainMode::PretrainThenRl),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Upper bound per training stage.
    pub epochs: usize,
    pub epsilon: f64,
    pub adam: AdamConfig,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub max_len: usize,
    pub mask: MaskConfig,
    pub dims: Dims,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Rl,
            epochs: 100,
            epsilon: 0.3,
            adam: AdamConfig::default(),
            patience: 10,
            seed: 0,
            max_len: DEFAULT_MAX_LEN,
            mask: MaskConfig::default(),
            dims: Dims::default(),
            init_scale: INIT_SCALE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what: &str| Err(TrainError::InvalidConfig(what.into()));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if self.epochs > 100 {
            return bad("at most 100 epochs");
        }
        let a = self.adam;
        if !(a.lr > 0.0 && a.eps > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return bad("adam needs lr > 0, eps > 0 and betas in [0, 1)");
        }
        if self.patience == 0 || self.max_len == 0 {
            return bad("patience and max_len must be positive");
        }
        if self.dims.embed == 0 || self.dims.enc_hidden == 0 || self.dims.dec_hidden == 0 || self.init_scale <= 0.0 {
            return bad("dimensions and init scale must be positive");
        }
        Ok(())
    }

    /// `key=value` lines, one setting each.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode={}", self.mode.as_str());
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "epsilon={}", self.epsilon);
        let _ = writeln!(s, "lr={}", self.adam.lr);
        let _ = writeln!(s, "beta1={}", self.adam.beta1);
        let _ = writeln!(s, "beta2={}", self.adam.beta2);
        let _ = writeln!(s, "adam_eps={}", self.adam.eps);
        let _ = writeln!(s, "patience={}", self.patience);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "max_len={}", self.max_len);
        let _ = writeln!(s, "loose_copy={}", self.mask.loose_copy);
        let _ = writeln!(s, "init_scale={}", self.init_scale);
        s
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{filtered} of {total} training questions have no detected values")]
    TooManyFiltered { filtered: usize, total: usize },
    #[error("example {index}: gold query rejected by the grammar: {source}")]
    IllegalGold { index: usize, source: GrammarError },
    #[error("example {index}: no gold query for supervised training")]
    MissingGold { index: usize },
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Shared, read-only context: database, vocabulary and value lexicon.
#[derive(Debug, Clone, Copy)]
pub struct Task<'a> {
    pub db: &'a Database,
    pub vocab: &'a Vocabulary,
    pub lexicon: &'a ValueLexicon,
    pub mask: MaskConfig,
}

/// An example with its tokenization and value set precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub example: Example,
    pub source: TokenSeq,
    pub keys: Vec<String>,
    pub values: BTreeSet<String>,
}

impl Item {
    pub fn new(example: Example, lexicon: &ValueLexicon) -> Self {
        let source = tokenize_question(&example.question, lexicon);
        let keys = source_keys(&source);
        let values = extract_value_set(&source, lexicon);
        Item {
            example,
            source,
            keys,
            values,
        }
    }

    pub fn answer(&self) -> &ResultSet {
        &self.example.answer
    }
}

pub fn prepare(examples: &[Example], lexicon: &ValueLexicon) -> Vec<Item> {
    examples.iter().map(|e| Item::new(e.clone(), lexicon)).collect()
}

impl<'a> Task<'a> {
    pub fn machine<'m>(&'m self, item: &'m Item) -> GrammarMachine<'m> {
        GrammarMachine::new(self.db.schema(), self.vocab, &item.source, &item.keys, self.mask)
    }

    /// Greedy decode parsed into a query with join predicates; `None` when
    /// the decode does not finish with `EOS`.
    pub fn decode(&self, params: &ModelParams, item: &Item, max_len: usize) -> Option<SqlQuery> {
        if item.values.is_empty() && !self.mask.loose_copy {
            return None;
        }
        let ep = decode_greedy(params, &self.machine(item), max_len);
        if ep.end != EpisodeEnd::Complete {
            return None;
        }
        tokens_to_query(&ep.tokens, self.db)
    }

    pub fn evaluate(&self, params: &ModelParams, items: &[Item], max_len: usize) -> EvalReport {
        let decoded: Vec<Option<SqlQuery>> = items.iter().map(|it| self.decode(params, it, max_len)).collect();
        let examples: Vec<Example> = items.iter().map(|it| it.example.clone()).collect();
        evaluate(&decoded, &examples, self.db)
    }

    /// The choice sequence that spells the item's gold query.
    pub fn gold_choices(&self, item: &Item) -> Option<Result<Vec<Choice>, GrammarError>> {
        let gold = item.example.gold.as_ref()?;
        Some(self.choices_for(item, &gold.to_tokens()))
    }

    pub fn choices_for(&self, item: &Item, tokens: &[SqlToken]) -> Result<Vec<Choice>, GrammarError> {
        let m = self.machine(item);
        let mut state = GrammarState::initial();
        let mut out = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let mask = m.legal_mask(&state)?;
            let choice = mask
                .legal()
                .map(|e| mask.choice_of(e))
                .find(|&c| match (m.token_of(c), tok) {
                    (SqlToken::Value(a), SqlToken::Value(b)) => same_value(&a, b),
                    (a, b) => a == *b,
                })
                .ok_or_else(|| GrammarError::IllegalToken {
                    phase: state.phase,
                    token: match tok {
                        SqlToken::Value(v) => v.clone(),
                        other => other.render(self.db.schema()),
                    },
                })?;
            state = m.advance(&state, choice)?.0;
            out.push(choice);
        }
        Ok(out)
    }
}

pub fn tokens_to_query(tokens: &[SqlToken], db: &Database) -> Option<SqlQuery> {
    parse_tokens(tokens, db.schema()).ok()?.with_joins(db.schema()).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Supervised,
    Rl,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Supervised => "supervised",
            Stage::Rl => "rl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub stage: Stage,
    /// 1-based within the stage.
    pub epoch: usize,
    /// Mean per-example loss.
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_redundancy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Validation accuracy of the starting parameters.
    pub initial_val_accuracy: f64,
    /// Index into `history` of the kept parameters; `None` keeps the start.
    pub best: Option<usize>,
    pub best_val_accuracy: f64,
    pub stopped_epoch: usize,
    pub used: usize,
    pub filtered: usize,
}

impl TrainReport {
    fn empty(initial_val_accuracy: f64, used: usize, filtered: usize) -> Self {
        TrainReport {
            history: Vec::new(),
            initial_val_accuracy,
            best: None,
            best_val_accuracy: initial_val_accuracy,
            stopped_epoch: 0,
            used,
            filtered,
        }
    }

    /// Line-oriented `key=value` rendering, one line per epoch.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "initial val_accuracy={:?} used={} filtered={}",
            self.initial_val_accuracy, self.used, self.filtered
        );
        for r in &self.history {
            let _ = writeln!(
                s,
                "stage={} epoch={} train_loss={:?} val_accuracy={:?} val_redundancy={:?}",
                r.stage.as_str(),
                r.epoch,
                r.train_loss,
                r.val_accuracy,
                r.val_redundancy
            );
        }
        let best = self.best.map_or_else(|| String::from("initial"), |i| format!("{}", i + 1));
        let _ = writeln!(
            s,
            "best={} best_val_accuracy={:?} stopped_epoch={}",
            best, self.best_val_accuracy, self.stopped_epoch
        );
        s
    }
}

/// Splits items into the usable ones and a count of those with no values.
fn usable(items: &[Item]) -> (Vec<usize>, usize) {
    let idx: Vec<usize> = (0..items.len()).filter(|&i| !items[i].values.is_empty()).collect();
    let filtered = items.len() - idx.len();
    (idx, filtered)
}

fn check_filtered(filtered: usize, total: usize) -> Result<(), TrainError> {
    if filtered * 2 > total {
        return Err(TrainError::TooManyFiltered { filtered, total });
    }
    Ok(())
}

struct Loop<'t, 'a> {
    task: &'t Task<'a>,
    val: &'t [Item],
    config: &'t TrainConfig,
    stage: Stage,
}

impl Loop<'_, '_> {
    /// Runs epochs of `step` with early stopping; `step` returns the loss of
    /// one example and updates the parameters in place.
    fn run(
        &self,
        params: ModelParams,
        order: &[usize],
        rng: &mut SeededRng,
        report: &mut TrainReport,
        mut step: impl FnMut(&mut ModelParams, &mut Adam, usize, &mut SeededRng) -> Result<f64, TrainError>,
    ) -> Result<ModelParams, TrainError> {
        let mut best_params = params.clone();
        let mut params = params;
        let mut adam = Adam::new(self.config.adam, &params);
        let mut since_best = 0;
        let mut order = order.to_vec();
        for epoch in 1..=self.config.epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            for &i in &order {
                total += step(&mut params, &mut adam, i, rng)?;
            }
            let eval = self.task.evaluate(&params, self.val, self.config.max_len);
            let rec = EpochRecord {
                stage: self.stage,
                epoch,
                train_loss: if order.is_empty() { 0.0 } else { total / order.len() as f64 },
                val_accuracy: eval.accuracy,
                val_redundancy: eval.redundancy,
            };
            log::info!(
                "{} epoch {epoch}: loss {:.4} val acc {:.4} redundancy {:.4}",
                self.stage.as_str(),
                rec.train_loss,
                rec.val_accuracy,
                rec.val_redundancy
            );
            report.history.push(rec);
            report.stopped_epoch = epoch;
            if eval.accuracy > report.best_val_accuracy {
                report.best_val_accuracy = eval.accuracy;
                report.best = Some(report.history.len() - 1);
                best_params = params.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= self.config.patience {
                    log::info!("early stop after epoch {epoch}");
                    break;
                }
            }
        }
        Ok(best_params)
    }
}

fn rl_step(
    task: &Task<'_>,
    item: &Item,
    config: &TrainConfig,
    params: &mut ModelParams,
    adam: &mut Adam,
    rng: &mut SeededRng,
) -> Result<f64, TrainError> {
    let ep = decode_sample(params, &task.machine(item), config.epsilon, rng, config.max_len);
    if ep.end == EpisodeEnd::DeadEnd || ep.is_empty() {
        return Ok(0.0);
    }
    let rewards = compute_rewards(&ep.tokens, &ep.roles, &item.values, task.db, item.answer())?;
    let (loss, grads) = loss_and_gradients(params, &ep, &rewards.values);
    adam.update(params, &grads);
    Ok(loss)
}

fn supervised_step(
    params: &mut ModelParams,
    adam: &mut Adam,
    task: &Task<'_>,
    item: &Item,
    gold: &[Choice],
) -> Result<f64, TrainError> {
    let ep = teacher_force(params, &task.machine(item), gold).map_err(|source| TrainError::IllegalGold { index: 0, source })?;
    let ones = alloc::vec![1.0; ep.len()];
    let (loss, grads) = loss_and_gradients(params, &ep, &ones);
    adam.update(params, &grads);
    Ok(loss)
}

/// Policy-gradient training from `params`; returns the parameters with the
/// best validation accuracy (the starting ones if no epoch beats them).
pub fn train_rl(
    task: &Task<'_>,
    train: &[Item],
    val: &[Item],
    params: ModelParams,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport), TrainError> {
    let mut rng = seeded_rng(config.seed);
    train_rl_with(task, train, val, params, config, &mut rng)
}

fn train_rl_with(
    task: &Task<'_>,
    train: &[Item],
    val: &[Item],
    params: ModelParams,
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<(ModelParams, TrainReport), TrainError> {
    config.validate()?;
    let (order, filtered) = usable(train);
    check_filtered(filtered, train.len())?;
    if filtered > 0 {
        log::warn!("{filtered} training questions without values skipped");
    }
    let initial = if config.epochs == 0 {
        0.0
    } else {
        task.evaluate(&params, val, config.max_len).accuracy
    };
    let mut report = TrainReport::empty(initial, order.len(), filtered);
    if config.epochs == 0 {
        return Ok((params, report));
    }
    let lp = Loop {
        task,
        val,
        config,
        stage: Stage::Rl,
    };
    let best = lp.run(params, &order, rng, &mut report, |p, adam, i, rng| {
        rl_step(task, &train[i], config, p, adam, rng)
    })?;
    Ok((best, report))
}

/// Teacher-forced maximum likelihood on the gold queries.
pub fn pretrain_supervised(
    task: &Task<'_>,
    train: &[Item],
    val: &[Item],
    params: ModelParams,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport), TrainError> {
    let mut rng = seeded_rng(config.seed);
    pretrain_with(task, train, val, params, config, &mut rng)
}

fn pretrain_with(
    task: &Task<'_>,
    train: &[Item],
    val: &[Item],
    params: ModelParams,
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<(ModelParams, TrainReport), TrainError> {
    config.validate()?;
    let (order, filtered) = usable(train);
    check_filtered(filtered, train.len())?;
    let mut golds: Vec<Vec<Choice>> = alloc::vec![Vec::new(); train.len()];
    for &i in &order {
        golds[i] = match task.gold_choices(&train[i]) {
            None => return Err(TrainError::MissingGold { index: i }),
            Some(Err(source)) => return Err(TrainError::IllegalGold { index: i, source }),
            Some(Ok(c)) => c,
        };
    }
    let initial = if config.epochs == 0 {
        0.0
    } else {
        task.evaluate(&params, val, config.max_len).accuracy
    };
    let mut report = TrainReport::empty(initial, order.len(), filtered);
    if config.epochs == 0 {
        return Ok((params, report));
    }
    let lp = Loop {
        task,
        val,
        config,
        stage: Stage::Supervised,
    };
    let best = lp.run(params, &order, rng, &mut report, |p, adam, i, _| {
        supervised_step(p, adam, task, &train[i], &golds[i]).map_err(|e| match e {
            TrainError::IllegalGold { source, .. } => TrainError::IllegalGold { index: i, source },
            e => e,
        })
    })?;
    Ok((best, report))
}

/// Fresh parameters for the task's vocabulary.
pub fn init_params(vocab: &Vocabulary, config: &TrainConfig) -> ModelParams {
    let mut rng = seeded_rng(config.seed ^ 0x5eed_1417);
    ModelParams::init_uniform(config.dims, vocab.len(), vocab.sql_len(), config.init_scale, &mut rng)
}

/// Dispatches on `config.mode`. For pretrain-then-rl the second report's
/// history is appended to the first's and `best` refers to the combined
/// history.
pub fn train(
    task: &Task<'_>,
    train: &[Item],
    val: &[Item],
    params: ModelParams,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport), TrainError> {
    let mut rng = seeded_rng(config.seed);
    match config.mode {
        TrainMode::Rl => train_rl_with(task, train, val, params, config, &mut rng),
        TrainMode::Supervised => pretrain_with(task, train, val, params, config, &mut rng),
        TrainMode::PretrainThenRl => {
            let (p1, mut r1) = pretrain_with(task, train, val, params, config, &mut rng)?;
            let (p2, r2) = train_rl_with(task, train, val, p1, config, &mut rng)?;
            let offset = r1.history.len();
            r1.history.extend(r2.history);
            if let Some(b) = r2.best {
                r1.best = Some(offset + b);
                r1.best_val_accuracy = r2.best_val_accuracy;
            }
            r1.stopped_epoch = r2.stopped_epoch;
            Ok((p2, r1))
        }
    }
}

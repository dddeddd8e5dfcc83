//! Forward and backward passes of the copy-mechanism encoder-decoder.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::gru::{self, GruCache};
use super::params::ModelParams;
use crate::grammar::{Choice, GrammarError, GrammarMachine, GrammarState, Mask, Role};
use crate::linalg::{dot, exp, ln, sigmoid, softmax_in_place};
use crate::query::SqlToken;
use crate::vocab::{Keyword, TokenSeq, Vocabulary};

/// Encoder states `h_j = [forward_j; backward_j]` plus what backprop needs.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub states: Vec<Vec<f64>>,
    /// `σ(h_jᵀ W_c)`, one row per position.
    pub copy_gates: Vec<Vec<f64>>,
    rows: Vec<usize>,
    fwd: Vec<GruCache>,
    bwd: Vec<GruCache>,
}

impl EncoderOutput {
    /// Wraps precomputed states (no encoder caches, so no gradients flow
    /// into the encoder from such an output).
    pub fn from_states(params: &ModelParams, states: Vec<Vec<f64>>) -> Self {
        let copy_gates = copy_gates(params, &states);
        EncoderOutput {
            states,
            copy_gates,
            rows: Vec::new(),
            fwd: Vec::new(),
            bwd: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub fn encode(params: &ModelParams, vocab: &Vocabulary, source: &TokenSeq) -> EncoderOutput {
    let rows: Vec<usize> = source
        .iter()
        .map(|t| vocab.embedding_row(&t.text))
        .collect();
    encode_rows(params, &rows)
}

/// Encodes a sequence given directly as embedding rows.
pub fn encode_rows(params: &ModelParams, rows: &[usize]) -> EncoderOutput {
    let dh = params.dims.enc_hidden;
    let n = rows.len();
    let mut fwd = Vec::with_capacity(n);
    let mut h = vec![0.0; dh];
    for &row in rows {
        let c = gru::forward(&params.enc_fwd, params.embedding.row(row), &h);
        h = c.h.clone();
        fwd.push(c);
    }
    let mut bwd_rev = Vec::with_capacity(n);
    let mut h = vec![0.0; dh];
    for &row in rows.iter().rev() {
        let c = gru::forward(&params.enc_bwd, params.embedding.row(row), &h);
        h = c.h.clone();
        bwd_rev.push(c);
    }
    bwd_rev.reverse();
    let bwd = bwd_rev;

    let states: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut s = fwd[j].h.clone();
            s.extend_from_slice(&bwd[j].h);
            s
        })
        .collect();
    let copy_gates = copy_gates(params, &states);
    EncoderOutput {
        states,
        copy_gates,
        rows: rows.to_vec(),
        fwd,
        bwd,
    }
}

fn copy_gates(params: &ModelParams, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
    states
        .iter()
        .map(|h| {
            let mut g = vec![0.0; params.dims.dec_hidden];
            params.copy.matvec_t_add(h, &mut g);
            g.iter_mut().for_each(|x| *x = sigmoid(*x));
            g
        })
        .collect()
}

/// Decoder state before the first step: affine map of the final backward
/// encoder state (the one at position 0).
pub fn initial_decoder_state(params: &ModelParams, enc: &EncoderOutput) -> Vec<f64> {
    let dh = params.dims.enc_hidden;
    let mut s = params.init_b.data.clone();
    if let Some(h0) = enc.states.first() {
        let mut tmp = vec![0.0; s.len()];
        params.init_w.matvec(&h0[dh..], &mut tmp);
        s.iter_mut().zip(tmp).for_each(|(a, b)| *a += b);
    }
    s
}

/// Bilinear attention `α = softmax_j(sᵀ W_a h_j)`, `c = Σ α_j h_j`.
pub fn attend(params: &ModelParams, s_prev: &[f64], enc: &EncoderOutput) -> (Vec<f64>, Vec<f64>) {
    let width = 2 * params.dims.enc_hidden;
    let mut context = vec![0.0; width];
    if enc.is_empty() {
        return (Vec::new(), context);
    }
    let mut query = vec![0.0; width];
    params.attn.matvec_t_add(s_prev, &mut query);
    let mut alpha: Vec<f64> = enc.states.iter().map(|h| dot(&query, h)).collect();
    softmax_in_place(&mut alpha);
    for (a, h) in alpha.iter().zip(&enc.states) {
        crate::linalg::axpy(*a, h, &mut context);
    }
    (alpha, context)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Generate,
    Copy,
}

/// Output distribution over `[V_SQL | source positions]` with one shared
/// normalizer; masked entries carry probability 0.
#[derive(Debug, Clone)]
pub struct StepDistribution {
    pub mask: Mask,
    /// Raw scores on legal entries (0 elsewhere).
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
    /// `log Z` over the legal entries.
    pub log_z: f64,
}

impl StepDistribution {
    pub fn mode(&self, entry: usize) -> Mode {
        if entry < self.mask.sql_len() {
            Mode::Generate
        } else {
            Mode::Copy
        }
    }

    pub fn generate_mass(&self) -> f64 {
        self.probs[..self.mask.sql_len()].iter().sum()
    }

    pub fn copy_mass(&self) -> f64 {
        self.probs[self.mask.sql_len()..].iter().sum()
    }

    /// Log-probability of a set of entries (one output word).
    pub fn log_prob_of(&self, entries: &[usize]) -> f64 {
        let m = entries
            .iter()
            .map(|&e| self.scores[e])
            .fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = entries.iter().map(|&e| exp(self.scores[e] - m)).sum();
        m + ln(s) - self.log_z
    }
}

/// Scores `ψ_g(v_i) = W_o[i]·s` and `ψ_c(x_j) = σ(h_jᵀ W_c)·s` on legal
/// entries, normalized together.
pub fn step_distribution(
    params: &ModelParams,
    s: &[f64],
    enc: &EncoderOutput,
    mask: &Mask,
) -> StepDistribution {
    let k = mask.len();
    let sql_len = mask.sql_len();
    let mut scores = vec![0.0; k];
    for e in mask.legal() {
        scores[e] = if e < sql_len {
            dot(params.out.row(e), s)
        } else {
            dot(&enc.copy_gates[e - sql_len], s)
        };
    }
    distribution_from_scores(mask.clone(), scores)
}

pub(crate) fn distribution_from_scores(mask: Mask, scores: Vec<f64>) -> StepDistribution {
    let mut probs = vec![0.0; mask.len()];
    let m = mask
        .legal()
        .map(|e| scores[e])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for e in mask.legal() {
        probs[e] = exp(scores[e] - m);
        z += probs[e];
    }
    for p in probs.iter_mut() {
        *p /= z;
    }
    StepDistribution {
        mask,
        scores,
        probs,
        log_z: m + ln(z),
    }
}

/// A distinct output word: a single generate entry, or all legal copy
/// positions holding the same (normalized) source word.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub choice: Choice,
    pub entries: Vec<usize>,
    pub prob: f64,
}

fn outcomes(dist: &StepDistribution, keys: &[alloc::string::String]) -> Vec<Outcome> {
    let sql_len = dist.mask.sql_len();
    let mut out: Vec<Outcome> = Vec::new();
    for e in dist.mask.legal() {
        if e >= sql_len {
            let key = &keys[e - sql_len];
            if let Some(o) = out.iter_mut().find(|o| match o.choice {
                Choice::Copy(j) => keys[j] == *key,
                Choice::Generate(_) => false,
            }) {
                o.entries.push(e);
                o.prob += dist.probs[e];
                continue;
            }
        }
        out.push(Outcome {
            choice: dist.mask.choice_of(e),
            entries: vec![e],
            prob: dist.probs[e],
        });
    }
    out
}

#[derive(Debug, Clone)]
struct StepCache {
    alpha: Vec<f64>,
    input_row: usize,
    gru: GruCache,
    dist: StepDistribution,
    chosen: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeEnd {
    /// Finished with `EOS`.
    Complete,
    /// Hit the length cap first.
    Truncated,
    /// The mask left no legal output.
    DeadEnd,
}

/// One decoded sequence with everything needed for rewards and gradients.
#[derive(Debug, Clone)]
pub struct Episode {
    pub source: TokenSeq,
    pub choices: Vec<Choice>,
    pub tokens: Vec<SqlToken>,
    pub roles: Vec<Role>,
    /// Log-probability of each chosen output word.
    pub logprobs: Vec<f64>,
    /// Whether each step sampled (true) or took the argmax.
    pub sampled: Vec<bool>,
    /// Grammar state before each step.
    pub states: Vec<GrammarState>,
    pub end: EpisodeEnd,
    encoder: EncoderOutput,
    steps: Vec<StepCache>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.end == EpisodeEnd::Complete
    }

    pub fn total_logprob(&self) -> f64 {
        self.logprobs.iter().sum()
    }

    pub fn distribution(&self, step: usize) -> &StepDistribution {
        &self.steps[step].dist
    }

    pub fn encoder(&self) -> &EncoderOutput {
        &self.encoder
    }
}

/// Hard cap on decoded length.
pub const DEFAULT_MAX_LEN: usize = 64;

fn input_row(vocab: &Vocabulary, machine: &GrammarMachine<'_>, prev: Option<Choice>) -> usize {
    match prev {
        None => vocab.keyword(Keyword::Eos).0,
        Some(Choice::Generate(id)) => id.0,
        Some(Choice::Copy(j)) => vocab.embedding_row(&machine.source.get(j).text),
    }
}

fn run_decoder(
    params: &ModelParams,
    machine: &GrammarMachine<'_>,
    enc: EncoderOutput,
    max_len: usize,
    mut pick: impl FnMut(usize, &GrammarState, &[Outcome]) -> Result<(usize, bool), GrammarError>,
) -> Result<Episode, GrammarError> {
    let keys = crate::grammar::source_keys(machine.source);
    let s0 = initial_decoder_state(params, &enc);
    let mut ep = Episode {
        source: machine.source.clone(),
        choices: Vec::new(),
        tokens: Vec::new(),
        roles: Vec::new(),
        logprobs: Vec::new(),
        sampled: Vec::new(),
        states: Vec::new(),
        end: EpisodeEnd::Truncated,
        encoder: enc,
        steps: Vec::new(),
    };
    let mut s = s0;
    let mut state = GrammarState::initial();
    let mut prev = None;
    while ep.choices.len() < max_len {
        let mask = match machine.legal_mask(&state) {
            Ok(m) => m,
            Err(GrammarError::DeadEnd(_)) => {
                ep.end = EpisodeEnd::DeadEnd;
                return Ok(ep);
            }
            Err(e) => return Err(e),
        };
        let (alpha, context) = attend(params, &s, &ep.encoder);
        let row = input_row(machine.vocab, machine, prev);
        let mut x = params.embedding.row(row).to_vec();
        x.extend_from_slice(&context);
        let cell = gru::forward(&params.dec, &x, &s);
        let dist = step_distribution(params, &cell.h, &ep.encoder, &mask);
        let outs = outcomes(&dist, &keys);
        let (idx, sampled) = pick(ep.choices.len(), &state, &outs)?;
        let outcome = &outs[idx];
        let choice = outcome.choice;
        let logprob = dist.log_prob_of(&outcome.entries);
        let (next_state, role) = machine.advance(&state, choice)?;

        ep.states.push(state);
        ep.choices.push(choice);
        ep.tokens.push(machine.token_of(choice));
        ep.roles.push(role);
        ep.logprobs.push(logprob);
        ep.sampled.push(sampled);
        s = cell.h.clone();
        ep.steps.push(StepCache {
            alpha,
            input_row: row,
            gru: cell,
            dist,
            chosen: outcome.entries.clone(),
        });

        state = next_state;
        prev = Some(choice);
        if state.is_done() {
            ep.end = EpisodeEnd::Complete;
            return Ok(ep);
        }
    }
    Ok(ep)
}

fn argmax(outs: &[Outcome]) -> usize {
    let mut best = 0;
    for (i, o) in outs.iter().enumerate() {
        if o.prob > outs[best].prob {
            best = i;
        }
    }
    best
}

fn sample<R: Rng + ?Sized>(outs: &[Outcome], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, o) in outs.iter().enumerate() {
        acc += o.prob;
        if u < acc {
            return i;
        }
    }
    outs.len() - 1
}

/// ε-greedy decoding: each step samples from the distribution with
/// probability `epsilon`, otherwise takes the most probable word.
pub fn decode_sample<R: Rng + ?Sized>(
    params: &ModelParams,
    machine: &GrammarMachine<'_>,
    epsilon: f64,
    rng: &mut R,
    max_len: usize,
) -> Episode {
    let enc = encode(params, machine.vocab, machine.source);
    run_decoder(params, machine, enc, max_len, |_, _, outs| {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            Ok((sample(outs, rng), true))
        } else {
            Ok((argmax(outs), false))
        }
    })
    .expect("decoder only emits legal choices")
}

pub fn decode_greedy(params: &ModelParams, machine: &GrammarMachine<'_>, max_len: usize) -> Episode {
    let enc = encode(params, machine.vocab, machine.source);
    run_decoder(params, machine, enc, max_len, |_, _, outs| Ok((argmax(outs), false)))
        .expect("decoder only emits legal choices")
}

/// Runs the decoder along a fixed choice sequence (teacher forcing).
pub fn teacher_force(
    params: &ModelParams,
    machine: &GrammarMachine<'_>,
    gold: &[Choice],
) -> Result<Episode, GrammarError> {
    let enc = encode(params, machine.vocab, machine.source);
    let sql_len = machine.vocab.sql_len();
    let ep = run_decoder(params, machine, enc, gold.len(), |t, state, outs| {
        let e = match gold[t] {
            Choice::Generate(id) => id.0,
            Choice::Copy(j) => sql_len + j,
        };
        outs.iter()
            .position(|o| o.entries.contains(&e))
            .map(|i| (i, false))
            .ok_or_else(|| GrammarError::IllegalToken {
                phase: state.phase,
                token: machine.describe(gold[t]),
            })
    })?;
    if ep.choices.len() != gold.len() {
        // stopped early: gold continues past EOS or into a dead end
        let last = ep.states.len() - 1;
        let (after, _) = machine.advance(&ep.states[last], ep.choices[last])?;
        return Err(match ep.end {
            EpisodeEnd::DeadEnd => GrammarError::DeadEnd(after.phase),
            _ => GrammarError::IllegalToken {
                phase: after.phase,
                token: machine.describe(gold[ep.choices.len()]),
            },
        });
    }
    Ok(ep)
}

/// Per-step log-probabilities of a gold sequence under the masked model.
pub fn sequence_logprob(
    params: &ModelParams,
    machine: &GrammarMachine<'_>,
    gold: &[Choice],
) -> Result<Vec<f64>, GrammarError> {
    teacher_force(params, machine, gold).map(|ep| ep.logprobs)
}

/// `loss = -Σ_t w_t · log p(y_t)` and its exact gradient. The weights are
/// constants: per-token rewards for policy gradient, ones for supervised
/// training.
pub fn loss_and_gradients(params: &ModelParams, ep: &Episode, weights: &[f64]) -> (f64, ModelParams) {
    assert_eq!(weights.len(), ep.len(), "one weight per generated token");
    let mut grads = params.zeros_like();
    let loss: f64 = -weights
        .iter()
        .zip(&ep.logprobs)
        .map(|(w, lp)| if *w == 0.0 { 0.0 } else { w * lp })
        .sum::<f64>();
    if weights.iter().all(|&w| w == 0.0) {
        return (loss, grads);
    }

    let dims = params.dims;
    let dh = dims.enc_hidden;
    let ds = dims.dec_hidden;
    let n = ep.encoder.len();
    let sql_len = params.sql_len();
    let mut d_states = vec![vec![0.0; 2 * dh]; n];
    let mut d_gates = vec![vec![0.0; ds]; n];
    let mut carry = vec![0.0; ds];

    for (t, step) in ep.steps.iter().enumerate().rev() {
        let mut ds_t = core::mem::take(&mut carry);
        let w = weights[t];
        if w != 0.0 {
            let dist = &step.dist;
            let p_chosen: f64 = step.chosen.iter().map(|&e| dist.probs[e]).sum();
            let s_t = &step.gru.h;
            for e in dist.mask.legal() {
                let indicator = if step.chosen.contains(&e) {
                    dist.probs[e] / p_chosen
                } else {
                    0.0
                };
                let g = -w * (indicator - dist.probs[e]);
                if g == 0.0 {
                    continue;
                }
                if e < sql_len {
                    crate::linalg::axpy(g, params.out.row(e), &mut ds_t);
                    crate::linalg::axpy(g, s_t, grads.out.row_mut(e));
                } else {
                    let j = e - sql_len;
                    crate::linalg::axpy(g, &ep.encoder.copy_gates[j], &mut ds_t);
                    crate::linalg::axpy(g, s_t, &mut d_gates[j]);
                }
            }
        }

        let mut dx = vec![0.0; dims.embed + 2 * dh];
        let mut ds_prev = gru::backward(&params.dec, &step.gru, &ds_t, &mut grads.dec, &mut dx);
        crate::linalg::axpy(1.0, &dx[..dims.embed], grads.embedding.row_mut(step.input_row));

        if n > 0 {
            let dc = &dx[dims.embed..];
            let mut query = vec![0.0; 2 * dh];
            params.attn.matvec_t_add(&step.gru.h_prev, &mut query);
            let d_alpha: Vec<f64> = ep.encoder.states.iter().map(|h| dot(dc, h)).collect();
            let mean: f64 = step.alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
            let mut d_query = vec![0.0; 2 * dh];
            for j in 0..n {
                let a = step.alpha[j];
                crate::linalg::axpy(a, dc, &mut d_states[j]);
                let de = a * (d_alpha[j] - mean);
                if de != 0.0 {
                    crate::linalg::axpy(de, &ep.encoder.states[j], &mut d_query);
                    crate::linalg::axpy(de, &query, &mut d_states[j]);
                }
            }
            grads.attn.add_outer(&step.gru.h_prev, &d_query);
            let mut tmp = vec![0.0; ds];
            params.attn.matvec(&d_query, &mut tmp);
            crate::linalg::axpy(1.0, &tmp, &mut ds_prev);
        }
        carry = ds_prev;
    }

    // s0 = init_w · backward_0 + init_b
    let ds0 = carry;
    crate::linalg::axpy(1.0, &ds0, &mut grads.init_b.data);
    if n > 0 {
        let b0 = &ep.encoder.states[0][dh..];
        grads.init_w.add_outer(&ds0, b0);
        let mut tmp = vec![0.0; dh];
        params.init_w.matvec_t_add(&ds0, &mut tmp);
        crate::linalg::axpy(1.0, &tmp, &mut d_states[0][dh..]);
    }

    // copy gates: g_j = σ(W_cᵀ h_j)
    for j in 0..n {
        let gate = &ep.encoder.copy_gates[j];
        let da: Vec<f64> = d_gates[j]
            .iter()
            .zip(gate)
            .map(|(d, g)| d * g * (1.0 - g))
            .collect();
        if da.iter().all(|&x| x == 0.0) {
            continue;
        }
        grads.copy.add_outer(&ep.encoder.states[j], &da);
        let mut tmp = vec![0.0; 2 * dh];
        params.copy.matvec(&da, &mut tmp);
        crate::linalg::axpy(1.0, &tmp, &mut d_states[j]);
    }

    // forward direction runs 0..n, so its gradient flows n-1 → 0
    let mut carry = vec![0.0; dh];
    for j in (0..n).rev() {
        let mut dhj = d_states[j][..dh].to_vec();
        crate::linalg::axpy(1.0, &carry, &mut dhj);
        let mut dx = vec![0.0; dims.embed];
        carry = gru::backward(&params.enc_fwd, &ep.encoder.fwd[j], &dhj, &mut grads.enc_fwd, &mut dx);
        crate::linalg::axpy(1.0, &dx, grads.embedding.row_mut(ep.encoder.rows[j]));
    }
    let mut carry = vec![0.0; dh];
    for j in 0..n {
        let mut dhj = d_states[j][dh..].to_vec();
        crate::linalg::axpy(1.0, &carry, &mut dhj);
        let mut dx = vec![0.0; dims.embed];
        carry = gru::backward(&params.enc_bwd, &ep.encoder.bwd[j], &dhj, &mut grads.enc_bwd, &mut dx);
        crate::linalg::axpy(1.0, &dx, grads.embedding.row_mut(ep.encoder.rows[j]));
    }

    (loss, grads)
}

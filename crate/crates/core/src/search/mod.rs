//! Verifier-guided search over the k-gram generator.
//!
//! * [`best_of_n`]: independent full rollouts, keep the outcome-verifier argmax.
//! * [`prm_beam_search`]: keep `B` partial candidates; each step expands every
//!   unfinished beam into `N` continuations of up to `M` tokens and keeps the
//!   top `B` of the pool by process-verifier score.
//! * [`partial_prm`]: beam search up to a token boundary, then `N` independent
//!   completions per beam, selected by an outcome verifier.
//!
//! Stream assignment follows enumeration order only. At step 0 expansion
//! `j` of beam slot `b` uses stream `b * N + j`, the same stream best-of-N
//! uses for candidate `b * N + j`. At later steps expansion 0 continues its
//! parent's stream and expansion `j > 0` gets a stream derived from
//! `(parent stream, step, j)`. Because draws are addressed by token position
//! (see [`crate::rng`]) results never depend on thread scheduling.

mod run;

pub use run::{run_search, ChannelSpec, RunConfig, SearchResult, VerifierBlock};

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::KGramModel;
use crate::rng::{child_stream_id, RngStream};
use crate::types::{TokenId, DEFAULT_MAX_CONTEXT};
use crate::verify::{select_best, Score, Verifier};

pub const DEFAULT_STEP_TOKENS: usize = 25;
pub const DEFAULT_EXPANSIONS: usize = 16;
/// Two seconds at 50 tokens per second.
pub const DEFAULT_SWITCH_TOKENS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub beam_width: usize,
    pub expansions: usize,
    pub step_tokens: usize,
    pub max_len: usize,
    pub prm_switch_tokens: Option<usize>,
    pub temperature: f64,
    /// Keep every step's scored pool in [`SearchOutcome::history`].
    #[serde(default)]
    pub record_history: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            beam_width: 1,
            expansions: DEFAULT_EXPANSIONS,
            step_tokens: DEFAULT_STEP_TOKENS,
            max_len: DEFAULT_MAX_CONTEXT,
            prm_switch_tokens: Some(DEFAULT_SWITCH_TOKENS),
            temperature: 1.0,
            record_history: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 || self.expansions == 0 || self.step_tokens == 0 || self.max_len == 0 {
            return Err(Error::config("B, N, M and max_len must all be >= 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }

    /// Full-candidate equivalents spent by the beam algorithms.
    pub fn budget(&self) -> usize {
        self.beam_width * self.expansions
    }
}

/// Where a candidate came from: the step that produced its latest tokens,
/// the beam slot it extended, and which of that beam's expansions it is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Lineage {
    pub step: usize,
    pub beam: usize,
    pub expansion: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Speech tokens including any prompt, eos included when drawn.
    pub tokens: Vec<TokenId>,
    pub finished: bool,
    /// One process-verifier score per step in which this candidate was scored.
    pub prm_scores: Vec<f64>,
    pub final_score: Option<Score>,
    pub lineage: Lineage,
    pub stream_id: u64,
    #[serde(skip)]
    ranking: Option<Score>,
}

impl Candidate {
    fn root(prompt: &[TokenId], slot: usize, stream_id: u64) -> Self {
        Self {
            tokens: prompt.to_vec(),
            finished: false,
            prm_scores: Vec::new(),
            final_score: None,
            lineage: Lineage { step: 0, beam: slot, expansion: 0 },
            stream_id,
            ranking: None,
        }
    }

    /// Score used for the most recent selection.
    pub fn ranking(&self) -> Option<&Score> {
        self.ranking.as_ref()
    }
}

/// Compute spent by a search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Full-candidate equivalents (`count` for best-of-N, `B * N` for beams).
    pub candidates_generated: usize,
    /// Rollout segments actually sampled.
    pub expansions: usize,
    pub tokens_generated: usize,
    pub verifier_calls: usize,
}

/// What a search returns. `pool` is the set the final selection was made
/// from; `history` holds every beam step's scored pool when requested.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub selected: Candidate,
    pub beams: Vec<Candidate>,
    pub pool: Vec<Candidate>,
    pub history: Vec<Vec<Candidate>>,
    pub budget: Budget,
}

/// A generation instance: model, conditioning text, optional speech prompt
/// and the master seed every stream derives from.
#[derive(Clone, Copy, Debug)]
pub struct SearchProblem<'a> {
    pub model: &'a KGramModel,
    pub text: &'a [TokenId],
    pub prompt: &'a [TokenId],
    pub seed: u64,
}

impl<'a> SearchProblem<'a> {
    pub fn new(model: &'a KGramModel, text: &'a [TokenId], seed: u64) -> Self {
        Self { model, text, prompt: &[], seed }
    }

    pub fn with_prompt(mut self, prompt: &'a [TokenId]) -> Self {
        self.prompt = prompt;
        self
    }

    /// Tokens handed to verifiers: prompt and generated tokens, minus eos.
    pub fn content<'c>(&self, c: &'c Candidate) -> &'c [TokenId] {
        self.model.speech_vocab().strip_eos(&c.tokens)
    }

    fn score(&self, v: &dyn Verifier, c: &Candidate) -> Score {
        v.score_state(self.content(c), c.finished)
    }

    /// Extends `parent` to `stop_len` tokens on `stream_id`.
    fn rollout(&self, parent: &Candidate, stream_id: u64, stop_len: usize, max_len: usize, temperature: f64) -> (Candidate, usize) {
        let mut rng = RngStream::new(self.seed, stream_id);
        let mut tokens = parent.tokens.clone();
        let (added, eos) = self.model.extend(self.text, &mut tokens, &mut rng, stop_len, temperature);
        let finished = eos || tokens.len() >= max_len;
        let child = Candidate { tokens, finished, stream_id, ranking: None, final_score: None, ..parent.clone() };
        (child, added)
    }
}

fn expansion_stream(step: usize, slot: usize, parent_stream: u64, j: usize, n: usize) -> u64 {
    if step == 0 {
        (slot * n + j) as u64
    } else if j == 0 {
        parent_stream
    } else {
        child_stream_id(parent_stream, &[step as u64, j as u64])
    }
}

/// Best-of-N with an outcome verifier. Candidate `i` is generated on stream
/// `i`; ties go to the lowest `i`.
pub fn best_of_n(
    problem: &SearchProblem<'_>,
    verifier: &dyn Verifier,
    count: usize,
    max_len: usize,
    temperature: f64,
) -> Result<SearchOutcome> {
    if count == 0 {
        return Err(Error::config("best-of-N needs count >= 1"));
    }
    if max_len == 0 || !(temperature > 0.0) {
        return Err(Error::config("max_len must be >= 1 and temperature positive"));
    }
    let root = Candidate::root(problem.prompt, 0, 0);
    let pool: Vec<(Candidate, usize)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let (mut c, added) = problem.rollout(&root, i as u64, max_len, max_len, temperature);
            c.finished = true;
            c.lineage = Lineage { step: 0, beam: 0, expansion: i };
            let s = verifier.score(problem.content(&c));
            c.ranking = Some(s.clone());
            c.final_score = Some(s);
            (c, added)
        })
        .collect();
    let budget = Budget {
        candidates_generated: count,
        expansions: count,
        tokens_generated: pool.iter().map(|(_, a)| a).sum(),
        verifier_calls: count,
    };
    let pool: Vec<Candidate> = pool.into_iter().map(|(c, _)| c).collect();
    let best = select_best(pool.iter().map(|c| c.final_score.as_ref().unwrap())).unwrap();
    Ok(SearchOutcome { selected: pool[best].clone(), beams: Vec::new(), pool, history: Vec::new(), budget })
}

struct BeamPhase {
    beams: Vec<Candidate>,
    last_pool: Vec<Candidate>,
    history: Vec<Vec<Candidate>>,
    steps: usize,
}

fn by_rank(a: &(usize, &Candidate), b: &(usize, &Candidate)) -> Ordering {
    let (sa, sb) = (a.1.ranking.as_ref().unwrap(), b.1.ranking.as_ref().unwrap());
    sb.cmp_rank(sa).then(a.0.cmp(&b.0))
}

/// Beam loop shared by [`prm_beam_search`] and [`partial_prm`]. Stops once
/// every beam is finished or has reached `horizon` tokens.
fn beam_phase(
    problem: &SearchProblem<'_>,
    prm: &dyn Verifier,
    cfg: &SearchConfig,
    horizon: usize,
    budget: &mut Budget,
) -> BeamPhase {
    let (b_width, n) = (cfg.beam_width, cfg.expansions);
    let mut beams: Vec<Candidate> = (0..b_width).map(|b| Candidate::root(problem.prompt, b, (b * n) as u64)).collect();
    let mut last_pool = Vec::new();
    let mut history = Vec::new();
    let mut step = 0;
    let done = |c: &Candidate| c.finished || c.tokens.len() >= horizon;

    while !beams.iter().all(done) {
        let tasks: Vec<(usize, Option<usize>)> = beams
            .iter()
            .enumerate()
            .flat_map(|(slot, beam)| {
                if done(beam) {
                    vec![(slot, None)]
                } else {
                    (0..n).map(|j| (slot, Some(j))).collect()
                }
            })
            .collect();

        let results: Vec<(Candidate, usize, bool)> = tasks
            .par_iter()
            .map(|&(slot, exp)| {
                let parent = &beams[slot];
                match exp {
                    None => (parent.clone(), 0, false),
                    Some(j) => {
                        let stream = expansion_stream(step, slot, parent.stream_id, j, n);
                        let stop = (parent.tokens.len() + cfg.step_tokens).min(horizon);
                        let (mut c, added) = problem.rollout(parent, stream, stop, cfg.max_len, cfg.temperature);
                        c.lineage = Lineage { step, beam: slot, expansion: j };
                        let s = problem.score(prm, &c);
                        c.prm_scores.push(s.value);
                        c.ranking = Some(s);
                        (c, added, true)
                    }
                }
            })
            .collect();

        for (_, added, scored) in &results {
            if *scored {
                budget.expansions += 1;
                budget.verifier_calls += 1;
                budget.tokens_generated += added;
            }
        }
        let pool: Vec<Candidate> = results.into_iter().map(|(c, _, _)| c).collect();
        let mut order: Vec<(usize, &Candidate)> = pool.iter().enumerate().collect();
        order.sort_by(by_rank);
        beams = order.iter().take(b_width).map(|(_, c)| (*c).clone()).collect();
        if cfg.record_history {
            history.push(pool.clone());
        }
        last_pool = pool;
        step += 1;
    }
    BeamPhase { beams, last_pool, history, steps: step }
}

fn check_room(problem: &SearchProblem<'_>, cfg: &SearchConfig) -> Result<()> {
    if problem.prompt.len() >= cfg.max_len {
        return Err(Error::config(format!(
            "prompt of {} tokens leaves no room below max_len {}",
            problem.prompt.len(),
            cfg.max_len
        )));
    }
    Ok(())
}

fn check_prefix_capable(v: &dyn Verifier) -> Result<()> {
    if !v.accepts_prefix() {
        return Err(Error::config(format!("verifier '{}' cannot score prefixes and cannot drive beam search", v.name())));
    }
    Ok(())
}

/// Process-reward beam search. Returns the final beams best first; the
/// selection is the top beam, or, when `rerank` is given, the best finished
/// member of the last step's pool under `rerank`.
pub fn prm_beam_search(
    problem: &SearchProblem<'_>,
    prm: &dyn Verifier,
    cfg: &SearchConfig,
    rerank: Option<&dyn Verifier>,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    check_prefix_capable(prm)?;
    check_room(problem, cfg)?;
    let mut budget = Budget { candidates_generated: cfg.budget(), ..Budget::default() };
    let phase = beam_phase(problem, prm, cfg, cfg.max_len, &mut budget);

    let (selected, pool) = match rerank {
        None => {
            let mut beams = phase.beams.clone();
            for c in &mut beams {
                c.final_score = c.ranking.clone();
            }
            (beams[0].clone(), beams)
        }
        Some(v) => {
            let mut finished: Vec<Candidate> = phase.last_pool.iter().filter(|c| c.finished).cloned().collect();
            for c in &mut finished {
                let s = v.score(problem.content(c));
                budget.verifier_calls += 1;
                c.final_score = Some(s);
            }
            let best = select_best(finished.iter().map(|c| c.final_score.as_ref().unwrap())).unwrap();
            (finished[best].clone(), finished)
        }
    };
    Ok(SearchOutcome { selected, beams: phase.beams, pool, history: phase.history, budget })
}

/// Beam search for the first `prm_switch_tokens` tokens, then `N`
/// independent completions of each surviving beam, scored by `orm` (or by
/// `rerank` when given). A boundary of 0 reduces to best-of-`B*N` and a
/// boundary at or beyond `max_len` to plain beam search.
pub fn partial_prm(
    problem: &SearchProblem<'_>,
    prm: &dyn Verifier,
    orm: &dyn Verifier,
    cfg: &SearchConfig,
    rerank: Option<&dyn Verifier>,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    check_prefix_capable(prm)?;
    check_room(problem, cfg)?;
    let switch = cfg
        .prm_switch_tokens
        .ok_or_else(|| Error::config("partial PRM needs a switch boundary"))?;
    if switch > cfg.max_len {
        return Err(Error::config(format!("switch boundary {switch} exceeds max_len {}", cfg.max_len)));
    }
    let horizon = (problem.prompt.len() + switch).min(cfg.max_len);
    let mut budget = Budget { candidates_generated: cfg.budget(), ..Budget::default() };
    let phase = beam_phase(problem, prm, cfg, horizon, &mut budget);
    let n = cfg.expansions;
    let step = phase.steps;

    let tasks: Vec<(usize, Option<usize>)> = phase
        .beams
        .iter()
        .enumerate()
        .flat_map(|(slot, beam)| if beam.finished { vec![(slot, None)] } else { (0..n).map(|j| (slot, Some(j))).collect() })
        .collect();
    let judge = rerank.unwrap_or(orm);
    let results: Vec<(Candidate, usize, bool)> = tasks
        .par_iter()
        .map(|&(slot, exp)| {
            let parent = &phase.beams[slot];
            let (mut c, added, fresh) = match exp {
                None => (parent.clone(), 0, false),
                Some(j) => {
                    let stream = expansion_stream(step, slot, parent.stream_id, j, n);
                    let (mut c, added) = problem.rollout(parent, stream, cfg.max_len, cfg.max_len, cfg.temperature);
                    c.lineage = Lineage { step, beam: slot, expansion: j };
                    c.finished = true;
                    (c, added, true)
                }
            };
            let s = judge.score(problem.content(&c));
            c.ranking = Some(s.clone());
            c.final_score = Some(s);
            (c, added, fresh)
        })
        .collect();
    for (_, added, fresh) in &results {
        if *fresh {
            budget.expansions += 1;
            budget.tokens_generated += added;
        }
        budget.verifier_calls += 1;
    }
    let pool: Vec<Candidate> = results.into_iter().map(|(c, _, _)| c).collect();
    let best = select_best(pool.iter().map(|c| c.final_score.as_ref().unwrap())).unwrap();
    Ok(SearchOutcome { selected: pool[best].clone(), beams: phase.beams, pool, history: phase.history, budget })
}

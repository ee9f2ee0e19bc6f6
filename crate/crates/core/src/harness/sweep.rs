//! Budget sweeps over the search algorithms (the test-time scaling curves).

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::testbed::{Testbed, TestbedSpec};
use crate::error::{Error, Result};
use crate::search::{best_of_n, partial_prm, prm_beam_search, SearchConfig, SearchOutcome, SearchProblem};
use crate::verify::{VerifierSpec, SIMILARITY, WER};

pub const CSV_HEADER: &str = "algorithm,budget,seed,similarity,wer,tokens";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Outcome-verifier best-of-(B*N) on similarity.
    BestOfN,
    /// Similarity beam search, top beam selected.
    PrmBeam,
    /// Similarity beam search, lowest-WER finished member of the final pool.
    PrmBeamWer,
    /// Similarity beam search to the switch boundary, similarity completions.
    PartialPrm,
    /// Similarity beam search to the switch boundary, WER-ranked completions.
    PartialPrmWer,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::BestOfN => "best_of_n",
            Algorithm::PrmBeam => "prm_beam",
            Algorithm::PrmBeamWer => "prm_beam_wer",
            Algorithm::PartialPrm => "partial_prm",
            Algorithm::PartialPrmWer => "partial_prm_wer",
        }
    }
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "one")]
    pub format_version: u32,
    /// Full-candidate budgets `B * N`, strictly increasing.
    pub budgets: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    /// Seeds per cell.
    pub seeds: usize,
    /// `N` for the beam algorithms (capped by the budget); `B = budget / N`.
    pub expansions: usize,
    pub step_tokens: usize,
    pub switch_tokens: usize,
    pub max_len: usize,
    pub temperature: f64,
    #[serde(default)]
    pub testbed: TestbedSpec,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            format_version: 1,
            budgets: vec![1, 4, 16, 64, 256],
            algorithms: vec![
                Algorithm::BestOfN,
                Algorithm::PrmBeam,
                Algorithm::PrmBeamWer,
                Algorithm::PartialPrm,
                Algorithm::PartialPrmWer,
            ],
            seeds: 200,
            expansions: 16,
            step_tokens: 3,
            switch_tokens: 9,
            max_len: 48,
            temperature: 1.0,
            testbed: TestbedSpec::default(),
        }
    }
}

impl SweepSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(s).map_err(|e| Error::config(format!("sweep config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != 1 {
            return Err(Error::config(format!("unsupported sweep format_version {}", self.format_version)));
        }
        if self.budgets.is_empty() || self.algorithms.is_empty() || self.seeds == 0 {
            return Err(Error::config("sweep needs budgets, algorithms and at least one seed"));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) || self.budgets[0] == 0 {
            return Err(Error::config("budgets must be positive and strictly increasing"));
        }
        for &b in &self.budgets {
            self.split(b)?;
        }
        self.search_config(1, 1).validate()
    }

    /// `(B, N)` for a budget.
    pub fn split(&self, budget: usize) -> Result<(usize, usize)> {
        let n = self.expansions.min(budget).max(1);
        if !budget.is_multiple_of(n) {
            return Err(Error::config(format!("budget {budget} is not a multiple of N = {n}")));
        }
        Ok((budget / n, n))
    }

    pub fn search_config(&self, beam_width: usize, expansions: usize) -> SearchConfig {
        SearchConfig {
            beam_width,
            expansions,
            step_tokens: self.step_tokens,
            max_len: self.max_len,
            prm_switch_tokens: Some(self.switch_tokens.min(self.max_len)),
            temperature: self.temperature,
            record_history: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub budget: usize,
    pub seed: u64,
    pub similarity: f64,
    pub wer: f64,
    pub tokens: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(s, "{},{},{},{},{},{}", r.algorithm.name(), r.budget, r.seed, r.similarity, r.wer, r.tokens)
                .expect("string write");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Rows of one cell column, in seed order.
    pub fn column(&self, algorithm: Algorithm, budget: usize) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.algorithm == algorithm && r.budget == budget).collect()
    }
}

/// Outcome of one (algorithm, budget, seed) cell.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub similarity: f64,
    pub wer: f64,
    pub outcome: SearchOutcome,
}

/// Runs one algorithm on the testbed instance for `seed`.
pub fn run_cell(
    testbed: &Testbed,
    algorithm: Algorithm,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<CellOutcome> {
    let inst = testbed.instance(seed);
    let ctx = testbed.verifier_context(&inst);
    let sim = ctx.build(&VerifierSpec::similarity())?;
    let wer = ctx.build(&VerifierSpec::wer())?;
    let wer_first = ctx.composite(&[WER.to_string(), SIMILARITY.to_string()])?;
    let problem = SearchProblem::new(testbed.model(), &inst.text, seed);
    let outcome = match algorithm {
        Algorithm::BestOfN => best_of_n(&problem, sim.as_ref(), cfg.budget(), cfg.max_len, cfg.temperature)?,
        Algorithm::PrmBeam => prm_beam_search(&problem, sim.as_ref(), cfg, None)?,
        Algorithm::PrmBeamWer => prm_beam_search(&problem, sim.as_ref(), cfg, Some(&wer_first))?,
        Algorithm::PartialPrm => partial_prm(&problem, sim.as_ref(), sim.as_ref(), cfg, None)?,
        Algorithm::PartialPrmWer => partial_prm(&problem, sim.as_ref(), sim.as_ref(), cfg, Some(&wer_first))?,
    };
    let content = problem.content(&outcome.selected);
    Ok(CellOutcome {
        similarity: sim.score(content).value,
        wer: wer.score(content).component(WER).expect("wer component"),
        outcome,
    })
}

/// Runs every (algorithm, budget, seed) cell. Seeds are
/// `base_seed .. base_seed + spec.seeds`; rows come out in
/// (algorithm, budget, seed) order whatever the worker count.
pub fn run_sweep(spec: &SweepSpec, base_seed: u64) -> Result<SweepResult> {
    spec.validate()?;
    let testbed = Testbed::build(&spec.testbed)?;
    let mut cells = Vec::new();
    for &alg in &spec.algorithms {
        for &budget in &spec.budgets {
            let (b, n) = spec.split(budget)?;
            for s in 0..spec.seeds as u64 {
                cells.push((alg, budget, b, n, base_seed + s));
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|&(alg, budget, b, n, seed)| {
            let cell = run_cell(&testbed, alg, &spec.search_config(b, n), seed)?;
            Ok(SweepRow {
                algorithm: alg,
                budget,
                seed,
                similarity: cell.similarity,
                wer: cell.wer,
                tokens: cell.outcome.budget.tokens_generated,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}

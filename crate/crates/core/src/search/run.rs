//! JSON run configs and the algorithm dispatcher.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{best_of_n, partial_prm, prm_beam_search, Budget, Lineage, SearchConfig, SearchOutcome, SearchProblem};
use super::{DEFAULT_STEP_TOKENS, DEFAULT_SWITCH_TOKENS};
use crate::corpus::{Channel, CorpusConfig};
use crate::error::{Error, Result};
use crate::harness::testbed::{Testbed, TestbedSpec};
use crate::lm::KGramModel;
use crate::types::{TokenId, DEFAULT_MAX_CONTEXT};
use crate::verify::{Score, Verifier, VerifierContext, VerifierSpec, SIMILARITY, WER};

pub const RESULT_FORMAT_VERSION: u32 = 1;

fn one() -> u32 {
    1
}
fn default_m() -> usize {
    DEFAULT_STEP_TOKENS
}
fn default_max_len() -> usize {
    DEFAULT_MAX_CONTEXT
}
fn default_switch() -> Option<usize> {
    Some(DEFAULT_SWITCH_TOKENS)
}
fn default_temperature() -> f64 {
    1.0
}

/// Channel parameters for the transcription verifier; vocabs come from the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub expansion: u32,
    #[serde(default)]
    pub flip_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifierBlock {
    #[serde(default = "VerifierSpec::similarity")]
    pub prm: VerifierSpec,
    #[serde(default = "VerifierSpec::similarity")]
    pub orm: VerifierSpec,
    /// Lexicographic key order for the final selection, e.g. `["wer", "similarity"]`.
    #[serde(default)]
    pub final_rerank: Option<Vec<String>>,
}

impl Default for VerifierBlock {
    fn default() -> Self {
        Self { prm: VerifierSpec::similarity(), orm: VerifierSpec::similarity(), final_rerank: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "one")]
    pub format_version: u32,
    pub algorithm: String,
    #[serde(rename = "B")]
    pub beam_width: usize,
    #[serde(rename = "N")]
    pub expansions: usize,
    #[serde(rename = "M", default = "default_m")]
    pub step_tokens: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_switch")]
    pub switch_tokens: Option<usize>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub seed: u64,
    /// Best-of-N sample count; defaults to `B * N`.
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub verifiers: VerifierBlock,
    /// Model file, relative to the config file's directory.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Synthetic testbed trained in-process; used when `model` is absent.
    #[serde(default)]
    pub testbed: Option<TestbedSpec>,
    #[serde(default)]
    pub channel: Option<ChannelSpec>,
    #[serde(default)]
    pub text: Option<Vec<TokenId>>,
    #[serde(default)]
    pub reference: Option<Vec<TokenId>>,
    #[serde(default)]
    pub prompt: Vec<TokenId>,
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s).map_err(|e| Error::config(format!("run config: {e}")))?;
        if cfg.format_version != 1 {
            return Err(Error::config(format!("unsupported run config format_version {}", cfg.format_version)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            beam_width: self.beam_width,
            expansions: self.expansions,
            step_tokens: self.step_tokens,
            max_len: self.max_len,
            prm_switch_tokens: self.switch_tokens,
            temperature: self.temperature,
            record_history: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub format_version: u32,
    pub algorithm: String,
    pub seed: u64,
    #[serde(rename = "B")]
    pub beam_width: usize,
    #[serde(rename = "N")]
    pub expansions: usize,
    #[serde(rename = "M")]
    pub step_tokens: usize,
    pub max_len: usize,
    pub switch_tokens: Option<usize>,
    pub text: Vec<TokenId>,
    pub reference: Option<Vec<TokenId>>,
    pub tokens: Vec<TokenId>,
    pub finished: bool,
    pub lineage: Lineage,
    pub prm_scores: Vec<f64>,
    pub selected_score: Option<Score>,
    pub similarity: Option<f64>,
    pub wer: Option<f64>,
    pub budget: Budget,
}

impl SearchResult {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

struct Resolved {
    model: Arc<KGramModel>,
    channel: Option<Channel>,
    text: Vec<TokenId>,
    reference: Option<Vec<TokenId>>,
}

fn resolve(cfg: &RunConfig, base_dir: &Path) -> Result<Resolved> {
    match (&cfg.model, &cfg.testbed) {
        (Some(path), _) => {
            let model = Arc::new(KGramModel::load(&base_dir.join(path))?);
            let channel = match &cfg.channel {
                Some(ch) => Some(
                    CorpusConfig {
                        text_vocab: model.text_vocab().size(),
                        speech_vocab: model.speech_vocab().size(),
                        expansion: ch.expansion,
                        flip_p: ch.flip_p,
                        text_len: [1, 1],
                        pairs: 1,
                        max_context: usize::MAX,
                    }
                    .channel()?,
                ),
                None => None,
            };
            let text = cfg.text.clone().ok_or_else(|| Error::config("run config with a model file needs 'text'"))?;
            Ok(Resolved { model, channel, text, reference: cfg.reference.clone() })
        }
        (None, Some(spec)) => {
            let tb = Testbed::build(spec)?;
            let inst = tb.instance(cfg.seed);
            Ok(Resolved {
                channel: Some(tb.channel().clone()),
                text: cfg.text.clone().unwrap_or(inst.text),
                reference: cfg.reference.clone().or(Some(inst.reference)),
                model: tb.model_arc(),
            })
        }
        (None, None) => Err(Error::config("run config needs either 'model' or 'testbed'")),
    }
}

/// Runs the configured algorithm. Relative paths resolve against `base_dir`.
pub fn run_search(cfg: &RunConfig, base_dir: &Path) -> Result<SearchResult> {
    let search_cfg = cfg.search_config();
    search_cfg.validate()?;
    let r = resolve(cfg, base_dir)?;
    let model = r.model.as_ref();
    for &t in &r.text {
        if !model.text_vocab().contains(t) {
            return Err(Error::config(format!("text id {t} outside the model's text vocab")));
        }
    }
    for &y in r.reference.iter().flatten().chain(&cfg.prompt) {
        if !model.speech_vocab().contains(y) {
            return Err(Error::config(format!("speech id {y} outside the model's speech vocab")));
        }
    }
    let ctx = VerifierContext {
        reference: r.reference.clone(),
        text: r.text.clone(),
        channel: r.channel.clone(),
        model: Some(r.model.clone()),
    };
    let problem = SearchProblem::new(model, &r.text, cfg.seed).with_prompt(&cfg.prompt);
    let rerank: Option<Arc<dyn Verifier>> = match &cfg.verifiers.final_rerank {
        Some(keys) => Some(Arc::new(ctx.composite(keys)?)),
        None => None,
    };
    let rerank_ref = rerank.as_deref();

    let outcome: SearchOutcome = match cfg.algorithm.as_str() {
        "best_of_n" => {
            let orm = rerank.clone().map_or_else(|| ctx.build(&cfg.verifiers.orm), Ok)?;
            let count = cfg.count.unwrap_or(search_cfg.budget());
            best_of_n(&problem, orm.as_ref(), count, cfg.max_len, cfg.temperature)?
        }
        "prm_beam" => {
            let prm = ctx.build(&cfg.verifiers.prm)?;
            prm_beam_search(&problem, prm.as_ref(), &search_cfg, rerank_ref)?
        }
        "partial_prm" => {
            let prm = ctx.build(&cfg.verifiers.prm)?;
            let orm = ctx.build(&cfg.verifiers.orm)?;
            partial_prm(&problem, prm.as_ref(), orm.as_ref(), &search_cfg, rerank_ref)?
        }
        other => return Err(Error::config(format!("unknown algorithm '{other}'"))),
    };

    let content = problem.content(&outcome.selected);
    let similarity = ctx.build(&VerifierSpec { kind: SIMILARITY.into(), keys: vec![] }).ok().map(|v| v.score(content).value);
    let wer = ctx
        .build(&VerifierSpec { kind: WER.into(), keys: vec![] })
        .ok()
        .and_then(|v| v.score(content).component(WER));

    let sel = outcome.selected;
    Ok(SearchResult {
        format_version: RESULT_FORMAT_VERSION,
        algorithm: cfg.algorithm.clone(),
        seed: cfg.seed,
        beam_width: cfg.beam_width,
        expansions: cfg.expansions,
        step_tokens: cfg.step_tokens,
        max_len: cfg.max_len,
        switch_tokens: cfg.switch_tokens,
        text: r.text,
        reference: r.reference,
        tokens: sel.tokens,
        finished: sel.finished,
        lineage: sel.lineage,
        prm_scores: sel.prm_scores,
        selected_score: sel.final_score,
        similarity,
        wer,
        budget: outcome.budget,
    })
}

//! Count-based k-gram conditional model over the joint text/speech stream.
//!
//! The context of a target position is the `order` joint-stream ids that
//! precede it, left-padded with a reserved pad id. Probabilities use
//! add-alpha smoothing:
//!
//! ```text
//! P(y | c) = (count(c, y) + alpha) / (sum_y' count(c, y') + alpha * |V|)
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{Direction, JointLayout, JointSequence, TokenId, Vocab};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.1;
const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    next: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KGramModel {
    order: usize,
    alpha: f64,
    direction: Direction,
    text_vocab: Vocab,
    speech_vocab: Vocab,
    layout: JointLayout,
    counts: HashMap<Vec<u32>, ContextCounts>,
}

/// Negative log-likelihood (nats) over the loss-masked positions.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub nll: f64,
    pub token_count: usize,
    pub per_position: Vec<f64>,
}

impl LossReport {
    pub fn mean(&self) -> f64 {
        if self.token_count == 0 {
            0.0
        } else {
            self.nll / self.token_count as f64
        }
    }
}

/// Counts every (context, next target token) occurrence in `corpus`.
pub fn train(corpus: &Corpus, order: usize, alpha: f64, direction: Direction) -> Result<KGramModel> {
    if corpus.is_empty() {
        return Err(Error::Training("cannot train on an empty corpus".into()));
    }
    let mut model = KGramModel::empty(order, alpha, direction, corpus.text_vocab, corpus.speech_vocab)?;
    let size = model.target_vocab().size() as usize;
    for pair in &corpus.pairs {
        let seq = pair.with_direction(direction);
        let stream = seq.joint_stream(&model.layout);
        let (src, tgt) = seq.source_target();
        for (i, &y) in tgt.iter().enumerate() {
            let pos = src.len() + i;
            let ctx = model.window(&stream[..pos]);
            let entry = model
                .counts
                .entry(ctx)
                .or_insert_with(|| ContextCounts { total: 0, next: vec![0; size] });
            entry.next[y as usize] += 1;
            entry.total += 1;
        }
    }
    Ok(model)
}

impl KGramModel {
    /// A model with no observations; every conditional is uniform.
    pub fn empty(order: usize, alpha: f64, direction: Direction, text_vocab: Vocab, speech_vocab: Vocab) -> Result<Self> {
        if order == 0 {
            return Err(Error::config("order_k must be >= 1"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be positive and finite, got {alpha}")));
        }
        Ok(Self {
            order,
            alpha,
            direction,
            text_vocab,
            speech_vocab,
            layout: JointLayout::new(&text_vocab, &speech_vocab),
            counts: HashMap::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn text_vocab(&self) -> &Vocab {
        &self.text_vocab
    }

    pub fn speech_vocab(&self) -> &Vocab {
        &self.speech_vocab
    }

    pub fn layout(&self) -> &JointLayout {
        &self.layout
    }

    pub fn target_vocab(&self) -> &Vocab {
        match self.direction {
            Direction::Tts => &self.speech_vocab,
            Direction::Asr => &self.text_vocab,
        }
    }

    pub fn source_vocab(&self) -> &Vocab {
        match self.direction {
            Direction::Tts => &self.text_vocab,
            Direction::Asr => &self.speech_vocab,
        }
    }

    /// Number of distinct observed contexts.
    pub fn context_count(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, context: &[u32], next: TokenId) -> u64 {
        self.counts.get(context).map_or(0, |c| c.next[next as usize])
    }

    /// Last `order` ids of an encoded prefix, left-padded.
    pub fn window(&self, prefix: &[u32]) -> Vec<u32> {
        let take = prefix.len().min(self.order);
        let mut ctx = vec![self.layout.pad(); self.order - take];
        ctx.extend_from_slice(&prefix[prefix.len() - take..]);
        ctx
    }

    /// Context for the next target token given raw source and target ids.
    pub fn context_for(&self, source: &[TokenId], target: &[TokenId]) -> Vec<u32> {
        let mut ctx = Vec::with_capacity(self.order);
        let from_tgt = target.len().min(self.order);
        let from_src = (self.order - from_tgt).min(source.len());
        ctx.resize(self.order - from_tgt - from_src, self.layout.pad());
        ctx.extend(source[source.len() - from_src..].iter().map(|&t| self.layout.source(self.direction, t)));
        ctx.extend(target[target.len() - from_tgt..].iter().map(|&t| self.layout.target(self.direction, t)));
        ctx
    }

    pub fn prob(&self, context: &[u32], next: TokenId) -> f64 {
        let size = self.target_vocab().size() as f64;
        match self.counts.get(context) {
            Some(c) => (c.next[next as usize] as f64 + self.alpha) / (c.total as f64 + self.alpha * size),
            None => 1.0 / size,
        }
    }

    pub fn distribution(&self, context: &[u32]) -> Vec<f64> {
        let size = self.target_vocab().size();
        match self.counts.get(context) {
            Some(c) => {
                let denom = c.total as f64 + self.alpha * size as f64;
                c.next.iter().map(|&n| (n as f64 + self.alpha) / denom).collect()
            }
            None => vec![1.0 / size as f64; size as usize],
        }
    }

    /// Scores the loss-masked positions of `seq`. The sequence must use this
    /// model's vocabs and loss direction.
    pub fn log_prob(&self, seq: &JointSequence) -> Result<LossReport> {
        if seq.direction != self.direction {
            return Err(Error::config(format!(
                "sequence direction {:?} does not match model direction {:?}",
                seq.direction, self.direction
            )));
        }
        seq.validate(&self.text_vocab, &self.speech_vocab, usize::MAX)?;
        let stream = seq.joint_stream(&self.layout);
        let (src, tgt) = seq.source_target();
        let per_position: Vec<f64> = tgt
            .iter()
            .enumerate()
            .map(|(i, &y)| -self.prob(&self.window(&stream[..src.len() + i]), y).ln())
            .collect();
        Ok(LossReport { nll: per_position.iter().sum(), token_count: per_position.len(), per_position })
    }

    /// Mean per-token NLL over a set of sequences (re-laid out in this
    /// model's direction).
    pub fn mean_nll(&self, pairs: &[JointSequence]) -> Result<f64> {
        let (mut nll, mut n) = (0.0, 0usize);
        for p in pairs {
            let r = self.log_prob(&p.with_direction(self.direction))?;
            nll += r.nll;
            n += r.token_count;
        }
        Ok(if n == 0 { 0.0 } else { nll / n as f64 })
    }

    /// Draws one target token from `P(.|context)^(1/temperature)`, by
    /// inverse transform over ids in ascending order.
    pub fn sample_next(&self, context: &[u32], rng: &mut RngStream, temperature: f64) -> TokenId {
        debug_assert!(temperature > 0.0);
        let dist = self.distribution(context);
        let weights: Vec<f64> = if temperature == 1.0 {
            dist
        } else {
            let max_ln = dist.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ln();
            dist.iter().map(|p| ((p.ln() - max_ln) / temperature).exp()).collect()
        };
        let total: f64 = weights.iter().sum();
        let u = rng.next_f64() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (y, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                last_positive = y;
            }
            acc += w;
            if u < acc {
                return y as TokenId;
            }
        }
        last_positive as TokenId
    }

    /// Appends target tokens to `target` until eos is drawn or its length
    /// reaches `stop_len`. The token at position `p` consumes draw `p` of
    /// `rng`. Returns the number of tokens appended and whether eos was drawn.
    pub fn extend(
        &self,
        source: &[TokenId],
        target: &mut Vec<TokenId>,
        rng: &mut RngStream,
        stop_len: usize,
        temperature: f64,
    ) -> (usize, bool) {
        let eos = self.target_vocab().eos();
        let start = target.len();
        if target.last() == Some(&eos) {
            return (0, true);
        }
        while target.len() < stop_len {
            rng.seek(target.len() as u64);
            let ctx = self.context_for(source, target);
            let y = self.sample_next(&ctx, rng, temperature);
            target.push(y);
            if y == eos {
                return (target.len() - start, true);
            }
        }
        (target.len() - start, false)
    }

    /// Samples a target sequence of at most `max_len` tokens given `source`.
    /// Eos is included in the output when drawn.
    pub fn generate(&self, source: &[TokenId], rng: &mut RngStream, max_len: usize, temperature: f64) -> Vec<TokenId> {
        self.generate_with_prompt(source, &[], rng, max_len, temperature)
    }

    /// Like [`KGramModel::generate`] but continues from a target-side prompt.
    /// The prompt counts toward `max_len` and is returned as part of the output.
    pub fn generate_with_prompt(
        &self,
        source: &[TokenId],
        prompt: &[TokenId],
        rng: &mut RngStream,
        max_len: usize,
        temperature: f64,
    ) -> Vec<TokenId> {
        let mut out = prompt.to_vec();
        self.extend(source, &mut out, rng, max_len.max(1), temperature);
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(f), &self.to_dump())
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let dump: ModelDump =
            serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Format(format!("model file: {e}")))?;
        Self::from_dump(dump)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_dump()).expect("model dump serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let dump: ModelDump = serde_json::from_str(s).map_err(|e| Error::Format(format!("model json: {e}")))?;
        Self::from_dump(dump)
    }

    fn to_dump(&self) -> ModelDump {
        let mut contexts: Vec<ContextDump> = self
            .counts
            .iter()
            .map(|(ctx, c)| ContextDump {
                context: ctx.clone(),
                next: c.next.iter().enumerate().filter(|(_, &n)| n > 0).map(|(y, &n)| (y as u32, n)).collect(),
            })
            .collect();
        contexts.sort_by(|a, b| a.context.cmp(&b.context));
        ModelDump {
            format_version: MODEL_FORMAT_VERSION,
            order_k: self.order,
            alpha: self.alpha,
            direction: self.direction,
            text_vocab: self.text_vocab,
            speech_vocab: self.speech_vocab,
            counts: contexts,
        }
    }

    fn from_dump(d: ModelDump) -> Result<Self> {
        if d.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model format_version {}", d.format_version)));
        }
        let mut m = Self::empty(d.order_k, d.alpha, d.direction, d.text_vocab, d.speech_vocab)?;
        let size = m.target_vocab().size();
        let pad = m.layout.pad();
        for c in d.counts {
            if c.context.len() != m.order || c.context.iter().any(|&id| id > pad) {
                return Err(Error::Format("model context has wrong arity or ids".into()));
            }
            let mut cc = ContextCounts { total: 0, next: vec![0; size as usize] };
            for (y, n) in c.next {
                if y >= size {
                    return Err(Error::Format(format!("model next-token id {y} out of range")));
                }
                cc.next[y as usize] += n;
                cc.total += n;
            }
            m.counts.insert(c.context, cc);
        }
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDump {
    format_version: u32,
    order_k: usize,
    alpha: f64,
    direction: Direction,
    text_vocab: Vocab,
    speech_vocab: Vocab,
    counts: Vec<ContextDump>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextDump {
    context: Vec<u32>,
    next: Vec<(u32, u64)>,
}

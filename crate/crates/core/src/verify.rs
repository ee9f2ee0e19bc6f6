//! Verifiers: scorers that rank candidate speech-token sequences.
//!
//! Every verifier is oriented higher-is-better. Error-rate style measures
//! are negated on ingestion and reported un-negated in [`Score::components`].
//! Verifiers receive content tokens only; callers strip the trailing eos.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Channel;
use crate::error::{Error, Result};
use crate::lm::KGramModel;
use crate::types::{Direction, JointSequence, TokenId};

pub const SIMILARITY: &str = "similarity";
pub const WER: &str = "wer";
pub const QUALITY: &str = "quality";

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=a.len()).collect();
    let mut cur = vec![0; a.len() + 1];
    for (j, y) in b.iter().enumerate() {
        cur[0] = j + 1;
        for (i, x) in a.iter().enumerate() {
            let sub = prev[i] + usize::from(x != y);
            cur[i + 1] = sub.min(prev[i + 1] + 1).min(cur[i] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[a.len()]
}

/// `(S + D + I) / len(reference)`.
pub fn wer(hypothesis: &[TokenId], reference: &[TokenId]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::domain("WER needs a non-empty reference"));
    }
    Ok(edit_distance(hypothesis, reference) as f64 / reference.len() as f64)
}

/// `1 - edit_distance / max(len)`, in `[0, 1]`; 1 exactly when equal.
pub fn similarity_score(candidate: &[TokenId], reference: &[TokenId]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::domain("similarity needs a non-empty reference"));
    }
    Ok(normalized_similarity(candidate, reference))
}

/// Similarity of a partial candidate against the reference prefix of the
/// same length (the whole reference once the candidate is longer).
pub fn prefix_similarity(prefix: &[TokenId], reference: &[TokenId]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::domain("similarity needs a non-empty reference"));
    }
    let window = &reference[..prefix.len().min(reference.len())];
    Ok(normalized_similarity(prefix, window))
}

fn normalized_similarity(a: &[TokenId], b: &[TokenId]) -> f64 {
    let denom = a.len().max(b.len());
    if denom == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / denom as f64
}

/// Negated WER of the channel-decoded candidate against `text`.
pub fn transcription_score(candidate: &[TokenId], text: &[TokenId], channel: &Channel) -> Result<f64> {
    Ok(-wer(&channel.decode(candidate), text)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierKind {
    Similarity,
    WerNegated,
    QualityProxy,
    Composite,
    Constant,
}

/// A verifier's verdict on one candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// Higher is better.
    pub value: f64,
    /// Named measurements in their natural orientation (WER un-negated).
    pub components: BTreeMap<String, f64>,
    /// Lexicographic selection key, every entry higher-is-better.
    pub rank: Vec<f64>,
}

impl Score {
    pub fn single(name: &str, value: f64, natural: f64) -> Self {
        Self { value, components: BTreeMap::from([(name.to_string(), natural)]), rank: vec![value] }
    }

    /// Total order on rank vectors; greater is better.
    pub fn cmp_rank(&self, other: &Score) -> Ordering {
        for (a, b) in self.rank.iter().zip(&other.rank) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.rank.len().cmp(&other.rank.len())
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.get(name).copied()
    }
}

pub trait Verifier: Send + Sync {
    fn name(&self) -> &str;

    fn kind(&self) -> VerifierKind;

    /// Whether [`Verifier::score_prefix`] is available (PRM capable).
    fn accepts_prefix(&self) -> bool {
        false
    }

    /// Scores a complete candidate.
    fn score(&self, candidate: &[TokenId]) -> Score;

    /// Scores a partial candidate. `None` when the verifier is outcome-only.
    fn score_prefix(&self, _prefix: &[TokenId]) -> Option<Score> {
        None
    }

    /// Scores with the mode that fits the candidate's state.
    fn score_state(&self, tokens: &[TokenId], finished: bool) -> Score {
        if finished {
            self.score(tokens)
        } else {
            self.score_prefix(tokens).unwrap_or_else(|| self.score(tokens))
        }
    }
}

/// Edit similarity to a reference speech sequence.
#[derive(Clone, Debug)]
pub struct SimilarityVerifier {
    reference: Vec<TokenId>,
}

impl SimilarityVerifier {
    pub fn new(reference: Vec<TokenId>) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::domain("similarity verifier needs a non-empty reference"));
        }
        Ok(Self { reference })
    }

    pub fn reference(&self) -> &[TokenId] {
        &self.reference
    }
}

impl Verifier for SimilarityVerifier {
    fn name(&self) -> &str {
        SIMILARITY
    }

    fn kind(&self) -> VerifierKind {
        VerifierKind::Similarity
    }

    fn accepts_prefix(&self) -> bool {
        true
    }

    fn score(&self, candidate: &[TokenId]) -> Score {
        let s = normalized_similarity(candidate, &self.reference);
        Score::single(SIMILARITY, s, s)
    }

    fn score_prefix(&self, prefix: &[TokenId]) -> Option<Score> {
        let window = &self.reference[..prefix.len().min(self.reference.len())];
        let s = normalized_similarity(prefix, window);
        Some(Score::single(SIMILARITY, s, s))
    }
}

/// Block-majority "ASR": decode through the channel inverse and compare to
/// the target text.
#[derive(Clone, Debug)]
pub struct TranscriptionVerifier {
    text: Vec<TokenId>,
    channel: Channel,
}

impl TranscriptionVerifier {
    pub fn new(text: Vec<TokenId>, channel: Channel) -> Result<Self> {
        if text.is_empty() {
            return Err(Error::domain("transcription verifier needs non-empty text"));
        }
        Ok(Self { text, channel })
    }

    pub fn wer_of(&self, candidate: &[TokenId]) -> f64 {
        edit_distance(&self.channel.decode(candidate), &self.text) as f64 / self.text.len() as f64
    }
}

impl Verifier for TranscriptionVerifier {
    fn name(&self) -> &str {
        WER
    }

    fn kind(&self) -> VerifierKind {
        VerifierKind::WerNegated
    }

    fn score(&self, candidate: &[TokenId]) -> Score {
        let w = self.wer_of(candidate);
        Score::single(WER, -w, w)
    }
}

/// Negative mean per-token NLL of the candidate under a generator.
#[derive(Clone, Debug)]
pub struct QualityVerifier {
    model: Arc<KGramModel>,
    text: Vec<TokenId>,
}

impl QualityVerifier {
    pub fn new(model: Arc<KGramModel>, text: Vec<TokenId>) -> Result<Self> {
        if model.direction() != Direction::Tts {
            return Err(Error::config("quality verifier needs a tts-direction model"));
        }
        Ok(Self { model, text })
    }

    fn mean_logp(&self, tokens: &[TokenId]) -> f64 {
        if tokens.is_empty() {
            return 0.0;
        }
        let seq = JointSequence { text: self.text.clone(), speech: tokens.to_vec(), direction: Direction::Tts };
        self.model.log_prob(&seq).map(|r| -r.mean()).unwrap_or(f64::NEG_INFINITY)
    }
}

impl Verifier for QualityVerifier {
    fn name(&self) -> &str {
        QUALITY
    }

    fn kind(&self) -> VerifierKind {
        VerifierKind::QualityProxy
    }

    fn accepts_prefix(&self) -> bool {
        true
    }

    fn score(&self, candidate: &[TokenId]) -> Score {
        let mut full = candidate.to_vec();
        full.push(self.model.speech_vocab().eos());
        let q = self.mean_logp(&full);
        Score::single(QUALITY, q, q)
    }

    fn score_prefix(&self, prefix: &[TokenId]) -> Option<Score> {
        let q = self.mean_logp(prefix);
        Some(Score::single(QUALITY, q, q))
    }
}

/// Scores everything the same.
#[derive(Clone, Copy, Debug, Default)]
pub struct ConstantVerifier(pub f64);

impl Verifier for ConstantVerifier {
    fn name(&self) -> &str {
        "constant"
    }

    fn kind(&self) -> VerifierKind {
        VerifierKind::Constant
    }

    fn accepts_prefix(&self) -> bool {
        true
    }

    fn score(&self, _: &[TokenId]) -> Score {
        Score::single("constant", self.0, self.0)
    }

    fn score_prefix(&self, _: &[TokenId]) -> Option<Score> {
        Some(Score::single("constant", self.0, self.0))
    }
}

/// Runs several verifiers and ranks lexicographically in `keys` order.
pub struct CompositeVerifier {
    parts: Vec<Arc<dyn Verifier>>,
    key_index: Vec<usize>,
}

impl std::fmt::Debug for CompositeVerifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<_> = self.parts.iter().map(|p| p.name()).collect();
        f.debug_struct("CompositeVerifier").field("parts", &names).field("key_index", &self.key_index).finish()
    }
}

impl CompositeVerifier {
    /// `keys` names parts in priority order; each must match a part name.
    pub fn new(parts: Vec<Arc<dyn Verifier>>, keys: &[String]) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::config("composite verifier needs at least one key"));
        }
        let key_index = keys
            .iter()
            .map(|k| {
                parts
                    .iter()
                    .position(|p| p.name() == k)
                    .ok_or_else(|| Error::config(format!("composite key '{k}' has no matching verifier")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { parts, key_index })
    }

    fn combine(&self, scores: Vec<Score>) -> Score {
        let rank: Vec<f64> = self.key_index.iter().map(|&i| scores[i].value).collect();
        let mut components = BTreeMap::new();
        for s in scores {
            components.extend(s.components);
        }
        Score { value: rank[0], components, rank }
    }
}

impl Verifier for CompositeVerifier {
    fn name(&self) -> &str {
        "composite"
    }

    fn kind(&self) -> VerifierKind {
        VerifierKind::Composite
    }

    fn accepts_prefix(&self) -> bool {
        self.key_index.iter().all(|&i| self.parts[i].accepts_prefix())
    }

    fn score(&self, candidate: &[TokenId]) -> Score {
        self.combine(self.parts.iter().map(|p| p.score(candidate)).collect())
    }

    fn score_prefix(&self, prefix: &[TokenId]) -> Option<Score> {
        if !self.accepts_prefix() {
            return None;
        }
        Some(self.combine(self.parts.iter().map(|p| p.score_state(prefix, false)).collect()))
    }
}

/// Index of the best score: highest rank, ties to the lowest index.
/// `None` for an empty pool.
pub fn select_best<'a, I>(scores: I) -> Option<usize>
where
    I: IntoIterator<Item = &'a Score>,
{
    let mut best: Option<(usize, &Score)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        match best {
            Some((_, b)) if s.cmp_rank(b) != Ordering::Greater => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Picks the best `(candidate, score)` pair by rank, ties to the earliest.
pub fn composite_select<C>(pool: &[(C, Score)]) -> Option<&C> {
    select_best(pool.iter().map(|(_, s)| s)).map(|i| &pool[i].0)
}

/// Verifier selection in the JSON run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifierSpec {
    pub kind: String,
    #[serde(default)]
    pub keys: Vec<String>,
}

impl VerifierSpec {
    pub fn similarity() -> Self {
        Self { kind: SIMILARITY.into(), keys: vec![] }
    }

    pub fn wer() -> Self {
        Self { kind: WER.into(), keys: vec![] }
    }

    pub fn composite(keys: &[&str]) -> Self {
        Self { kind: "composite".into(), keys: keys.iter().map(|s| s.to_string()).collect() }
    }
}

/// Reference material available to verifiers for one search instance.
#[derive(Clone, Debug)]
pub struct VerifierContext {
    pub reference: Option<Vec<TokenId>>,
    pub text: Vec<TokenId>,
    pub channel: Option<Channel>,
    pub model: Option<Arc<KGramModel>>,
}

impl VerifierContext {
    pub fn build(&self, spec: &VerifierSpec) -> Result<Arc<dyn Verifier>> {
        match spec.kind.as_str() {
            "composite" => Ok(Arc::new(self.composite(&spec.keys)?)),
            name => self.leaf(name),
        }
    }

    pub fn composite(&self, keys: &[String]) -> Result<CompositeVerifier> {
        let mut parts = Vec::new();
        for k in keys {
            if !parts.iter().any(|p: &Arc<dyn Verifier>| p.name() == k) {
                parts.push(self.leaf(k)?);
            }
        }
        CompositeVerifier::new(parts, keys)
    }

    fn leaf(&self, name: &str) -> Result<Arc<dyn Verifier>> {
        match name {
            SIMILARITY => {
                let r = self.reference.clone().ok_or_else(|| Error::config("similarity verifier needs a reference"))?;
                Ok(Arc::new(SimilarityVerifier::new(r)?))
            }
            WER | "wer_negated" => {
                let ch = self.channel.clone().ok_or_else(|| Error::config("wer verifier needs a channel"))?;
                Ok(Arc::new(TranscriptionVerifier::new(self.text.clone(), ch)?))
            }
            QUALITY | "quality_proxy" => {
                let m = self.model.clone().ok_or_else(|| Error::config("quality verifier needs a model"))?;
                Ok(Arc::new(QualityVerifier::new(m, self.text.clone())?))
            }
            other => Err(Error::config(format!("unknown verifier kind '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusConfig;

    /// Naive recursive Levenshtein.
    fn ed_oracle(a: &[u32], b: &[u32]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ar)), Some((y, br))) => {
                let sub = ed_oracle(ar, br) + usize::from(x != y);
                sub.min(ed_oracle(ar, b) + 1).min(ed_oracle(a, br) + 1)
            }
        }
    }

    fn all_seqs(max_len: usize, alphabet: u32) -> Vec<Vec<u32>> {
        let mut out = vec![vec![]];
        let mut frontier = vec![vec![]];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for s in &frontier {
                for t in 0..alphabet {
                    let mut v: Vec<u32> = s.clone();
                    v.push(t);
                    next.push(v);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    #[test]
    fn dp_matches_recursive_oracle_exhaustively() {
        let seqs = all_seqs(4, 3);
        assert_eq!(seqs.len(), 121);
        for a in &seqs {
            for b in &seqs {
                assert_eq!(edit_distance(a, b), ed_oracle(a, b), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(wer(&[], &[1, 2, 3, 4]).unwrap(), 1.0);
        assert_eq!(wer(&[0, 9, 2], &[0, 1, 2]).unwrap(), 1.0 / 3.0);
        assert!(wer(&[1], &[]).is_err());
        // not symmetric when lengths differ
        assert_ne!(wer(&[1], &[1, 2]).unwrap(), wer(&[1, 2], &[1]).unwrap());
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity_score(&[4, 5, 6], &[4, 5, 6]).unwrap(), 1.0);
        assert_eq!(similarity_score(&[0, 1, 2], &[3, 4, 5]).unwrap(), 0.0);
        assert!((similarity_score(&[1, 2, 3], &[1, 9, 3]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(similarity_score(&[1], &[]).is_err());
    }

    #[test]
    fn similarity_one_iff_equal() {
        let seqs = all_seqs(3, 3);
        for a in &seqs {
            for b in seqs.iter().filter(|b| !b.is_empty()) {
                let s = similarity_score(a, b).unwrap();
                assert!((0.0..=1.0).contains(&s));
                assert_eq!(s == 1.0, a == b);
            }
        }
    }

    #[test]
    fn prefix_similarity_depends_only_on_prefix() {
        let v = SimilarityVerifier::new(vec![0, 1, 1, 2, 0, 2]).unwrap();
        let ext = [0, 1, 2, 2, 1, 0, 0, 1];
        for l in 0..=ext.len() {
            let direct = v.score_prefix(&ext[..l]).unwrap().value;
            let via_fn = prefix_similarity(&ext[..l], v.reference()).unwrap();
            assert_eq!(direct, via_fn);
            let mut copy = ext[..l].to_vec();
            assert_eq!(v.score_prefix(&copy).unwrap().value, direct);
            copy.push(1);
            assert_eq!(v.score_prefix(&copy[..l]).unwrap().value, direct);
        }
        assert_eq!(v.score_prefix(&[0, 1, 1]).unwrap().value, 1.0);
    }

    #[test]
    fn transcription_examples() {
        let cfg = CorpusConfig { text_vocab: 6, speech_vocab: 6, expansion: 2, flip_p: 0.0, ..Default::default() };
        let ch = cfg.channel().unwrap();
        let text = vec![3, 1, 4];
        let clean = ch.clean_encode(&text);
        assert_eq!(transcription_score(&clean, &text, &ch).unwrap(), 0.0);
        // decode of [4,4,4,4,4,4] is [4,4,4]: two substitutions
        assert!((transcription_score(&[4; 6], &text, &ch).unwrap() + 2.0 / 3.0).abs() < 1e-15);
        // unrelated and too long: 6 blocks vs 3 reference tokens
        let s = transcription_score(&[0; 12], &text, &ch).unwrap();
        assert!(s <= -1.0, "{s}");
        // ambiguous block [1, 3] decodes to text 1 (lower id); 3 1 4 vs 1 1 4 → 1/3
        let ambiguous = [1, 3, 1, 1, 4, 4];
        assert_eq!(ch.decode(&ambiguous), vec![1, 1, 4]);
        assert!((transcription_score(&ambiguous, &text, &ch).unwrap() + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn selection_rules() {
        let one = vec![("a", Score::single(WER, -0.3, 0.3))];
        assert_eq!(composite_select(&one), Some(&"a"));
        let two = vec![("hi", Score::single(WER, -0.2, 0.2)), ("lo", Score::single(WER, -0.1, 0.1))];
        assert_eq!(composite_select(&two), Some(&"lo"));
        let mk = |w: f64, s: f64| Score { value: -w, components: BTreeMap::new(), rank: vec![-w, s] };
        let tie = vec![("x", mk(0.1, 0.5)), ("y", mk(0.1, 0.9))];
        assert_eq!(composite_select(&tie), Some(&"y"));
        let full_tie = vec![("first", mk(0.1, 0.5)), ("second", mk(0.1, 0.5))];
        assert_eq!(composite_select(&full_tie), Some(&"first"));
        assert_eq!(composite_select::<&str>(&[]), None);
    }

    #[test]
    fn composite_orders_by_keys() {
        let cfg = CorpusConfig { text_vocab: 4, speech_vocab: 4, expansion: 1, flip_p: 0.0, ..Default::default() };
        let ctx = VerifierContext { reference: Some(vec![0, 1, 2]), text: vec![0, 1], channel: Some(cfg.channel().unwrap()), model: None };
        let v = ctx.build(&VerifierSpec::composite(&["wer", "similarity"])).unwrap();
        assert!(!v.accepts_prefix());
        let s = v.score(&[0, 1]);
        assert_eq!(s.rank, vec![-0.0, 1.0 - 1.0 / 3.0]);
        assert_eq!(s.component(WER), Some(0.0));
        assert!(ctx.build(&VerifierSpec { kind: "bogus".into(), keys: vec![] }).is_err());
        assert!(ctx.build(&VerifierSpec::composite(&[])).is_err());
        let sim_only = ctx.build(&VerifierSpec::composite(&["similarity"])).unwrap();
        assert!(sim_only.accepts_prefix());
    }

    #[test]
    fn verifiers_are_pure() {
        let v = SimilarityVerifier::new(vec![3, 1, 4, 1, 5]).unwrap();
        let c = [3, 1, 5, 9];
        assert_eq!(v.score(&c), v.score(&c));
        assert_eq!(v.score_prefix(&c), v.score_prefix(&c));
    }
}

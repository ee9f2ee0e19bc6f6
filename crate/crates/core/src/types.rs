//! Token alphabets and joint text/speech sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Default cap on `text.len() + speech.len()`.
pub const DEFAULT_MAX_CONTEXT: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabKind {
    Text,
    Speech,
}

/// A closed alphabet `[0, size)` with one id reserved for end-of-sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vocab {
    size: u32,
    eos: TokenId,
    kind: VocabKind,
}

impl Vocab {
    pub fn new(size: u32, eos: TokenId, kind: VocabKind) -> Result<Self> {
        if size < 2 {
            return Err(Error::config(format!("vocab size must be >= 2, got {size}")));
        }
        if eos >= size {
            return Err(Error::config(format!("eos id {eos} outside vocab of size {size}")));
        }
        Ok(Self { size, eos, kind })
    }

    /// Vocab with eos as the last id.
    pub fn with_trailing_eos(size: u32, kind: VocabKind) -> Result<Self> {
        Self::new(size, size.saturating_sub(1), kind)
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id < self.size
    }

    /// Number of non-eos ids.
    pub fn content_size(&self) -> u32 {
        self.size - 1
    }

    /// The `i`-th non-eos id in ascending order.
    pub fn content_id(&self, i: u32) -> TokenId {
        debug_assert!(i < self.content_size());
        if i < self.eos {
            i
        } else {
            i + 1
        }
    }

    /// Inverse of [`Vocab::content_id`]; `None` for eos.
    pub fn content_index(&self, id: TokenId) -> Option<u32> {
        match id.cmp(&self.eos) {
            std::cmp::Ordering::Less => Some(id),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(id - 1),
        }
    }

    pub fn content_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.content_size()).map(move |i| self.content_id(i))
    }

    /// Drops a single trailing eos, if present.
    pub fn strip_eos<'a>(&self, tokens: &'a [TokenId]) -> &'a [TokenId] {
        match tokens.split_last() {
            Some((&last, rest)) if last == self.eos => rest,
            _ => tokens,
        }
    }
}

/// Which stream carries the training loss.
///
/// `Tts` lays the sequence out as text then speech and predicts speech;
/// `Asr` swaps the layout (speech then text) and predicts text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Tts,
    Asr,
}

/// Shared id space for the k-gram window: text ids first, then speech ids
/// shifted by the text vocab size, then one pad id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointLayout {
    pub text_size: u32,
    pub speech_size: u32,
}

impl JointLayout {
    pub fn new(text: &Vocab, speech: &Vocab) -> Self {
        Self { text_size: text.size(), speech_size: speech.size() }
    }

    #[inline]
    pub fn text(&self, id: TokenId) -> u32 {
        id
    }

    #[inline]
    pub fn speech(&self, id: TokenId) -> u32 {
        self.text_size + id
    }

    #[inline]
    pub fn pad(&self) -> u32 {
        self.text_size + self.speech_size
    }

    /// Encodes a target-stream id for `direction`.
    #[inline]
    pub fn target(&self, direction: Direction, id: TokenId) -> u32 {
        match direction {
            Direction::Tts => self.speech(id),
            Direction::Asr => self.text(id),
        }
    }

    #[inline]
    pub fn source(&self, direction: Direction, id: TokenId) -> u32 {
        match direction {
            Direction::Tts => self.text(id),
            Direction::Asr => self.speech(id),
        }
    }
}

/// One training row: text tokens, speech tokens, and the loss direction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointSequence {
    pub text: Vec<TokenId>,
    pub speech: Vec<TokenId>,
    #[serde(default)]
    pub direction: Direction,
}

impl JointSequence {
    pub fn new(
        text: Vec<TokenId>,
        speech: Vec<TokenId>,
        direction: Direction,
        text_vocab: &Vocab,
        speech_vocab: &Vocab,
        max_context: usize,
    ) -> Result<Self> {
        let seq = Self { text, speech, direction };
        seq.validate(text_vocab, speech_vocab, max_context)?;
        Ok(seq)
    }

    pub fn validate(&self, text_vocab: &Vocab, speech_vocab: &Vocab, max_context: usize) -> Result<()> {
        if self.text.is_empty() {
            return Err(Error::config("joint sequence needs at least one text token"));
        }
        if let Some(&t) = self.text.iter().find(|&&t| !text_vocab.contains(t)) {
            return Err(Error::domain(format!("text id {t} outside vocab of size {}", text_vocab.size())));
        }
        if let Some(&y) = self.speech.iter().find(|&&y| !speech_vocab.contains(y)) {
            return Err(Error::domain(format!("speech id {y} outside vocab of size {}", speech_vocab.size())));
        }
        if self.len() > max_context {
            return Err(Error::config(format!(
                "sequence length {} exceeds max context {max_context}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.text.len() + self.speech.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_direction(&self, direction: Direction) -> Self {
        Self { direction, ..self.clone() }
    }

    /// `(source, target)` streams for this sequence's direction.
    pub fn source_target(&self) -> (&[TokenId], &[TokenId]) {
        match self.direction {
            Direction::Tts => (&self.text, &self.speech),
            Direction::Asr => (&self.speech, &self.text),
        }
    }

    /// The sequence in layout order, encoded in the joint id space.
    pub fn joint_stream(&self, layout: &JointLayout) -> Vec<u32> {
        let (src, tgt) = self.source_target();
        src.iter()
            .map(|&t| layout.source(self.direction, t))
            .chain(tgt.iter().map(|&t| layout.target(self.direction, t)))
            .collect()
    }

    /// One flag per layout position; `true` where the loss applies.
    pub fn loss_mask(&self) -> Vec<bool> {
        let (src, tgt) = self.source_target();
        std::iter::repeat_n(false, src.len()).chain(std::iter::repeat_n(true, tgt.len())).collect()
    }

    pub fn loss_token_count(&self) -> usize {
        self.source_target().1.len()
    }

    /// Truncates so that `len() <= max_context`, dropping target tokens first.
    pub fn crop(&mut self, max_context: usize) {
        let src_len = self.source_target().0.len();
        let keep_tgt = max_context.saturating_sub(src_len);
        match self.direction {
            Direction::Tts => {
                self.speech.truncate(keep_tgt);
                self.text.truncate(max_context);
            }
            Direction::Asr => {
                self.text.truncate(keep_tgt);
                self.speech.truncate(max_context);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocabs() -> (Vocab, Vocab) {
        (
            Vocab::with_trailing_eos(5, VocabKind::Text).unwrap(),
            Vocab::with_trailing_eos(4, VocabKind::Speech).unwrap(),
        )
    }

    #[test]
    fn vocab_invariants() {
        assert!(Vocab::new(1, 0, VocabKind::Text).is_err());
        assert!(Vocab::new(3, 3, VocabKind::Text).is_err());
        let v = Vocab::new(4, 1, VocabKind::Speech).unwrap();
        let ids: Vec<_> = v.content_ids().collect();
        assert_eq!(ids, vec![0, 2, 3]);
        for (i, &id) in ids.iter().enumerate() {
            assert_eq!(v.content_index(id), Some(i as u32));
        }
        assert_eq!(v.content_index(1), None);
    }

    #[test]
    fn strip_eos_only_trailing() {
        let (_, s) = vocabs();
        assert_eq!(s.strip_eos(&[0, 3, 1, 3]), &[0, 3, 1]);
        assert_eq!(s.strip_eos(&[3, 0]), &[3, 0]);
        assert_eq!(s.strip_eos(&[]), &[] as &[u32]);
    }

    #[test]
    fn rejects_bad_sequences() {
        let (t, s) = vocabs();
        assert!(JointSequence::new(vec![], vec![0], Direction::Tts, &t, &s, 10).is_err());
        assert!(JointSequence::new(vec![5], vec![0], Direction::Tts, &t, &s, 10).is_err());
        assert!(JointSequence::new(vec![0], vec![4], Direction::Tts, &t, &s, 10).is_err());
        assert!(JointSequence::new(vec![0, 1], vec![0, 1, 2], Direction::Tts, &t, &s, 4).is_err());
        assert!(JointSequence::new(vec![0, 1], vec![0, 1], Direction::Tts, &t, &s, 4).is_ok());
    }

    #[test]
    fn masks_are_complementary() {
        let (t, s) = vocabs();
        let seq = JointSequence::new(vec![1, 2], vec![0, 0, 3], Direction::Tts, &t, &s, 64).unwrap();
        let layout = JointLayout::new(&t, &s);
        assert_eq!(seq.joint_stream(&layout), vec![1, 2, 5, 5, 8]);
        assert_eq!(seq.loss_mask(), vec![false, false, true, true, true]);
        let asr = seq.with_direction(Direction::Asr);
        assert_eq!(asr.joint_stream(&layout), vec![5, 5, 8, 1, 2]);
        assert_eq!(asr.loss_mask(), vec![false, false, false, true, true]);
        assert_eq!(seq.loss_token_count() + asr.loss_token_count(), seq.len());
    }

    #[test]
    fn crop_drops_target_first() {
        let mut seq = JointSequence { text: vec![0, 1, 2], speech: vec![0; 10], direction: Direction::Tts };
        seq.crop(8);
        assert_eq!(seq.text.len(), 3);
        assert_eq!(seq.speech.len(), 5);
    }
}

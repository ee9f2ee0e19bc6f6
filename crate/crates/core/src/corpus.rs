//! Synthetic text→speech corpora and their JSONL file format.
//!
//! Speech is produced from text by a noisy expansion channel: each text
//! token becomes `expansion` copies of its speech image, and every copy is
//! independently replaced by a different content token with probability
//! `flip_p`. Every sequence ends with the speech eos.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{Direction, JointSequence, TokenId, Vocab, VocabKind, DEFAULT_MAX_CONTEXT};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// Text vocab size including its eos (the last id).
    pub text_vocab: u32,
    /// Speech vocab size including its eos (the last id).
    pub speech_vocab: u32,
    pub pairs: usize,
    /// Inclusive `[min, max]` text length.
    pub text_len: [usize; 2],
    /// Speech tokens emitted per text token.
    pub expansion: u32,
    pub flip_p: f64,
    #[serde(default = "default_max_context")]
    pub max_context: usize,
}

fn default_max_context() -> usize {
    DEFAULT_MAX_CONTEXT
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            text_vocab: 9,
            speech_vocab: 9,
            pairs: 500,
            text_len: [2, 6],
            expansion: 3,
            flip_p: 0.1,
            max_context: DEFAULT_MAX_CONTEXT,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.text_vocab < 2 || self.speech_vocab < 2 {
            return Err(Error::config("vocab sizes must be >= 2 (one id is eos)"));
        }
        if self.pairs == 0 {
            return Err(Error::config("pair count must be positive"));
        }
        let [lo, hi] = self.text_len;
        if lo == 0 || lo > hi {
            return Err(Error::config(format!("invalid text length range [{lo}, {hi}]")));
        }
        if self.expansion == 0 {
            return Err(Error::config("expansion must be positive"));
        }
        if !(0.0..=1.0).contains(&self.flip_p) {
            return Err(Error::config(format!("flip probability {} outside [0, 1]", self.flip_p)));
        }
        if self.flip_p > 0.0 && self.speech_vocab < 3 {
            return Err(Error::config("flips need at least two speech content tokens"));
        }
        let longest = hi + hi * self.expansion as usize + 1;
        if longest > self.max_context {
            return Err(Error::config(format!(
                "longest pair ({longest} tokens) exceeds max context {}",
                self.max_context
            )));
        }
        Ok(())
    }

    pub fn vocabs(&self) -> Result<(Vocab, Vocab)> {
        Ok((
            Vocab::with_trailing_eos(self.text_vocab, VocabKind::Text)?,
            Vocab::with_trailing_eos(self.speech_vocab, VocabKind::Speech)?,
        ))
    }

    pub fn channel(&self) -> Result<Channel> {
        self.validate()?;
        let (text_vocab, speech_vocab) = self.vocabs()?;
        Ok(Channel { text_vocab, speech_vocab, expansion: self.expansion, flip_p: self.flip_p })
    }
}

/// The expansion-with-flips channel and its block-majority inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub text_vocab: Vocab,
    pub speech_vocab: Vocab,
    pub expansion: u32,
    pub flip_p: f64,
}

impl Channel {
    /// Speech content token that text token `t` expands to.
    pub fn image(&self, t: TokenId) -> TokenId {
        let idx = self.text_vocab.content_index(t).unwrap_or(0);
        self.speech_vocab.content_id(idx % self.speech_vocab.content_size())
    }

    /// Noise-free expansion, eos-terminated.
    pub fn clean_encode(&self, text: &[TokenId]) -> Vec<TokenId> {
        let mut out: Vec<TokenId> = text
            .iter()
            .flat_map(|&t| std::iter::repeat_n(self.image(t), self.expansion as usize))
            .collect();
        out.push(self.speech_vocab.eos());
        out
    }

    /// Noisy expansion, eos-terminated.
    pub fn encode(&self, text: &[TokenId], rng: &mut RngStream) -> Vec<TokenId> {
        let c = self.speech_vocab.content_size() as u64;
        let mut out = self.clean_encode(text);
        let body = out.len() - 1;
        for y in &mut out[..body] {
            if self.flip_p > 0.0 && rng.next_f64() < self.flip_p {
                let idx = self.speech_vocab.content_index(*y).unwrap() as u64;
                let shift = 1 + rng.below(c - 1);
                *y = self.speech_vocab.content_id(((idx + shift) % c) as u32);
            }
        }
        out
    }

    /// Block-majority decode. Each full block of `expansion` tokens maps to
    /// the text token whose image matches the most positions; ties go to
    /// the lower text id. A trailing eos and any trailing partial block are
    /// dropped.
    pub fn decode(&self, speech: &[TokenId]) -> Vec<TokenId> {
        let speech = self.speech_vocab.strip_eos(speech);
        speech
            .chunks_exact(self.expansion as usize)
            .map(|block| {
                let mut best = (0usize, self.text_vocab.content_id(0));
                for t in self.text_vocab.content_ids() {
                    let img = self.image(t);
                    let votes = block.iter().filter(|&&y| y == img).count();
                    if votes > best.0 {
                        best = (votes, t);
                    }
                }
                best.1
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub pairs: Vec<JointSequence>,
    pub text_vocab: Vocab,
    pub speech_vocab: Vocab,
}

/// Draws `cfg.pairs` pairs from the channel. Text tokens are uniform over
/// the text content ids.
pub fn make_synthetic_corpus(cfg: &CorpusConfig, rng: &mut RngStream) -> Result<Corpus> {
    let channel = cfg.channel()?;
    let [lo, hi] = cfg.text_len;
    let pairs = (0..cfg.pairs)
        .map(|_| {
            let text = random_text(&channel.text_vocab, lo, hi, rng);
            let speech = channel.encode(&text, rng);
            JointSequence { text, speech, direction: Direction::Tts }
        })
        .collect();
    Ok(Corpus { pairs, text_vocab: channel.text_vocab, speech_vocab: channel.speech_vocab })
}

pub fn random_text(vocab: &Vocab, min_len: usize, max_len: usize, rng: &mut RngStream) -> Vec<TokenId> {
    let len = min_len + rng.below((max_len - min_len + 1) as u64) as usize;
    (0..len).map(|_| vocab.content_id(rng.below(vocab.content_size() as u64) as u32)).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    text_vocab: u32,
    speech_vocab: u32,
    eos_text: u32,
    eos_speech: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairLine {
    text: Vec<TokenId>,
    speech: Vec<TokenId>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = Header {
            format_version: FORMAT_VERSION,
            text_vocab: self.text_vocab.size(),
            speech_vocab: self.speech_vocab.size(),
            eos_text: self.text_vocab.eos(),
            eos_speech: self.speech_vocab.eos(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for p in &self.pairs {
            serde_json::to_writer(&mut w, &PairLine { text: p.text.clone(), speech: p.speech.clone() })?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let (_, first) = lines.next().ok_or_else(|| Error::Format("empty corpus file".into()))?;
        let first = first.map_err(|e| Error::Format(e.to_string()))?;
        let header: Header =
            serde_json::from_str(&first).map_err(|e| Error::Format(format!("corpus header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported corpus format_version {}", header.format_version)));
        }
        let text_vocab = Vocab::new(header.text_vocab, header.eos_text, VocabKind::Text)?;
        let speech_vocab = Vocab::new(header.speech_vocab, header.eos_speech, VocabKind::Speech)?;
        let mut pairs = Vec::new();
        for (lineno, line) in lines {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            let p: PairLine = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("corpus line {}: {e}", lineno + 1)))?;
            let seq = JointSequence { text: p.text, speech: p.speech, direction: Direction::Tts };
            seq.validate(&text_vocab, &speech_vocab, usize::MAX)?;
            pairs.push(seq);
        }
        Ok(Corpus { pairs, text_vocab, speech_vocab })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_jsonl(BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn cfg(speech_vocab: u32, r: u32, p: f64) -> CorpusConfig {
        CorpusConfig { text_vocab: 6, speech_vocab, pairs: 10, text_len: [1, 4], expansion: r, flip_p: p, ..Default::default() }
    }

    #[test]
    fn zero_noise_is_exact_expansion() {
        let ch = cfg(6, 2, 0.0).channel().unwrap();
        let mut rng = derive_stream(1, 0);
        assert_eq!(ch.encode(&[3, 1], &mut rng), vec![3, 3, 1, 1, 5]);
        assert_eq!(ch.decode(&[3, 3, 1, 1, 5]), vec![3, 1]);
    }

    #[test]
    fn full_noise_binary_flips_everything() {
        // speech content {0, 1} plus eos 2
        let ch = cfg(3, 3, 1.0).channel().unwrap();
        let mut rng = derive_stream(1, 0);
        let text = vec![0, 1, 4, 3];
        let clean = ch.clean_encode(&text);
        let noisy = ch.encode(&text, &mut rng);
        assert_eq!(clean.len(), noisy.len());
        for (c, n) in clean[..clean.len() - 1].iter().zip(&noisy) {
            assert_eq!(*n, 1 - *c);
        }
        assert_eq!(noisy.last(), Some(&2));
    }

    #[test]
    fn decode_tie_goes_to_lower_id() {
        let ch = cfg(6, 2, 0.0).channel().unwrap();
        // block [4, 1]: one vote for text 4, one for text 1 → 1
        assert_eq!(ch.decode(&[4, 1]), vec![1]);
        // trailing partial block dropped
        assert_eq!(ch.decode(&[2, 2, 0]), vec![2]);
    }

    #[test]
    fn invalid_configs() {
        assert!(cfg(6, 2, 1.5).validate().is_err());
        assert!(cfg(6, 2, -0.1).validate().is_err());
        assert!(cfg(6, 0, 0.1).validate().is_err());
        assert!(CorpusConfig { pairs: 0, ..Default::default() }.validate().is_err());
        assert!(CorpusConfig { text_vocab: 1, ..Default::default() }.validate().is_err());
        assert!(CorpusConfig { text_len: [3, 2], ..Default::default() }.validate().is_err());
        assert!(CorpusConfig { max_context: 8, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let c = CorpusConfig::default();
        let a = make_synthetic_corpus(&c, &mut derive_stream(42, 0)).unwrap();
        let b = make_synthetic_corpus(&c, &mut derive_stream(42, 0)).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_jsonl(&mut ba).unwrap();
        b.write_jsonl(&mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(a.len(), 500);
    }

    #[test]
    fn jsonl_round_trip() {
        let c = CorpusConfig { pairs: 25, ..Default::default() };
        let corpus = make_synthetic_corpus(&c, &mut derive_stream(3, 0)).unwrap();
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let header = std::str::from_utf8(&buf).unwrap().lines().next().unwrap();
        assert_eq!(header, r#"{"format_version":1,"text_vocab":9,"speech_vocab":9,"eos_text":8,"eos_speech":8}"#);
        let back = Corpus::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, corpus);
    }

    #[test]
    fn rejects_out_of_range_ids() {
        let data = "{\"format_version\":1,\"text_vocab\":3,\"speech_vocab\":3,\"eos_text\":2,\"eos_speech\":2}\n{\"text\":[0],\"speech\":[7]}\n";
        assert!(Corpus::read_jsonl(data.as_bytes()).is_err());
    }
}

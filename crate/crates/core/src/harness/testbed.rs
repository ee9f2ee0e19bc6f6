//! The standard synthetic instance family used by sweeps and acceptance runs.
//!
//! A k-gram generator is trained on a channel corpus. An instance for seed
//! `s` is a fresh target text plus a speech "prompt" reference: a noisy
//! channel rendering of a different random text, as in zero-shot synthesis
//! where the prompt utterance does not share the target's content. The
//! similarity verifier pulls toward the prompt while the transcription
//! verifier pulls toward the target text.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{make_synthetic_corpus, random_text, Channel, Corpus, CorpusConfig};
use crate::error::Result;
use crate::lm::{train, KGramModel, DEFAULT_ALPHA, DEFAULT_ORDER};
use crate::rng::{tags, RngStream};
use crate::types::{Direction, TokenId};
use crate::verify::VerifierContext;

fn default_order() -> usize {
    DEFAULT_ORDER
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestbedSpec {
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub corpus_seed: u64,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Text length range of evaluation instances; the corpus range if absent.
    #[serde(default)]
    pub instance_text_len: Option<[usize; 2]>,
}

impl Default for TestbedSpec {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig {
                text_vocab: 9,
                speech_vocab: 9,
                pairs: 500,
                text_len: [2, 6],
                expansion: 3,
                flip_p: 0.1,
                ..CorpusConfig::default()
            },
            corpus_seed: 2025,
            order: DEFAULT_ORDER,
            alpha: DEFAULT_ALPHA,
            instance_text_len: Some([3, 5]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub text: Vec<TokenId>,
    /// Prompt speech content (no eos).
    pub reference: Vec<TokenId>,
}

#[derive(Clone, Debug)]
pub struct Testbed {
    spec: TestbedSpec,
    corpus: Corpus,
    model: Arc<KGramModel>,
    channel: Channel,
}

impl Testbed {
    pub fn build(spec: &TestbedSpec) -> Result<Self> {
        let channel = spec.corpus.channel()?;
        let corpus = make_synthetic_corpus(&spec.corpus, &mut RngStream::new(spec.corpus_seed, tags::CORPUS))?;
        let model = Arc::new(train(&corpus, spec.order, spec.alpha, Direction::Tts)?);
        Ok(Self { spec: spec.clone(), corpus, model, channel })
    }

    pub fn standard() -> Self {
        Self::build(&TestbedSpec::default()).expect("standard testbed is valid")
    }

    pub fn spec(&self) -> &TestbedSpec {
        &self.spec
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn model(&self) -> &KGramModel {
        &self.model
    }

    pub fn model_arc(&self) -> Arc<KGramModel> {
        self.model.clone()
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn instance(&self, seed: u64) -> Instance {
        let mut rng = RngStream::new(seed, tags::INSTANCE);
        let [lo, hi] = self.spec.instance_text_len.unwrap_or(self.spec.corpus.text_len);
        let text = random_text(&self.channel.text_vocab, lo, hi, &mut rng);
        let prompt_text = random_text(&self.channel.text_vocab, lo, hi, &mut rng);
        let mut reference = self.channel.encode(&prompt_text, &mut rng);
        reference.pop();
        Instance { text, reference }
    }

    pub fn verifier_context(&self, inst: &Instance) -> VerifierContext {
        VerifierContext {
            reference: Some(inst.reference.clone()),
            text: inst.text.clone(),
            channel: Some(self.channel.clone()),
            model: Some(self.model.clone()),
        }
    }
}

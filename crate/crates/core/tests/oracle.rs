use std::sync::Arc;

use verisearch::corpus::CorpusConfig;
use verisearch::harness::oracle::{brute_force_optimum, enumerate_outputs};
use verisearch::types::{Vocab, VocabKind};
use verisearch::verify::{CompositeVerifier, SimilarityVerifier, TranscriptionVerifier, Verifier};

/// Every sequence over `size` ids up to `max_len`, kept only if it is a
/// valid generator output (eos only as the final token).
fn naive_outputs(size: u32, eos: u32, max_len: usize) -> Vec<Vec<u32>> {
    let mut all = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        frontier = frontier.iter().flat_map(|s: &Vec<u32>| (0..size).map(move |t| [s.clone(), vec![t]].concat())).collect();
        all.extend(frontier.iter().cloned());
    }
    all.retain(|s| {
        let eos_at = s.iter().position(|&t| t == eos);
        match eos_at {
            Some(i) => i + 1 == s.len(),
            None => s.len() == max_len,
        }
    });
    all.sort();
    all
}

#[test]
fn enumeration_matches_naive_generation() {
    for (size, max_len) in [(2, 5), (3, 4), (4, 3), (9, 3)] {
        let vocab = Vocab::with_trailing_eos(size, VocabKind::Speech).unwrap();
        let got = enumerate_outputs(&vocab, max_len).unwrap();
        assert_eq!(got, naive_outputs(size, vocab.eos(), max_len));
    }
}

#[test]
fn composite_optimum_on_a_three_token_vocab() {
    let vocab = Vocab::with_trailing_eos(3, VocabKind::Speech).unwrap();
    let channel = CorpusConfig { text_vocab: 3, speech_vocab: 3, expansion: 2, flip_p: 0.0, ..Default::default() }.channel().unwrap();
    let wer: Arc<dyn Verifier> = Arc::new(TranscriptionVerifier::new(vec![1, 0], channel).unwrap());
    let sim: Arc<dyn Verifier> = Arc::new(SimilarityVerifier::new(vec![1, 1, 0, 1]).unwrap());
    let composite = CompositeVerifier::new(vec![wer.clone(), sim.clone()], &["wer".into(), "similarity".into()]).unwrap();

    let (seq, score) = brute_force_optimum(&vocab, &composite, 4).unwrap();

    // Second pass: the best WER first, then the best similarity among those,
    // then the lexicographically smallest sequence.
    let all = naive_outputs(3, vocab.eos(), 4);
    let content = |s: &Vec<u32>| vocab.strip_eos(s).to_vec();
    let best_wer = all.iter().map(|s| wer.score(&content(s)).value).fold(f64::NEG_INFINITY, f64::max);
    let tier: Vec<&Vec<u32>> = all.iter().filter(|s| wer.score(&content(s)).value == best_wer).collect();
    let best_sim = tier.iter().map(|s| sim.score(&content(s)).value).fold(f64::NEG_INFINITY, f64::max);
    let expected = tier.into_iter().find(|s| sim.score(&content(s)).value == best_sim).unwrap();

    assert_eq!(&seq, expected);
    assert_eq!(score.rank, vec![best_wer, best_sim]);
    // The tied block [0, 1] decodes to text 0, so the reference itself is optimal.
    assert_eq!(seq, vec![1, 1, 0, 1]);
}

#[test]
fn enumeration_guard_refuses_large_spaces() {
    let vocab = Vocab::with_trailing_eos(9, VocabKind::Speech).unwrap();
    assert!(enumerate_outputs(&vocab, 7).is_err());
    assert!(enumerate_outputs(&vocab, 6).is_ok());
}

use proptest::collection::vec;
use proptest::prelude::*;

use verisearch::corpus::{make_synthetic_corpus, Corpus, CorpusConfig};
use verisearch::fsq::FsqConfig;
use verisearch::lm::{train, KGramModel};
use verisearch::rng::RngStream;
use verisearch::types::Direction;
use verisearch::verify::{edit_distance, select_best, similarity_score, Score};

fn levels() -> impl Strategy<Value = Vec<u32>> {
    vec(2u32..=7, 1..=5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fsq_index_round_trip(levels in levels(), raw in any::<u64>()) {
        let cfg = FsqConfig::new(levels).unwrap();
        let index = raw % cfg.codebook_size();
        let codes = cfg.index_to_codes(index).unwrap();
        prop_assert_eq!(cfg.codes_to_index(&codes).unwrap(), index);
        prop_assert_eq!(cfg.quantize(&codes).unwrap().index, index);
    }

    #[test]
    fn fsq_quantize_is_nearest_and_idempotent(levels in levels(), xs in vec(-1.5f64..1.5, 5)) {
        let cfg = FsqConfig::new(levels).unwrap();
        let h = &xs[..cfg.dim()];
        let code = cfg.quantize(h).unwrap();
        prop_assert_eq!(&cfg.quantize(&code.values).unwrap(), &code);
        for d in 0..cfg.dim() {
            let x = h[d].clamp(-1.0, 1.0);
            prop_assert!((x - code.values[d]).abs() <= cfg.half_spacing(d));
            for g in cfg.grid(d) {
                prop_assert!((x - code.values[d]).abs() <= (x - g).abs());
            }
        }
    }

    #[test]
    fn edit_distance_is_a_metric(a in vec(0u32..4, 0..8), b in vec(0u32..4, 0..8), c in vec(0u32..4, 0..8)) {
        let ab = edit_distance(&a, &b);
        prop_assert_eq!(ab, edit_distance(&b, &a));
        prop_assert_eq!(ab == 0, a == b);
        prop_assert!(ab >= a.len().abs_diff(b.len()));
        prop_assert!(ab <= a.len().max(b.len()));
        prop_assert!(edit_distance(&a, &c) <= ab + edit_distance(&b, &c));
    }

    #[test]
    fn similarity_is_bounded(a in vec(0u32..4, 0..10), r in vec(0u32..4, 1..10)) {
        let s = similarity_score(&a, &r).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s == 1.0, a == r);
    }

    #[test]
    fn select_best_takes_first_maximum(values in vec(0u8..4, 1..12)) {
        let scores: Vec<Score> = values.iter().map(|&v| Score::single("x", v as f64, v as f64)).collect();
        let i = select_best(&scores).unwrap();
        let max = *values.iter().max().unwrap();
        prop_assert_eq!(values[i], max);
        prop_assert!(values[..i].iter().all(|&v| v < max));
    }

    #[test]
    fn clean_channel_round_trips(text in vec(0u32..8, 1..6), r in 1u32..5) {
        let cfg = CorpusConfig { expansion: r, flip_p: 0.0, ..Default::default() };
        let ch = cfg.channel().unwrap();
        let speech = ch.clean_encode(&text);
        prop_assert_eq!(speech.len(), text.len() * r as usize + 1);
        prop_assert_eq!(ch.decode(&speech), text);
    }

    #[test]
    fn corpus_jsonl_round_trips(seed in any::<u64>(), pairs in 1usize..30, p in 0.0f64..1.0) {
        let cfg = CorpusConfig { pairs, flip_p: p, ..Default::default() };
        let corpus = make_synthetic_corpus(&cfg, &mut RngStream::new(seed, 0)).unwrap();
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        prop_assert_eq!(Corpus::read_jsonl(buf.as_slice()).unwrap(), corpus);
    }

    #[test]
    fn model_round_trips_and_normalizes(seed in any::<u64>(), order in 1usize..5, asr in any::<bool>(), ctx in vec(0u32..19, 4)) {
        let cfg = CorpusConfig { pairs: 25, ..Default::default() };
        let corpus = make_synthetic_corpus(&cfg, &mut RngStream::new(seed, 0)).unwrap();
        let dir = if asr { Direction::Asr } else { Direction::Tts };
        let model = train(&corpus, order, 0.1, dir).unwrap();
        let back = KGramModel::from_json(&model.to_json()).unwrap();
        prop_assert_eq!(back.to_json(), model.to_json());
        let sum: f64 = model.distribution(&ctx[..order]).iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        for pair in corpus.pairs.iter().take(5) {
            let seq = pair.with_direction(dir);
            prop_assert_eq!(back.log_prob(&seq).unwrap().nll, model.log_prob(&seq).unwrap().nll);
        }
    }

    #[test]
    fn rng_seek_reproduces_draws(seed in any::<u64>(), stream in any::<u64>(), pos in 0u64..200) {
        let mut a = RngStream::new(seed, stream);
        for _ in 0..pos {
            a.next_f64();
        }
        let mut b = RngStream::new(seed, stream);
        b.seek(pos);
        prop_assert_eq!(a.next_f64(), b.next_f64());
    }
}

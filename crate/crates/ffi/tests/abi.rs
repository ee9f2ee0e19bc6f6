use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use verisearch::corpus::{make_synthetic_corpus, CorpusConfig};
use verisearch::lm::train;
use verisearch::rng::RngStream;
use verisearch::types::Direction;
use verisearch_ffi::*;

fn last_error() -> String {
    let p = vs_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn fsq_handle_round_trips_every_index() {
    let levels = [4u32; 8];
    let mut fsq = ptr::null_mut();
    unsafe {
        assert_eq!(vs_fsq_new(levels.as_ptr(), 8, &mut fsq), VsStatus::Ok);
        assert_eq!(vs_fsq_codebook_size(fsq), 65_536);
        assert_eq!(vs_fsq_dim(fsq), 8);
        let mut codes = [0.0f64; 8];
        for i in 0..65_536u64 {
            let mut back = 0;
            assert_eq!(vs_fsq_index_to_codes(fsq, i, codes.as_mut_ptr(), 8), VsStatus::Ok);
            assert_eq!(vs_fsq_codes_to_index(fsq, codes.as_ptr(), 8, &mut back), VsStatus::Ok);
            assert_eq!(back, i);
        }
        let h = [0.0f64; 8];
        let mut values = [9.0f64; 8];
        let mut index = 0;
        assert_eq!(vs_fsq_quantize(fsq, h.as_ptr(), 8, values.as_mut_ptr(), &mut index), VsStatus::Ok);
        assert_eq!(values, [-1.0 / 3.0; 8]);
        assert_eq!(index, (0..8).map(|d| 4u64.pow(d)).sum::<u64>());
        assert_eq!(vs_fsq_quantize(fsq, h.as_ptr(), 8, ptr::null_mut(), &mut index), VsStatus::Ok);
        vs_fsq_free(fsq);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut fsq = ptr::null_mut();
    unsafe {
        let bad = [1u32, 4];
        assert_eq!(vs_fsq_new(bad.as_ptr(), 2, &mut fsq), VsStatus::Config);
        assert!(fsq.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(vs_fsq_new(ptr::null(), 2, &mut fsq), VsStatus::NullPointer);
        assert!(last_error().contains("levels"));

        let good = [3u32, 5];
        assert_eq!(vs_fsq_new(good.as_ptr(), 2, &mut fsq), VsStatus::Ok);
        assert!(vs_last_error_message().is_null());
        let h = [f64::NAN, 0.0];
        let mut index = 0;
        assert_eq!(vs_fsq_quantize(fsq, h.as_ptr(), 2, ptr::null_mut(), &mut index), VsStatus::Domain);
        let off_grid = [0.1, 0.0];
        assert_eq!(vs_fsq_codes_to_index(fsq, off_grid.as_ptr(), 2, &mut index), VsStatus::Domain);
        vs_fsq_free(fsq);
        vs_fsq_free(ptr::null_mut());
    }
}

#[test]
fn metrics_match_the_library() {
    let (hyp, reference) = ([0u32, 1, 2], [0u32, 1, 1]);
    let (mut w, mut s) = (0.0, 0.0);
    unsafe {
        assert_eq!(vs_wer(hyp.as_ptr(), 3, reference.as_ptr(), 3, &mut w), VsStatus::Ok);
        assert_eq!(vs_similarity(hyp.as_ptr(), 3, reference.as_ptr(), 3, &mut s), VsStatus::Ok);
        assert_eq!(w, 1.0 / 3.0);
        assert_eq!(s, 1.0 - 1.0 / 3.0);
        assert_eq!(vs_wer(hyp.as_ptr(), 3, ptr::null(), 0, &mut w), VsStatus::Domain);
        assert_eq!(vs_similarity(ptr::null(), 0, reference.as_ptr(), 3, &mut s), VsStatus::Ok);
        assert_eq!(s, 0.0);
    }
}

#[test]
fn model_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.jsonl");
    let corpus = make_synthetic_corpus(&CorpusConfig { pairs: 50, ..Default::default() }, &mut RngStream::new(1, 0)).unwrap();
    corpus.save(&corpus_path).unwrap();
    let c_corpus = CString::new(corpus_path.to_str().unwrap()).unwrap();
    let model_path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();

    let reference = train(&corpus, 3, 0.1, Direction::Asr).unwrap();
    let pair = &corpus.pairs[0];
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(vs_model_train(c_corpus.as_ptr(), 3, 0.1, VsDirection::Asr, &mut model), VsStatus::Ok);
        assert_eq!(vs_model_save(model, model_path.as_ptr()), VsStatus::Ok);
        vs_model_free(model);

        let mut loaded = ptr::null_mut();
        assert_eq!(vs_model_load(model_path.as_ptr(), &mut loaded), VsStatus::Ok);
        let (mut nll, mut count) = (0.0, 0usize);
        let status = vs_model_log_prob(loaded, pair.text.as_ptr(), pair.text.len(), pair.speech.as_ptr(), pair.speech.len(), &mut nll, &mut count);
        assert_eq!(status, VsStatus::Ok);
        let want = reference.log_prob(&pair.with_direction(Direction::Asr)).unwrap();
        assert_eq!(nll, want.nll);
        assert_eq!(count, pair.text.len());
        vs_model_free(loaded);

        let missing = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
        assert_eq!(vs_model_load(missing.as_ptr(), &mut loaded), VsStatus::Io);
    }
}

#[test]
fn run_search_returns_owned_json() {
    let config = CString::new(
        r#"{"algorithm": "prm_beam", "B": 2, "N": 3, "M": 3, "max_len": 30, "seed": 7,
            "testbed": {"corpus": {"text_vocab": 9, "speech_vocab": 9, "pairs": 200, "text_len": [2, 4], "expansion": 3, "flip_p": 0.1}}}"#,
    )
    .unwrap();
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(vs_run_search(config.as_ptr(), ptr::null(), &mut out), VsStatus::Ok);
        let text = CStr::from_ptr(out).to_str().unwrap().to_owned();
        vs_string_free(out);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["budget"]["candidates_generated"], 6);

        let mut again = ptr::null_mut();
        assert_eq!(vs_run_search(config.as_ptr(), ptr::null(), &mut again), VsStatus::Ok);
        assert_eq!(CStr::from_ptr(again).to_str().unwrap(), text);
        vs_string_free(again);

        let bad = CString::new(r#"{"algorithm": "nope", "B": 1, "N": 1}"#).unwrap();
        assert_eq!(vs_run_search(bad.as_ptr(), ptr::null(), &mut out), VsStatus::Config);
        assert_eq!(vs_run_search(ptr::null(), ptr::null(), &mut out), VsStatus::NullPointer);
        vs_string_free(ptr::null_mut());
    }
}

/// Directory holding the built libraries: `target/<profile>`.
fn lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(|deps| deps.parent()).unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/verisearch.h");
    assert!(header.exists(), "header not generated");
    let staticlib = lib_dir().join("libverisearch_ffi.a");
    assert!(staticlib.exists(), "missing {}", staticlib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&staticlib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

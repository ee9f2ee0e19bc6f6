//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::corpus::{make_synthetic_corpus, Corpus, CorpusConfig};
use crate::error::{Error, Result};
use crate::fsq::{check_bijection, expected_uniform_coverage, FsqConfig};
use crate::harness::{brute_force_optimum, run_sweep, Testbed, SweepSpec};
use crate::lm::{train, KGramModel, DEFAULT_ALPHA, DEFAULT_ORDER};
use crate::rng::{tags, RngStream};
use crate::search::{run_search, RunConfig};
use crate::types::Direction;
use crate::verify::VerifierContext;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_IO: i32 = 2;

/// Allowed gap between observed and expected FSQ sample coverage.
const COVERAGE_TOLERANCE: f64 = 0.005;

/// Nominal sample-coverage goal, reported alongside the analytic expectation.
const COVERAGE_TARGET: f64 = 0.99;

#[derive(Parser, Debug)]
#[command(name = "verisearch", version, about = "Verifier-guided test-time search over a k-gram speech-token generator")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a synthetic text/speech corpus (JSONL).
    GenCorpus {
        #[arg(long)]
        seed: u64,
        /// Corpus config JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a k-gram model to a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "tts")]
        direction: DirectionArg,
    },
    /// Run one search described by a JSON run config.
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Write the result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a budget sweep and write the CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustive FSQ bijection, reachability and sample-coverage checks.
    FsqCheck {
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated levels per dimension.
        #[arg(long, value_delimiter = ',', default_values_t = vec![4u32; 8])]
        levels: Vec<u32>,
    },
    /// Brute-force optimum for a run config's instance.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Enumeration length; the config's max_len when omitted.
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum DirectionArg {
    Tts,
    Asr,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Tts => Direction::Tts,
            DirectionArg::Asr => Direction::Asr,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::config(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                EXIT_IO
            } else {
                EXIT_CONFIG
            }
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::GenCorpus { seed, config, out } => {
            let cfg: CorpusConfig = match config {
                Some(p) => read_json(&p)?,
                None => CorpusConfig::default(),
            };
            let corpus = make_synthetic_corpus(&cfg, &mut RngStream::new(seed, tags::CORPUS))?;
            corpus.save(&out)?;
            eprintln!("wrote {} pairs to {}", corpus.len(), out.display());
            Ok(EXIT_OK)
        }
        Command::Train { corpus, out, order, alpha, direction } => {
            let corpus = Corpus::load(&corpus)?;
            let model = train(&corpus, order, alpha, direction.into())?;
            model.save(&out)?;
            eprintln!("trained order-{order} model with {} contexts", model.context_count());
            Ok(EXIT_OK)
        }
        Command::Search { config, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.seed = seed;
            let result = run_search(&cfg, &base_dir(&config))?;
            let mut text = result.to_json_pretty();
            text.push('\n');
            write_out(out.as_deref(), &text)?;
            Ok(EXIT_OK)
        }
        Command::Sweep { config, seed, out } => {
            let spec = SweepSpec::load(&config)?;
            let result = run_sweep(&spec, seed)?;
            result.write_csv(&out)?;
            eprintln!("wrote {} rows to {}", result.rows.len(), out.display());
            Ok(EXIT_OK)
        }
        Command::FsqCheck { samples, seed, levels } => fsq_check(samples, seed, levels),
        Command::Oracle { config, max_len, out } => {
            let cfg = RunConfig::load(&config)?;
            let text = oracle(&cfg, &base_dir(&config), max_len)?;
            write_out(out.as_deref(), &text)?;
            Ok(EXIT_OK)
        }
    }
}

fn fsq_check(samples: u64, seed: u64, levels: Vec<u32>) -> Result<i32> {
    let cfg = FsqConfig::new(levels)?;
    let n = cfg.codebook_size();
    let report = check_bijection(&cfg);
    let ok_bij = report.mismatches == 0;
    println!("bijection: {}/{} {}", report.checked - report.mismatches, report.checked, if ok_bij { "ok" } else { "FAIL" });

    let reachable = (0..n)
        .filter(|&i| cfg.index_to_codes(i).and_then(|v| cfg.quantize(&v)).map(|c| c.index == i).unwrap_or(false))
        .count() as u64;
    let ok_reach = reachable == n;
    println!("reachability: {reachable}/{n} {}", if ok_reach { "ok" } else { "FAIL" });

    let mut hit = vec![false; n as usize];
    let mut rng = RngStream::new(seed, tags::SPLIT);
    let mut h = vec![0.0; cfg.dim()];
    for _ in 0..samples {
        for x in h.iter_mut() {
            *x = 2.0 * rng.next_f64() - 1.0;
        }
        hit[cfg.quantize(&h)?.index as usize] = true;
    }
    let covered = hit.iter().filter(|&&b| b).count() as u64;
    let observed = covered as f64 / n as f64;
    let expected = expected_uniform_coverage(&cfg, samples);
    let ok_cov = (observed - expected).abs() <= COVERAGE_TOLERANCE;
    println!(
        "coverage: {covered}/{n} ({:.2}%) from {samples} uniform samples, expected {:.2}% {}",
        100.0 * observed,
        100.0 * expected,
        if ok_cov { "ok" } else { "FAIL" }
    );
    if observed < COVERAGE_TARGET {
        println!(
            "coverage target {:.0}%: not met; edge cells are half width, so this grid cannot reach it at {samples} samples",
            100.0 * COVERAGE_TARGET
        );
    }
    Ok(if ok_bij && ok_reach && ok_cov { EXIT_OK } else { EXIT_CONFIG })
}

fn oracle(cfg: &RunConfig, base: &Path, max_len: Option<usize>) -> Result<String> {
    let (model, ctx) = match (&cfg.model, &cfg.testbed) {
        (Some(p), _) => {
            let model = std::sync::Arc::new(KGramModel::load(&base.join(p))?);
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
            let ctx = VerifierContext {
                reference: cfg.reference.clone(),
                text: cfg.text.clone().unwrap_or_default(),
                channel,
                model: Some(model.clone()),
            };
            (model, ctx)
        }
        (None, Some(spec)) => {
            let tb = Testbed::build(spec)?;
            let mut inst = tb.instance(cfg.seed);
            if let Some(t) = &cfg.text {
                inst.text = t.clone();
            }
            if let Some(r) = &cfg.reference {
                inst.reference = r.clone();
            }
            (tb.model_arc(), tb.verifier_context(&inst))
        }
        (None, None) => return Err(Error::config("oracle config needs either 'model' or 'testbed'")),
    };
    let verifier = match &cfg.verifiers.final_rerank {
        Some(keys) => std::sync::Arc::new(ctx.composite(keys)?),
        None => ctx.build(&cfg.verifiers.orm)?,
    };
    let len = max_len.unwrap_or(cfg.max_len);
    let (seq, score) = brute_force_optimum(model.speech_vocab(), verifier.as_ref(), len)?;
    let out = serde_json::json!({
        "format_version": 1,
        "max_len": len,
        "tokens": seq,
        "score": score,
    });
    Ok(format!("{}\n", serde_json::to_string_pretty(&out).expect("json")))
}

//! Verifier-guided test-time search for autoregressive token generators.
//!
//! The crate pairs a count-based k-gram text→speech generator with three
//! search strategies that spend extra inference compute to improve outputs
//! under external verifiers:
//!
//! * best-of-N with an outcome verifier,
//! * beam search guided by a process (prefix) verifier,
//! * a hybrid that runs beam search for an initial token span and then
//!   switches to independent completions ranked by an outcome verifier.
//!
//! It also carries the finite-scalar-quantization codebook arithmetic used
//! by the speech tokenizer (8 dimensions × 4 levels = 65536 codes).

pub mod cli;
pub mod corpus;
pub mod error;
pub mod fsq;
pub mod harness;
pub mod lm;
pub mod rng;
pub mod search;
pub mod types;
pub mod verify;

pub use error::{Error, Result};

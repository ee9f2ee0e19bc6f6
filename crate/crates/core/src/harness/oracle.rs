//! Exhaustive search over every sequence the generator can emit.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::types::{TokenId, Vocab};
use crate::verify::{Score, Verifier};

/// Largest `vocab.size ^ max_len` the enumerator will accept.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

/// Every possible generator output of at most `max_len` tokens: `l < max_len`
/// content tokens followed by eos, or exactly `max_len` content tokens.
/// Returned in lexicographic order.
pub fn enumerate_outputs(vocab: &Vocab, max_len: usize) -> Result<Vec<Vec<TokenId>>> {
    check_guard(vocab, max_len)?;
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(max_len);
    walk(vocab, max_len, &mut cur, &mut out);
    Ok(out)
}

fn walk(vocab: &Vocab, max_len: usize, cur: &mut Vec<TokenId>, out: &mut Vec<Vec<TokenId>>) {
    if cur.len() == max_len {
        out.push(cur.clone());
        return;
    }
    for id in 0..vocab.size() {
        cur.push(id);
        if id == vocab.eos() {
            out.push(cur.clone());
        } else {
            walk(vocab, max_len, cur, out);
        }
        cur.pop();
    }
}

fn check_guard(vocab: &Vocab, max_len: usize) -> Result<()> {
    let bound = (vocab.size() as u64).checked_pow(max_len as u32);
    match bound {
        Some(b) if b <= ENUMERATION_LIMIT => Ok(()),
        _ => Err(Error::config(format!(
            "refusing to enumerate: {}^{max_len} exceeds the limit of {ENUMERATION_LIMIT} sequences",
            vocab.size()
        ))),
    }
}

/// The best complete sequence under `verifier` (scored on content tokens),
/// ties going to the lexicographically smallest sequence.
pub fn brute_force_optimum(vocab: &Vocab, verifier: &dyn Verifier, max_len: usize) -> Result<(Vec<TokenId>, Score)> {
    let mut best: Option<(Vec<TokenId>, Score)> = None;
    for seq in enumerate_outputs(vocab, max_len)? {
        let s = verifier.score(vocab.strip_eos(&seq));
        let better = match &best {
            None => true,
            Some((_, b)) => s.cmp_rank(b) == Ordering::Greater,
        };
        if better {
            best = Some((seq, s));
        }
    }
    Ok(best.expect("at least one sequence"))
}

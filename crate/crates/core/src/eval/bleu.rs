//! Corpus BLEU: modified n-gram precision with multi-reference clipping,
//! geometric mean over orders 1..=max_n, and brevity penalty against the
//! closest reference length.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Corpus-level BLEU in [0, 100].
///
/// Per order n, the modified precision clips each hypothesis n-gram count at
/// the maximum count over that item's references, then pools matches and
/// totals over the corpus. Orders with zero total candidate n-grams (all
/// hypotheses shorter than n) are left out of the geometric mean; an included
/// order with zero matches makes the score 0 (no smoothing). The brevity
/// penalty uses, per item, the reference length closest to the hypothesis
/// length, ties resolved toward the shorter reference.
pub fn corpus_bleu(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>], max_n: usize) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::Invalid(format!(
            "hypothesis/reference count mismatch: {} vs {}",
            hyps.len(),
            refs.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::Invalid("max_n must be at least 1".into()));
    }
    if let Some(i) = refs.iter().position(|r| r.is_empty()) {
        return Err(Error::Invalid(format!("empty reference set at item {i}")));
    }
    if hyps.is_empty() {
        return Err(Error::Invalid("corpus BLEU needs at least one item".into()));
    }

    let mut matched = vec![0u64; max_n];
    let mut total = vec![0u64; max_n];
    let mut hyp_len = 0u64;
    let mut ref_len = 0u64;

    for (hyp, ref_set) in hyps.iter().zip(refs) {
        hyp_len += hyp.len() as u64;
        ref_len += closest_ref_len(hyp.len(), ref_set) as u64;
        for n in 1..=max_n {
            let hyp_counts = ngram_counts(hyp, n);
            if hyp_counts.is_empty() {
                continue;
            }
            let mut clip: HashMap<&[String], u64> = HashMap::new();
            for r in ref_set {
                for (gram, count) in ngram_counts(r, n) {
                    let e = clip.entry(gram).or_insert(0);
                    *e = (*e).max(count);
                }
            }
            for (gram, count) in &hyp_counts {
                total[n - 1] += count;
                matched[n - 1] += (*count).min(clip.get(gram).copied().unwrap_or(0));
            }
        }
    }

    if hyp_len == 0 {
        return Ok(0.0);
    }

    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for n in 0..max_n {
        if total[n] == 0 {
            continue;
        }
        if matched[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matched[n] as f64 / total[n] as f64).ln();
        orders += 1;
    }
    if orders == 0 {
        return Ok(0.0);
    }
    let precision = (log_sum / orders as f64).exp();
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * precision * bp)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Reference length closest to `hyp_len`; ties go to the shorter reference.
fn closest_ref_len(hyp_len: usize, refs: &[Vec<String>]) -> usize {
    let mut best = refs[0].len();
    for r in &refs[1..] {
        let len = r.len();
        let d_new = len.abs_diff(hyp_len);
        let d_best = best.abs_diff(hyp_len);
        if d_new < d_best || (d_new == d_best && len < best) {
            best = len;
        }
    }
    best
}

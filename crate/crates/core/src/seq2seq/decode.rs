//! Decoding strategies: greedy, beam, ancestral sampling, and greedy
//! decoding over noise-perturbed decoder states, plus the batched
//! sample-and-filter step used to mine novel utterances.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::corpus::linearize::LinearizedInput;
use crate::corpus::vocab::{BOS, EOS};
use crate::error::{Error, Result};
use crate::nn::graph::log_softmax_at;
use crate::nn::kernels::log_softmax;
use crate::nn::rng::RngStream;

use super::model::{DecoderState, EncoderStates, Seq2SeqModel};

/// One decoded output. `tokens` is the surface form with the terminating
/// EOS stripped; `token_logprobs` keeps one entry per decode step, EOS step
/// included, so `avg_ll` is their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSample {
    pub tokens: Vec<String>,
    pub token_logprobs: Vec<f64>,
    pub avg_ll: f64,
}

impl DecodedSample {
    fn from_ids(model: &Seq2SeqModel, ids: &[u32], token_logprobs: Vec<f64>) -> DecodedSample {
        let tokens = ids.iter().map(|&id| model.output_vocab.token(id).to_string()).collect();
        let avg_ll = mean(&token_logprobs);
        DecodedSample { tokens, token_logprobs, avg_ll }
    }

    pub fn surface(&self) -> String {
        self.tokens.join(" ")
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Noise schedule for perturbed decoding: step i (1-based) adds Gaussian
/// noise with per-coordinate variance sigma0²/i to the top decoder state.
pub struct NoiseSpec {
    pub sigma0: f64,
    pub rng: RngStream,
}

impl NoiseSpec {
    pub fn new(sigma0: f64, rng: RngStream) -> Result<NoiseSpec> {
        if !(sigma0 >= 0.0) {
            return Err(Error::Config(format!("sigma0 must be nonnegative, got {sigma0}")));
        }
        Ok(NoiseSpec { sigma0, rng })
    }

    /// Draw the step-i noise vector, or nothing when sigma0 is zero so the
    /// zero-noise path is bit-identical to plain greedy.
    fn draw(&mut self, step: usize, dim: usize) -> Option<Vec<f64>> {
        if self.sigma0 == 0.0 {
            return None;
        }
        let sd = self.sigma0 / (step as f64).sqrt();
        Some((0..dim).map(|_| self.rng.standard_normal() * sd).collect())
    }
}

/// Argmax with ties broken by the lowest index.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding: at each step emit the most probable token, stopping at
/// EOS or the configured maximum length.
pub fn greedy(model: &Seq2SeqModel, input: &LinearizedInput) -> Result<DecodedSample> {
    let enc = model.encode(input)?;
    greedy_from(model, &enc, None)
}

fn greedy_from(
    model: &Seq2SeqModel,
    enc: &EncoderStates,
    mut noise: Option<&mut NoiseSpec>,
) -> Result<DecodedSample> {
    let dim = model.config.hidden_dim;
    let mut state = model.decoder_init(enc);
    let mut prev = BOS;
    let mut ids = Vec::new();
    let mut logprobs = Vec::new();
    for step in 1..=model.config.max_decode_len {
        let eps = noise.as_mut().and_then(|spec| spec.draw(step, dim));
        let (logits, next) = model.decoder_step(prev, &state, enc, eps.as_deref())?;
        let choice = argmax(&logits);
        logprobs.push(log_softmax_at(&logits, choice));
        state = next;
        prev = choice as u32;
        if prev == EOS {
            break;
        }
        ids.push(prev);
    }
    Ok(DecodedSample::from_ids(model, &ids, logprobs))
}

/// Ancestral sampling: each token drawn from softmax(logits/temperature).
/// Temperatures below 1e-6 collapse to argmax.
pub fn ancestral_sample(
    model: &Seq2SeqModel,
    input: &LinearizedInput,
    temperature: f64,
    rng: &mut RngStream,
) -> Result<DecodedSample> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    let enc = model.encode(input)?;
    let mut state = model.decoder_init(&enc);
    let mut prev = BOS;
    let mut ids = Vec::new();
    let mut logprobs = Vec::new();
    for _ in 0..model.config.max_decode_len {
        let (logits, next) = model.decoder_step(prev, &state, &enc, None)?;
        let choice = if temperature < 1e-6 {
            argmax(&logits)
        } else {
            let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
            let probs = crate::nn::graph::softmax_slice(&scaled);
            rng.weighted_index(&probs)
        };
        // Reported log-probability is under the unscaled model distribution.
        logprobs.push(log_softmax_at(&logits, choice));
        state = next;
        prev = choice as u32;
        if prev == EOS {
            break;
        }
        ids.push(prev);
    }
    Ok(DecodedSample::from_ids(model, &ids, logprobs))
}

/// Greedy decoding over noise-perturbed top-layer decoder states. The
/// perturbed state is used for token selection and carried forward, and the
/// reported log-probabilities come from the perturbed distributions that
/// governed selection.
pub fn noise_inject_sample(
    model: &Seq2SeqModel,
    input: &LinearizedInput,
    spec: &mut NoiseSpec,
) -> Result<DecodedSample> {
    let enc = model.encode(input)?;
    greedy_from(model, &enc, Some(spec))
}

/// One beam hypothesis during search.
#[derive(Debug, Clone)]
struct Hypothesis {
    ids: Vec<u32>,
    logprobs: Vec<f64>,
    state: DecoderState,
    prev: u32,
}

impl Hypothesis {
    fn score(&self) -> f64 {
        mean(&self.logprobs)
    }
}

/// Beam search scored by average log-likelihood. Hypotheses that emit EOS
/// retire and compete with live ones on the same statistic; the final list
/// is sorted by score descending.
pub fn beam(model: &Seq2SeqModel, input: &LinearizedInput, width: usize) -> Result<Vec<DecodedSample>> {
    if width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let enc = model.encode(input)?;
    let init = model.decoder_init(&enc);
    let mut live = vec![Hypothesis { ids: Vec::new(), logprobs: Vec::new(), state: init, prev: BOS }];
    let mut done: Vec<Hypothesis> = Vec::new();

    for _ in 0..model.config.max_decode_len {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<Hypothesis> = Vec::new();
        for hyp in &live {
            let (logits, next) = model.decoder_step(hyp.prev, &hyp.state, &enc, None)?;
            let logp = log_softmax(&logits);
            for (tok, &lp) in logp.iter().enumerate() {
                let mut ids = hyp.ids.clone();
                let mut logprobs = hyp.logprobs.clone();
                logprobs.push(lp);
                if tok as u32 != EOS {
                    ids.push(tok as u32);
                }
                candidates.push(Hypothesis {
                    ids,
                    logprobs,
                    state: next.clone(),
                    prev: tok as u32,
                });
            }
        }
        // Keep the `width` best expansions; earlier candidates win ties so
        // lower vocab indices survive, matching greedy's tie rule at width 1.
        candidates.sort_by(|a, b| b.score().partial_cmp(&a.score()).unwrap_or(std::cmp::Ordering::Equal));
        candidates.truncate(width);
        live = Vec::new();
        for cand in candidates {
            if cand.prev == EOS {
                done.push(cand);
            } else {
                live.push(cand);
            }
        }
    }
    // Length-capped leftovers still compete.
    done.extend(live);
    done.sort_by(|a, b| b.score().partial_cmp(&a.score()).unwrap_or(std::cmp::Ordering::Equal));
    done.truncate(width);
    Ok(done
        .into_iter()
        .map(|h| DecodedSample::from_ids(model, &h.ids, h.logprobs))
        .collect())
}

/// Configuration for the batched sample-and-filter step.
#[derive(Debug, Clone)]
pub struct SampleBatchConfig {
    pub n: usize,
    pub k: usize,
    pub sigma0: f64,
    pub seed: u64,
    /// Offset added to every draw's stream id, so repeated batches under one
    /// seed can use disjoint stream ranges.
    pub stream_base: u64,
    /// Score samples under the clean model instead of the perturbed
    /// distributions that selected the tokens.
    pub rescore_clean: bool,
}

impl Default for SampleBatchConfig {
    fn default() -> SampleBatchConfig {
        SampleBatchConfig { n: 200, k: 20, sigma0: 1.0, seed: 0, stream_base: 0, rescore_clean: false }
    }
}

/// Draw `n` independent noise-injection samples (sample i uses rng stream
/// (seed, stream_base + i)), keep the top `k` by avg_ll with ties broken by draw index,
/// drop any whose surface sequence was already seen, and record survivors
/// in `seen`. Deterministic regardless of worker count.
pub fn sample_batch_topk(
    model: &Seq2SeqModel,
    input: &LinearizedInput,
    cfg: &SampleBatchConfig,
    seen: &mut HashSet<Vec<String>>,
) -> Result<Vec<DecodedSample>> {
    if cfg.k == 0 || cfg.n < cfg.k {
        return Err(Error::Config(format!("need n >= k >= 1, got n={} k={}", cfg.n, cfg.k)));
    }
    let enc = model.encode(input)?;
    let mut drawn: Vec<(usize, DecodedSample)> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut spec = NoiseSpec {
                sigma0: cfg.sigma0,
                rng: RngStream::new(cfg.seed, cfg.stream_base + i as u64),
            };
            let mut sample = greedy_from(model, &enc, Some(&mut spec))?;
            if cfg.rescore_clean {
                rescore(model, &enc, &mut sample)?;
            }
            Ok((i, sample))
        })
        .collect::<Result<Vec<_>>>()?;
    drawn.sort_by(|a, b| {
        b.1.avg_ll
            .partial_cmp(&a.1.avg_ll)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    drawn.truncate(cfg.k);
    let mut kept = Vec::new();
    for (_, sample) in drawn {
        if seen.insert(sample.tokens.clone()) {
            kept.push(sample);
        }
    }
    Ok(kept)
}

/// Recompute a sample's log-probabilities under the clean (noise-free)
/// model, teacher-forcing its own tokens.
fn rescore(model: &Seq2SeqModel, enc: &EncoderStates, sample: &mut DecodedSample) -> Result<()> {
    let ids = model.output_vocab.encode_strict(&sample.tokens)?;
    let mut state = model.decoder_init(enc);
    let mut prev = BOS;
    let mut logprobs = Vec::with_capacity(ids.len() + 1);
    // A sample that hit the length cap has no EOS step; rescore only the
    // steps that were actually taken.
    let had_eos = sample.token_logprobs.len() == ids.len() + 1;
    let steps: Vec<u32> = if had_eos {
        ids.iter().copied().chain(std::iter::once(EOS)).collect()
    } else {
        ids.clone()
    };
    for &target in &steps {
        let (logits, next) = model.decoder_step(prev, &state, enc, None)?;
        logprobs.push(log_softmax_at(&logits, target as usize));
        state = next;
        prev = target;
    }
    sample.avg_ll = mean(&logprobs);
    sample.token_logprobs = logprobs;
    Ok(())
}

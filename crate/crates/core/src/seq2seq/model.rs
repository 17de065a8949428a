//! The two-layer GRU encoder-decoder with feed-forward attention.
//!
//! Two forward paths exist on purpose: a tape-graph path for training (with
//! dropout) and a plain-vector kernel path for decoding. An equivalence test
//! pins them together: eval-mode graph NLL equals the kernel-computed
//! teacher-forced NLL.

use serde::{Deserialize, Serialize};

use crate::corpus::linearize::{LinMode, LinearizedInput};
use crate::corpus::vocab::{Vocab, BOS, EOS};
use crate::error::{Error, Result};
use crate::nn::blocks::{
    register_affine, register_attention, register_gru, AffineNodes, AttentionNodes, GruNodes,
};
use crate::nn::graph::{Graph, NodeId};
use crate::nn::kernels::{self, AttentionWeights, GruWeights};
use crate::nn::params::ParamStore;
use crate::nn::rng::RngStream;
use crate::nn::tensor::Tensor;

/// Number of GRU layers in both encoder and decoder.
pub const LAYERS: usize = 2;

/// Stream id used for parameter initialization draws.
pub const STREAM_PARAM_INIT: u64 = 0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    pub dropout: f64,
    #[serde(default = "default_max_decode_len")]
    pub max_decode_len: usize,
    /// Linearization mode the model was built for; recorded in bundles so
    /// decoding pipelines rebuild inputs the same way.
    pub mode: LinMode,
}

fn default_layers() -> usize {
    LAYERS
}

fn default_max_decode_len() -> usize {
    60
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers != LAYERS {
            return Err(Error::Config(format!("layers must be {LAYERS}, got {}", self.layers)));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.max_decode_len == 0 {
            return Err(Error::Config("max decode length must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Encoder output for one input sequence: per-position top-layer states,
/// their attention projections (W1·enc_j), and the per-layer final states
/// that initialize the decoder.
#[derive(Debug, Clone)]
pub struct EncoderStates {
    pub top: Vec<Vec<f64>>,
    pub proj: Vec<Vec<f64>>,
    pub init: Vec<Vec<f64>>,
}

/// Decoder recurrent state, one vector per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub layers: Vec<Vec<f64>>,
}

pub struct Seq2SeqModel {
    pub config: ModelConfig,
    pub input_vocab: Vocab,
    pub output_vocab: Vocab,
    pub params: ParamStore,
}

impl Seq2SeqModel {
    /// Fresh model: weights uniform on [-0.1, 0.1], biases zero, drawn from
    /// (seed, stream 0) in a fixed registration order.
    pub fn new(config: ModelConfig, input_vocab: Vocab, output_vocab: Vocab, seed: u64) -> Result<Seq2SeqModel> {
        config.validate()?;
        let mut rng = RngStream::new(seed, STREAM_PARAM_INIT);
        let mut params = ParamStore::new();
        let (e, h) = (config.embed_dim, config.hidden_dim);
        params.init_uniform("enc.embed", &[input_vocab.len(), e], &mut rng)?;
        register_gru(&mut params, "enc.gru0", e, h, &mut rng)?;
        register_gru(&mut params, "enc.gru1", h, h, &mut rng)?;
        params.init_uniform("dec.embed", &[output_vocab.len(), e], &mut rng)?;
        register_gru(&mut params, "dec.gru0", e, h, &mut rng)?;
        register_gru(&mut params, "dec.gru1", h, h, &mut rng)?;
        register_attention(&mut params, "att", h, h, h, &mut rng)?;
        register_affine(&mut params, "proj", 2 * h, output_vocab.len(), &mut rng)?;
        Ok(Seq2SeqModel { config, input_vocab, output_vocab, params })
    }

    /// Wrap existing parameters (checkpoint loads). Shapes are validated
    /// against the config and vocabularies.
    pub fn from_parts(
        config: ModelConfig,
        input_vocab: Vocab,
        output_vocab: Vocab,
        params: ParamStore,
    ) -> Result<Seq2SeqModel> {
        config.validate()?;
        let check = |name: &str, shape: &[usize]| -> Result<()> {
            let t = params.get(name)?;
            if t.shape() != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(())
        };
        let (e, h) = (config.embed_dim, config.hidden_dim);
        check("enc.embed", &[input_vocab.len(), e])?;
        check("dec.embed", &[output_vocab.len(), e])?;
        check("proj.w", &[output_vocab.len(), 2 * h])?;
        check("att.w1", &[h, h])?;
        check("enc.gru0.wz", &[h, e])?;
        check("dec.gru1.uz", &[h, h])?;
        Ok(Seq2SeqModel { config, input_vocab, output_vocab, params })
    }

    /// Encode a linearized input with the kernel path (no dropout).
    pub fn encode(&self, input: &LinearizedInput) -> Result<EncoderStates> {
        let ids = self.input_vocab.encode_strict(&input.tokens)?;
        self.encode_ids(&ids)
    }

    pub fn encode_ids(&self, ids: &[u32]) -> Result<EncoderStates> {
        if ids.is_empty() {
            return Err(Error::Invalid("cannot encode an empty input sequence".into()));
        }
        let embed = self.params.get("enc.embed")?;
        let gru0 = GruWeights::from_store(&self.params, "enc.gru0")?;
        let gru1 = GruWeights::from_store(&self.params, "enc.gru1")?;
        let att_w1 = self.params.get("att.w1")?;
        let h = self.config.hidden_dim;
        let mut h0 = vec![0.0; h];
        let mut h1 = vec![0.0; h];
        let mut top = Vec::with_capacity(ids.len());
        for &id in ids {
            let x = embed.row(id as usize);
            h0 = kernels::gru_cell(&gru0, x, &h0)?;
            h1 = kernels::gru_cell(&gru1, &h0, &h1)?;
            top.push(h1.clone());
        }
        let proj = top.iter().map(|s| kernels::matvec(att_w1, s)).collect();
        Ok(EncoderStates { top, proj, init: vec![h0, h1] })
    }

    /// Decoder start state: per-layer copy of the final encoder states.
    pub fn decoder_init(&self, enc: &EncoderStates) -> DecoderState {
        DecoderState { layers: enc.init.clone() }
    }

    /// One decoder step on the kernel path. `noise`, when present, is added
    /// to the top-layer state after the recurrence; the perturbed state is
    /// used for attention and projection and carried forward in the returned
    /// state, so the perturbation persists into later steps.
    pub fn decoder_step(
        &self,
        prev_token: u32,
        state: &DecoderState,
        enc: &EncoderStates,
        noise: Option<&[f64]>,
    ) -> Result<(Vec<f64>, DecoderState)> {
        let embed = self.params.get("dec.embed")?;
        let gru0 = GruWeights::from_store(&self.params, "dec.gru0")?;
        let gru1 = GruWeights::from_store(&self.params, "dec.gru1")?;
        let att = AttentionWeights::from_store(&self.params, "att")?;
        let proj_w = self.params.get("proj.w")?;
        let proj_b = self.params.get("proj.b")?;

        let x = embed.row(prev_token as usize);
        let h0 = kernels::gru_cell(&gru0, x, &state.layers[0])?;
        let mut h1 = kernels::gru_cell(&gru1, &h0, &state.layers[1])?;
        if let Some(eps) = noise {
            if eps.len() != h1.len() {
                return Err(Error::Shape {
                    op: "decoder_step",
                    msg: format!("noise dim {} vs state dim {}", eps.len(), h1.len()),
                });
            }
            for (hv, ev) in h1.iter_mut().zip(eps) {
                *hv += ev;
            }
        }
        let (context, _) = kernels::attention(&att, &enc.proj, &enc.top, &h1)?;
        let mut feat = Vec::with_capacity(h1.len() + context.len());
        feat.extend_from_slice(&h1);
        feat.extend_from_slice(&context);
        let mut logits = kernels::matvec(proj_w, &feat);
        kernels::add_assign(&mut logits, proj_b.values());
        Ok((logits, DecoderState { layers: vec![h0, h1] }))
    }

    /// Teacher-forced NLL (sum of per-token cross-entropies, EOS included)
    /// on the kernel path. No dropout; used for scoring and as the oracle
    /// that pins the graph path.
    pub fn teacher_forced_nll(&self, input: &[String], output: &[String]) -> Result<f64> {
        let in_ids = self.input_vocab.encode_strict(input)?;
        let out_ids = self.output_vocab.encode_lossy(output);
        let enc = self.encode_ids(&in_ids)?;
        let mut state = self.decoder_init(&enc);
        let mut prev = BOS;
        let mut nll = 0.0;
        for &target in out_ids.iter().chain(std::iter::once(&EOS)) {
            let (logits, next) = self.decoder_step(prev, &state, &enc, None)?;
            nll -= crate::nn::graph::log_softmax_at(&logits, target as usize);
            state = next;
            prev = target;
        }
        Ok(nll)
    }

    /// Teacher-forced NLL on the graph path. With `training` set, dropout is
    /// applied (embedding outputs and each GRU layer's output; never the
    /// recurrent connections) and gradients can be taken.
    pub fn sequence_nll(
        &self,
        input: &[String],
        output: &[String],
        training: bool,
        rng: &mut RngStream,
    ) -> Result<f64> {
        let in_ids = self.input_vocab.encode_strict(input)?;
        let out_ids = self.output_vocab.encode_lossy(output);
        let mut g = Graph::new();
        let bound = BoundModel::bind(&mut g, &self.params)?;
        let loss = build_example_loss(
            &mut g,
            &bound,
            &in_ids,
            &out_ids,
            self.config.hidden_dim,
            if training { self.config.dropout } else { 0.0 },
            rng,
        )?;
        Ok(g.value(loss).item())
    }

    /// Eval-mode NLL with analytic gradients for every parameter, shaped for
    /// the finite-difference checker.
    pub fn nll_with_grads(&self, input: &[String], output: &[String]) -> Result<(f64, Vec<(String, Tensor)>)> {
        let in_ids = self.input_vocab.encode_strict(input)?;
        let out_ids = self.output_vocab.encode_lossy(output);
        let mut g = Graph::new();
        let bound = BoundModel::bind(&mut g, &self.params)?;
        let mut rng = RngStream::new(0, 0);
        let loss =
            build_example_loss(&mut g, &bound, &in_ids, &out_ids, self.config.hidden_dim, 0.0, &mut rng)?;
        g.backward(loss)?;
        let mut sink = ParamStore::new();
        for (name, t) in self.params.iter() {
            sink.add(name, Tensor::zeros(t.shape()))?;
        }
        g.flush_grads(&mut sink)?;
        let grads = sink
            .names()
            .to_vec()
            .into_iter()
            .map(|n| {
                let g = sink.grad(&n).expect("registered above").clone();
                (n, g)
            })
            .collect();
        Ok((g.value(loss).item(), grads))
    }
}

/// All model parameters bound into one graph; bind once per graph and share
/// across the batch.
pub struct BoundModel {
    pub enc_embed: NodeId,
    pub dec_embed: NodeId,
    pub enc_gru0: GruNodes,
    pub enc_gru1: GruNodes,
    pub dec_gru0: GruNodes,
    pub dec_gru1: GruNodes,
    pub att: AttentionNodes,
    pub proj: AffineNodes,
}

impl BoundModel {
    pub fn bind(g: &mut Graph, params: &ParamStore) -> Result<BoundModel> {
        Ok(BoundModel {
            enc_embed: g.param(params, "enc.embed")?,
            dec_embed: g.param(params, "dec.embed")?,
            enc_gru0: GruNodes::bind(g, params, "enc.gru0")?,
            enc_gru1: GruNodes::bind(g, params, "enc.gru1")?,
            dec_gru0: GruNodes::bind(g, params, "dec.gru0")?,
            dec_gru1: GruNodes::bind(g, params, "dec.gru1")?,
            att: AttentionNodes::bind(g, params, "att")?,
            proj: AffineNodes::bind(g, params, "proj")?,
        })
    }
}

/// Teacher-forced per-example loss subgraph: encoder sweep, decoder sweep
/// over BOS-shifted targets, sum of cross-entropies including EOS.
pub fn build_example_loss(
    g: &mut Graph,
    bound: &BoundModel,
    in_ids: &[u32],
    out_ids: &[u32],
    hidden: usize,
    dropout: f64,
    rng: &mut RngStream,
) -> Result<NodeId> {
    if out_ids.is_empty() {
        return Err(Error::Invalid("cannot train on an empty target sequence".into()));
    }
    if in_ids.is_empty() {
        return Err(Error::Invalid("cannot encode an empty input sequence".into()));
    }
    let training = dropout > 0.0;
    let zero = g.leaf(Tensor::vector(vec![0.0; hidden]))?;

    // Encoder sweep.
    let mut h0 = zero;
    let mut h1 = zero;
    let mut enc_top = Vec::with_capacity(in_ids.len());
    for &id in in_ids {
        let emb = g.row(bound.enc_embed, id as usize)?;
        let x = g.dropout(emb, dropout, training, rng)?;
        h0 = bound.enc_gru0.step(g, x, h0)?;
        let x1 = g.dropout(h0, dropout, training, rng)?;
        h1 = bound.enc_gru1.step(g, x1, h1)?;
        enc_top.push(h1);
    }
    let enc_proj = bound.att.project_encoder(g, &enc_top)?;

    // Decoder sweep with teacher forcing.
    let mut d0 = h0;
    let mut d1 = h1;
    let mut prev = BOS;
    let mut losses = Vec::with_capacity(out_ids.len() + 1);
    for &target in out_ids.iter().chain(std::iter::once(&EOS)) {
        let emb = g.row(bound.dec_embed, prev as usize)?;
        let x = g.dropout(emb, dropout, training, rng)?;
        d0 = bound.dec_gru0.step(g, x, d0)?;
        let x1 = g.dropout(d0, dropout, training, rng)?;
        d1 = bound.dec_gru1.step(g, x1, d1)?;
        let top = g.dropout(d1, dropout, training, rng)?;
        let (context, _) = bound.att.step(g, &enc_proj, &enc_top, top)?;
        let feat = g.concat(&[top, context])?;
        let logits = bound.proj.apply(g, feat)?;
        losses.push(g.cross_entropy(logits, target as usize)?);
        prev = target;
    }
    g.sum_scalars(&losses)
}

//! Forward-only vector kernels for inference paths (decoding, classifier
//! prediction). These mirror the graph ops exactly; an equivalence test in
//! the sequence model keeps the two paths in sync.

use crate::error::{Error, Result};

use super::graph::{sigmoid, softmax_slice};
use super::tensor::Tensor;

pub fn matvec(m: &Tensor, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(m.cols(), x.len());
    (0..m.rows())
        .map(|r| m.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn add_assign(acc: &mut [f64], other: &[f64]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

pub fn sigmoid_inplace(xs: &mut [f64]) {
    for v in xs.iter_mut() {
        *v = sigmoid(*v);
    }
}

pub fn tanh_inplace(xs: &mut [f64]) {
    for v in xs.iter_mut() {
        *v = v.tanh();
    }
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    softmax_slice(xs)
}

/// Log-probabilities from logits, numerically stable.
pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let log_total: f64 = xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    xs.iter().map(|v| (v - max) - log_total).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// GRU weights borrowed from a parameter store, one cell (layer).
pub struct GruWeights<'a> {
    pub wz: &'a Tensor,
    pub uz: &'a Tensor,
    pub bz: &'a Tensor,
    pub wr: &'a Tensor,
    pub ur: &'a Tensor,
    pub br: &'a Tensor,
    pub wc: &'a Tensor,
    pub uc: &'a Tensor,
    pub bc: &'a Tensor,
}

impl<'a> GruWeights<'a> {
    pub fn from_store(store: &'a super::params::ParamStore, prefix: &str) -> Result<Self> {
        Ok(GruWeights {
            wz: store.get(&format!("{prefix}.wz"))?,
            uz: store.get(&format!("{prefix}.uz"))?,
            bz: store.get(&format!("{prefix}.bz"))?,
            wr: store.get(&format!("{prefix}.wr"))?,
            ur: store.get(&format!("{prefix}.ur"))?,
            br: store.get(&format!("{prefix}.br"))?,
            wc: store.get(&format!("{prefix}.wc"))?,
            uc: store.get(&format!("{prefix}.uc"))?,
            bc: store.get(&format!("{prefix}.bc"))?,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.uz.rows()
    }
}

/// One GRU step:
///   z = σ(Wz·x + Uz·h + bz)
///   r = σ(Wr·x + Ur·h + br)
///   h̃ = tanh(Wc·x + Uc·(r⊙h) + bc)
///   h' = (1−z)⊙h + z⊙h̃
pub fn gru_cell(w: &GruWeights, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if w.wz.cols() != x.len() || w.uz.cols() != h.len() {
        return Err(Error::Shape {
            op: "gru_cell",
            msg: format!(
                "input {} vs Wz {:?}, state {} vs Uz {:?}",
                x.len(),
                w.wz.shape(),
                h.len(),
                w.uz.shape()
            ),
        });
    }
    let mut z = matvec(w.wz, x);
    add_assign(&mut z, &matvec(w.uz, h));
    add_assign(&mut z, w.bz.values());
    sigmoid_inplace(&mut z);

    let mut r = matvec(w.wr, x);
    add_assign(&mut r, &matvec(w.ur, h));
    add_assign(&mut r, w.br.values());
    sigmoid_inplace(&mut r);

    let rh: Vec<f64> = r.iter().zip(h).map(|(rv, hv)| rv * hv).collect();
    let mut c = matvec(w.wc, x);
    add_assign(&mut c, &matvec(w.uc, &rh));
    add_assign(&mut c, w.bc.values());
    tanh_inplace(&mut c);

    Ok(z.iter()
        .zip(h)
        .zip(&c)
        .map(|((zv, hv), cv)| (1.0 - zv) * hv + zv * cv)
        .collect())
}

/// Attention weights borrowed from a parameter store.
pub struct AttentionWeights<'a> {
    pub w1: &'a Tensor,
    pub w2: &'a Tensor,
    pub b: &'a Tensor,
    pub v: &'a Tensor,
}

impl<'a> AttentionWeights<'a> {
    pub fn from_store(store: &'a super::params::ParamStore, prefix: &str) -> Result<Self> {
        Ok(AttentionWeights {
            w1: store.get(&format!("{prefix}.w1"))?,
            w2: store.get(&format!("{prefix}.w2"))?,
            b: store.get(&format!("{prefix}.b"))?,
            v: store.get(&format!("{prefix}.v"))?,
        })
    }
}

/// Feed-forward attention:
///   score_j = vᵀ tanh(W1·enc_j + W2·dec + b)
///   weights = softmax(scores); context = Σ weights_j · enc_j
///
/// `enc_proj` are the precomputed W1·enc_j vectors (they do not depend on the
/// decoder state, so callers compute them once per input sequence).
pub fn attention(
    w: &AttentionWeights,
    enc_proj: &[Vec<f64>],
    enc_states: &[Vec<f64>],
    dec: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if enc_states.is_empty() || enc_proj.len() != enc_states.len() {
        return Err(Error::Shape {
            op: "attention",
            msg: format!("{} projections for {} encoder states", enc_proj.len(), enc_states.len()),
        });
    }
    let mut query = matvec(w.w2, dec);
    add_assign(&mut query, w.b.values());
    let scores: Vec<f64> = enc_proj
        .iter()
        .map(|p| {
            let mut hidden: Vec<f64> = p.iter().zip(&query).map(|(a, b)| a + b).collect();
            tanh_inplace(&mut hidden);
            dot(w.v.values(), &hidden)
        })
        .collect();
    let weights = softmax(&scores);
    let dim = enc_states[0].len();
    let mut context = vec![0.0; dim];
    for (wt, state) in weights.iter().zip(enc_states) {
        for (c, s) in context.iter_mut().zip(state) {
            *c += wt * s;
        }
    }
    Ok((context, weights))
}

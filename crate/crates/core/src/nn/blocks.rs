//! Graph builders for the model's composite blocks: parameter registration
//! plus tape-graph construction for GRU cells, feed-forward attention, and
//! affine layers. The forward-only twins live in `kernels`.

use crate::error::Result;

use super::graph::{Graph, NodeId};
use super::params::ParamStore;
use super::rng::RngStream;

/// Register one GRU cell's nine parameter tensors under `prefix`.
/// Weights are uniform on [-0.1, 0.1]; biases start at zero.
pub fn register_gru(store: &mut ParamStore, prefix: &str, in_dim: usize, hid_dim: usize, rng: &mut RngStream) -> Result<()> {
    for gate in ["wz", "wr", "wc"] {
        store.init_uniform(&format!("{prefix}.{gate}"), &[hid_dim, in_dim], rng)?;
    }
    for gate in ["uz", "ur", "uc"] {
        store.init_uniform(&format!("{prefix}.{gate}"), &[hid_dim, hid_dim], rng)?;
    }
    for gate in ["bz", "br", "bc"] {
        store.init_zeros(&format!("{prefix}.{gate}"), &[hid_dim])?;
    }
    Ok(())
}

/// One GRU cell's parameters bound into a graph.
#[derive(Clone, Copy)]
pub struct GruNodes {
    wz: NodeId,
    uz: NodeId,
    bz: NodeId,
    wr: NodeId,
    ur: NodeId,
    br: NodeId,
    wc: NodeId,
    uc: NodeId,
    bc: NodeId,
}

impl GruNodes {
    pub fn bind(g: &mut Graph, store: &ParamStore, prefix: &str) -> Result<GruNodes> {
        Ok(GruNodes {
            wz: g.param(store, &format!("{prefix}.wz"))?,
            uz: g.param(store, &format!("{prefix}.uz"))?,
            bz: g.param(store, &format!("{prefix}.bz"))?,
            wr: g.param(store, &format!("{prefix}.wr"))?,
            ur: g.param(store, &format!("{prefix}.ur"))?,
            br: g.param(store, &format!("{prefix}.br"))?,
            wc: g.param(store, &format!("{prefix}.wc"))?,
            uc: g.param(store, &format!("{prefix}.uc"))?,
            bc: g.param(store, &format!("{prefix}.bc"))?,
        })
    }

    /// z = σ(Wz·x + Uz·h + bz); r = σ(Wr·x + Ur·h + br);
    /// h̃ = tanh(Wc·x + Uc·(r⊙h) + bc); h' = (1−z)⊙h + z⊙h̃.
    pub fn step(&self, g: &mut Graph, x: NodeId, h: NodeId) -> Result<NodeId> {
        let gate = |g: &mut Graph, w: NodeId, u: NodeId, b: NodeId, hin: NodeId| -> Result<NodeId> {
            let wx = g.matvec(w, x)?;
            let uh = g.matvec(u, hin)?;
            let s = g.add(wx, uh)?;
            g.add(s, b)
        };
        let z = {
            let pre = gate(g, self.wz, self.uz, self.bz, h)?;
            g.sigmoid(pre)?
        };
        let r = {
            let pre = gate(g, self.wr, self.ur, self.br, h)?;
            g.sigmoid(pre)?
        };
        let rh = g.mul(r, h)?;
        let c = {
            let pre = gate(g, self.wc, self.uc, self.bc, rh)?;
            g.tanh(pre)?
        };
        let keep = g.one_minus(z)?;
        let kept = g.mul(keep, h)?;
        let new = g.mul(z, c)?;
        g.add(kept, new)
    }
}

/// Register feed-forward attention parameters: W1 (att×enc), W2 (att×dec),
/// b and v (att).
pub fn register_attention(
    store: &mut ParamStore,
    prefix: &str,
    enc_dim: usize,
    dec_dim: usize,
    att_dim: usize,
    rng: &mut RngStream,
) -> Result<()> {
    store.init_uniform(&format!("{prefix}.w1"), &[att_dim, enc_dim], rng)?;
    store.init_uniform(&format!("{prefix}.w2"), &[att_dim, dec_dim], rng)?;
    store.init_zeros(&format!("{prefix}.b"), &[att_dim])?;
    store.init_uniform(&format!("{prefix}.v"), &[att_dim], rng)?;
    Ok(())
}

#[derive(Clone, Copy)]
pub struct AttentionNodes {
    w1: NodeId,
    w2: NodeId,
    b: NodeId,
    v: NodeId,
}

impl AttentionNodes {
    pub fn bind(g: &mut Graph, store: &ParamStore, prefix: &str) -> Result<AttentionNodes> {
        Ok(AttentionNodes {
            w1: g.param(store, &format!("{prefix}.w1"))?,
            w2: g.param(store, &format!("{prefix}.w2"))?,
            b: g.param(store, &format!("{prefix}.b"))?,
            v: g.param(store, &format!("{prefix}.v"))?,
        })
    }

    /// W1·enc_j for each encoder state; independent of the decoder state, so
    /// built once per example.
    pub fn project_encoder(&self, g: &mut Graph, enc_states: &[NodeId]) -> Result<Vec<NodeId>> {
        enc_states.iter().map(|&e| g.matvec(self.w1, e)).collect()
    }

    /// score_j = vᵀ tanh(W1·enc_j + W2·dec + b); weights = softmax(scores);
    /// context = Σ weights_j · enc_j. Returns (context, weights).
    pub fn step(
        &self,
        g: &mut Graph,
        enc_proj: &[NodeId],
        enc_states: &[NodeId],
        dec: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let w2d = g.matvec(self.w2, dec)?;
        let query = g.add(w2d, self.b)?;
        let mut scores = Vec::with_capacity(enc_proj.len());
        for &p in enc_proj {
            let pre = g.add(p, query)?;
            let hidden = g.tanh(pre)?;
            scores.push(g.dot(self.v, hidden)?);
        }
        let stacked = g.stack_scalars(&scores)?;
        let weights = g.softmax(stacked)?;
        let context = g.weighted_sum(weights, enc_states)?;
        Ok((context, weights))
    }
}

/// Register an affine layer y = W·x + b.
pub fn register_affine(
    store: &mut ParamStore,
    prefix: &str,
    in_dim: usize,
    out_dim: usize,
    rng: &mut RngStream,
) -> Result<()> {
    store.init_uniform(&format!("{prefix}.w"), &[out_dim, in_dim], rng)?;
    store.init_zeros(&format!("{prefix}.b"), &[out_dim])?;
    Ok(())
}

#[derive(Clone, Copy)]
pub struct AffineNodes {
    w: NodeId,
    b: NodeId,
}

impl AffineNodes {
    pub fn bind(g: &mut Graph, store: &ParamStore, prefix: &str) -> Result<AffineNodes> {
        Ok(AffineNodes {
            w: g.param(store, &format!("{prefix}.w"))?,
            b: g.param(store, &format!("{prefix}.b"))?,
        })
    }

    pub fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let wx = g.matvec(self.w, x)?;
        g.add(wx, self.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::kernels::{self, AttentionWeights, GruWeights};
    use crate::nn::tensor::Tensor;

    #[test]
    fn graph_gru_agrees_with_kernel_gru() {
        let mut rng = RngStream::new(21, 0);
        let mut store = ParamStore::new();
        register_gru(&mut store, "gru", 3, 4, &mut rng).unwrap();
        let x = vec![0.3, -0.7, 1.1];
        let h = vec![0.2, 0.0, -0.5, 0.9];

        let kw = GruWeights::from_store(&store, "gru").unwrap();
        let kernel_out = kernels::gru_cell(&kw, &x, &h).unwrap();

        let mut g = Graph::new();
        let cell = GruNodes::bind(&mut g, &store, "gru").unwrap();
        let xn = g.leaf(Tensor::vector(x)).unwrap();
        let hn = g.leaf(Tensor::vector(h)).unwrap();
        let out = cell.step(&mut g, xn, hn).unwrap();
        for (a, b) in g.value(out).values().iter().zip(&kernel_out) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn graph_attention_agrees_with_kernel_attention() {
        let mut rng = RngStream::new(22, 0);
        let mut store = ParamStore::new();
        register_attention(&mut store, "att", 4, 3, 5, &mut rng).unwrap();
        let enc: Vec<Vec<f64>> = vec![
            vec![0.1, -0.2, 0.3, 0.4],
            vec![1.0, 0.0, -1.0, 0.5],
        ];
        let dec = vec![0.6, -0.6, 0.2];

        let kw = AttentionWeights::from_store(&store, "att").unwrap();
        let proj: Vec<Vec<f64>> = enc.iter().map(|e| kernels::matvec(kw.w1, e)).collect();
        let (kc, kwts) = kernels::attention(&kw, &proj, &enc, &dec).unwrap();

        let mut g = Graph::new();
        let att = AttentionNodes::bind(&mut g, &store, "att").unwrap();
        let enc_nodes: Vec<NodeId> = enc
            .iter()
            .map(|e| g.leaf(Tensor::vector(e.clone())).unwrap())
            .collect();
        let proj_nodes = att.project_encoder(&mut g, &enc_nodes).unwrap();
        let dn = g.leaf(Tensor::vector(dec)).unwrap();
        let (context, weights) = att.step(&mut g, &proj_nodes, &enc_nodes, dn).unwrap();
        for (a, b) in g.value(context).values().iter().zip(&kc) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in g.value(weights).values().iter().zip(&kwts) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gru_gradients_pass_finite_difference_check() {
        // Single GRU step + cross-entropy at 8 dims.
        let mut rng = RngStream::new(23, 0);
        let mut store = ParamStore::new();
        register_gru(&mut store, "gru", 8, 8, &mut rng).unwrap();
        register_affine(&mut store, "out", 8, 5, &mut rng).unwrap();
        let x: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let h: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();

        let eval = |store: &ParamStore| -> crate::error::Result<(f64, Vec<(String, Tensor)>)> {
            let mut g = Graph::new();
            let cell = GruNodes::bind(&mut g, store, "gru")?;
            let out = AffineNodes::bind(&mut g, store, "out")?;
            let xn = g.leaf(Tensor::vector(x.clone()))?;
            let hn = g.leaf(Tensor::vector(h.clone()))?;
            let h2 = cell.step(&mut g, xn, hn)?;
            let logits = out.apply(&mut g, h2)?;
            let loss = g.cross_entropy(logits, 3)?;
            g.backward(loss)?;
            let mut store2 = ParamStore::new();
            for (name, t) in store.iter() {
                store2.add(name, Tensor::zeros(t.shape())).unwrap();
            }
            g.flush_grads(&mut store2)?;
            let grads = store2
                .names()
                .to_vec()
                .iter()
                .map(|n| (n.clone(), store2.grad(n).unwrap().clone()))
                .collect();
            Ok((g.value(loss).item(), grads))
        };

        let mut check_rng = RngStream::new(24, 0);
        let report =
            crate::nn::gradcheck::grad_check(&mut store, eval, 1e-5, 4, &mut check_rng).unwrap();
        assert!(report.max_rel_err < 1e-5, "rel err {}", report.max_rel_err);
    }
}

//! Attention mechanisms: uniform (mean aggregation), parameter-free
//! Laplace attention over raw coordinates, scaled dot-product, and
//! multi-head dot-product with learned projections.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::init_weight;
use crate::autodiff::{NodeId, ParamStore, TensorValue};
use crate::error::{Error, Result};

/// Smoothing added under the square root of the L1 distance so the
/// Laplace weights stay differentiable at coincident coordinates.
const L1_SMOOTHING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttentionKind {
    Uniform,
    Laplace { scale: f64 },
    DotProduct,
    MultiHead { heads: usize },
}

impl AttentionKind {
    pub fn needs_params(&self) -> bool {
        matches!(self, AttentionKind::MultiHead { .. })
    }

    pub fn validate(&self, d_model: usize) -> Result<()> {
        match self {
            AttentionKind::Laplace { scale } if *scale <= 0.0 => {
                Err(Error::config("laplace attention scale must be positive"))
            }
            AttentionKind::MultiHead { heads } => {
                if *heads == 0 || d_model % heads != 0 {
                    Err(Error::config(format!(
                        "multihead: head count {heads} must divide model dim {d_model}"
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Widening applied to the query/key projections at init. With plain
/// fan-in scaling the attention logits start at O(1/sqrt(d)), the softmax
/// is indistinguishable from uniform, and almost no gradient reaches the
/// projections; the gain gives the logits O(1) spread so attention can
/// actually train.
const QK_INIT_GAIN: f64 = 6.0;

/// Q/K/V/output projection matrices, all `d_model x d_model`. The key
/// projection starts as a copy of the query projection, so the initial
/// logits form a Gram matrix and attention begins as a soft
/// nearest-neighbor in representation space instead of noise.
pub fn multihead_init(store: &mut ParamStore, prefix: &str, d_model: usize, rng: &mut impl Rng) -> Result<()> {
    for p in ["wq", "wk", "wv", "wo"] {
        init_weight(store, &format!("{prefix}.{p}"), d_model, d_model, rng)?;
    }
    let wq = {
        let w = store.get_mut(&format!("{prefix}.wq"))?;
        for v in w.data_mut() {
            *v *= QK_INIT_GAIN;
        }
        w.clone()
    };
    *store.get_mut(&format!("{prefix}.wk"))? = wq;
    Ok(())
}

/// Softmax weights over keys for a single (unprojected) head.
/// Returns an `m x n` row-stochastic matrix node.
pub fn attention_weights(
    g: &mut Graph,
    kind: &AttentionKind,
    queries: NodeId,
    keys: NodeId,
) -> Result<NodeId> {
    let (m, dq) = mat2(g, queries, "attend queries")?;
    let (n, dk) = mat2(g, keys, "attend keys")?;
    if n == 0 {
        return Err(Error::contract("attend: zero keys"));
    }
    if dq != dk {
        return Err(Error::shape(format!(
            "attend: query dim {dq} does not match key dim {dk}"
        )));
    }
    match kind {
        AttentionKind::Uniform => {
            Ok(g.input(TensorValue::filled(vec![m, n], 1.0 / n as f64)))
        }
        AttentionKind::Laplace { scale } => {
            let q3 = g.tape.reshape(queries, vec![m, 1, dq])?;
            let k3 = g.tape.reshape(keys, vec![1, n, dk])?;
            let diff = g.tape.sub(q3, k3)?;
            let sq = g.tape.square(diff)?;
            let eps = g.tape.constant_scalar(L1_SMOOTHING);
            let sq_eps = g.tape.add(sq, eps)?;
            let absd = g.tape.sqrt(sq_eps)?;
            let l1 = g.tape.sum_axis(absd, 2)?;
            // normalized by sqrt(dim) so sharpness is dimension-free,
            // mirroring scaled dot-product
            let neg_scale = g.tape.constant_scalar(-scale / (dk as f64).sqrt());
            let logits = g.tape.mul(l1, neg_scale)?;
            g.tape.softmax(logits, 1)
        }
        AttentionKind::DotProduct => {
            let kt = g.tape.transpose(keys)?;
            let scores = g.tape.matmul(queries, kt)?;
            let inv_sqrt = g.tape.constant_scalar(1.0 / (dk as f64).sqrt());
            let scaled = g.tape.mul(scores, inv_sqrt)?;
            g.tape.softmax(scaled, 1)
        }
        AttentionKind::MultiHead { .. } => Err(Error::contract(
            "attention_weights: multihead weights are per projected head; use attend",
        )),
    }
}

/// Cross-attention: `queries` attend over `keys` to aggregate `values`.
/// Multi-head requires projection parameters under `prefix`.
pub fn attend(
    g: &mut Graph,
    store: &ParamStore,
    kind: &AttentionKind,
    prefix: Option<&str>,
    queries: NodeId,
    keys: NodeId,
    values: NodeId,
) -> Result<NodeId> {
    let (n, _) = mat2(g, keys, "attend keys")?;
    let (nv, dv) = mat2(g, values, "attend values")?;
    if n != nv {
        return Err(Error::shape(format!(
            "attend: {n} keys vs {nv} values"
        )));
    }
    if n == 0 {
        return Err(Error::contract("attend: zero keys"));
    }
    match kind {
        AttentionKind::Uniform => {
            let (m, _) = mat2(g, queries, "attend queries")?;
            let mean = g.tape.mean_axis(values, 0)?;
            let row = g.tape.reshape(mean, vec![1, dv])?;
            g.tape.broadcast(row, vec![m, dv])
        }
        AttentionKind::Laplace { .. } | AttentionKind::DotProduct => {
            let w = attention_weights(g, kind, queries, keys)?;
            g.tape.matmul(w, values)
        }
        AttentionKind::MultiHead { heads } => {
            let prefix = prefix.ok_or_else(|| {
                Error::contract("attend: multihead needs projection parameters")
            })?;
            let (_, dq) = mat2(g, queries, "attend queries")?;
            kind.validate(dq)?;
            if dv != dq {
                return Err(Error::shape(format!(
                    "multihead: value dim {dv} must equal model dim {dq}"
                )));
            }
            let wq = g.param(store, &format!("{prefix}.wq"))?;
            let wk = g.param(store, &format!("{prefix}.wk"))?;
            let wv = g.param(store, &format!("{prefix}.wv"))?;
            let wo = g.param(store, &format!("{prefix}.wo"))?;
            let qp = g.tape.matmul(queries, wq)?;
            let kp = g.tape.matmul(keys, wk)?;
            let vp = g.tape.matmul(values, wv)?;
            let head_dim = dq / heads;
            let mut head_outs = Vec::with_capacity(*heads);
            for h in 0..*heads {
                let lo = h * head_dim;
                let hi = lo + head_dim;
                let qh = g.tape.slice(qp, 1, lo, hi)?;
                let kh = g.tape.slice(kp, 1, lo, hi)?;
                let vh = g.tape.slice(vp, 1, lo, hi)?;
                let w = attention_weights(g, &AttentionKind::DotProduct, qh, kh)?;
                head_outs.push(g.tape.matmul(w, vh)?);
            }
            let concat = g.tape.concat(&head_outs, 1)?;
            g.tape.matmul(concat, wo)
        }
    }
}

/// Self-attention: queries, keys, and values are all `reps`.
pub fn self_attend(
    g: &mut Graph,
    store: &ParamStore,
    kind: &AttentionKind,
    prefix: Option<&str>,
    reps: NodeId,
) -> Result<NodeId> {
    attend(g, store, kind, prefix, reps, reps, reps)
}

fn mat2(g: &Graph, id: NodeId, what: &str) -> Result<(usize, usize)> {
    let d = g.value(id).shape().dims();
    if d.len() != 2 {
        return Err(Error::shape(format!("{what}: expected rank-2, got {:?}", d)));
    }
    Ok((d[0], d[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mat(g: &mut Graph, r: usize, c: usize, data: Vec<f64>) -> NodeId {
        g.input(TensorValue::matrix(r, c, data).unwrap())
    }

    #[test]
    fn uniform_outputs_mean_of_values() {
        let store = ParamStore::new();
        let mut g = Graph::new();
        let q = mat(&mut g, 3, 1, vec![0.0, 5.0, -2.0]);
        let k = mat(&mut g, 2, 1, vec![0.0, 1.0]);
        let v = mat(&mut g, 2, 1, vec![1.0, 3.0]);
        let out = attend(&mut g, &store, &AttentionKind::Uniform, None, q, k, v).unwrap();
        assert_eq!(g.value(out).data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn dotproduct_single_key_returns_value() {
        let store = ParamStore::new();
        let mut g = Graph::new();
        let q = mat(&mut g, 2, 2, vec![0.3, -0.1, 4.0, 2.0]);
        let k = mat(&mut g, 1, 2, vec![1.0, 1.0]);
        let v = mat(&mut g, 1, 3, vec![7.0, -2.0, 0.5]);
        let out = attend(&mut g, &store, &AttentionKind::DotProduct, None, q, k, v).unwrap();
        assert_eq!(g.value(out).data(), &[7.0, -2.0, 0.5, 7.0, -2.0, 0.5]);
    }

    #[test]
    fn laplace_hand_computed_weights() {
        // scale 1, keys {0,1}, query 0 -> softmax([0,-1]) = [0.7311, 0.2689]
        let store = ParamStore::new();
        let mut g = Graph::new();
        let q = mat(&mut g, 1, 1, vec![0.0]);
        let k = mat(&mut g, 2, 1, vec![0.0, 1.0]);
        let v = mat(&mut g, 2, 1, vec![1.0, 0.0]);
        let kind = AttentionKind::Laplace { scale: 1.0 };
        let w = attention_weights(&mut g, &kind, q, k).unwrap();
        let wd = g.value(w).data().to_vec();
        assert!((wd[0] - 0.7311).abs() < 1e-4);
        assert!((wd[1] - 0.2689).abs() < 1e-4);
        let out = attend(&mut g, &store, &kind, None, q, k, v).unwrap();
        assert!((g.value(out).data()[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn weights_are_stochastic() {
        let mut g = Graph::new();
        let q = mat(&mut g, 3, 2, vec![0.1, 0.2, -1.0, 0.4, 2.0, -0.5]);
        let k = mat(&mut g, 4, 2, vec![0.0, 0.0, 1.0, -1.0, 0.5, 0.5, -2.0, 0.3]);
        for kind in [
            AttentionKind::Uniform,
            AttentionKind::Laplace { scale: 1.0 },
            AttentionKind::DotProduct,
        ] {
            let w = attention_weights(&mut g, &kind, q, k).unwrap();
            let wd = g.value(w).data();
            assert!(wd.iter().all(|&x| x >= 0.0));
            for row in wd.chunks(4) {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "{kind:?} row sum {s}");
            }
        }
    }

    #[test]
    fn self_attend_single_row_dotproduct_is_identity() {
        let store = ParamStore::new();
        let mut g = Graph::new();
        let reps = mat(&mut g, 1, 3, vec![0.4, -1.0, 2.0]);
        let out = self_attend(&mut g, &store, &AttentionKind::DotProduct, None, reps).unwrap();
        assert_eq!(g.value(out).data(), &[0.4, -1.0, 2.0]);
    }

    #[test]
    fn self_attend_uniform_gives_mean_row() {
        let store = ParamStore::new();
        let mut g = Graph::new();
        let reps = mat(&mut g, 2, 2, vec![1.0, 3.0, 3.0, 5.0]);
        let out = self_attend(&mut g, &store, &AttentionKind::Uniform, None, reps).unwrap();
        assert_eq!(g.value(out).data(), &[2.0, 4.0, 2.0, 4.0]);
    }

    #[test]
    fn multihead_key_value_permutation_invariance() {
        let heads = 2;
        let d = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        multihead_init(&mut store, "attn", d, &mut rng).unwrap();
        let kind = AttentionKind::MultiHead { heads };
        use rand::Rng;
        let kv: Vec<f64> = (0..3 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vv: Vec<f64> = (0..3 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let qv: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let run = |order: [usize; 3]| {
            let mut g = Graph::new();
            let perm = |src: &[f64]| -> Vec<f64> {
                order.iter().flat_map(|&i| src[i * d..(i + 1) * d].to_vec()).collect()
            };
            let q = g.input(TensorValue::matrix(2, d, qv.clone()).unwrap());
            let k = g.input(TensorValue::matrix(3, d, perm(&kv)).unwrap());
            let v = g.input(TensorValue::matrix(3, d, perm(&vv)).unwrap());
            let out = attend(&mut g, &store, &kind, Some("attn"), q, k, v).unwrap();
            g.value(out).data().to_vec()
        };
        let a = run([0, 1, 2]);
        let b = run([2, 0, 1]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_keys_is_contract_error() {
        let store = ParamStore::new();
        let mut g = Graph::new();
        let q = mat(&mut g, 1, 1, vec![0.0]);
        let k = g.input(TensorValue::new(vec![0, 1], vec![]).unwrap());
        let v = g.input(TensorValue::new(vec![0, 1], vec![]).unwrap());
        assert!(attend(&mut g, &store, &AttentionKind::DotProduct, None, q, k, v).is_err());
    }
}

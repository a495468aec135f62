//! Building blocks of the network and their hand-derived adjoints.

use super::params::{pair_index, Dense};
use crate::error::{Error, Result};
use crate::numkit::{logistic, softplus_scalar, Matrix};

/// Node states: row `n` always belongs to input feature `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphState {
    pub node_features: Matrix,
}

#[derive(Clone, Debug)]
pub(crate) struct DenseCache {
    input: Matrix,
    pre: Matrix,
}

/// Forward through a chain of affine layers with ReLU on every hidden
/// layer; `relu_last` decides the final one.
pub(crate) fn dense_chain_forward(
    layers: &[Dense],
    input: Matrix,
    relu_last: bool,
) -> Result<(Matrix, Vec<DenseCache>)> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut u = input;
    for (i, layer) in layers.iter().enumerate() {
        let pre = layer.weight.matmul(&u)?.add(&layer.bias)?;
        let out = if relu_last || i + 1 < layers.len() {
            relu(&pre)
        } else {
            pre.clone()
        };
        caches.push(DenseCache { input: u, pre });
        u = out;
    }
    Ok((u, caches))
}

/// Reverse of [`dense_chain_forward`]: accumulates into `grads` and
/// returns the gradient with respect to the chain input.
pub(crate) fn dense_chain_backward(
    layers: &[Dense],
    caches: &[DenseCache],
    mut d_out: Matrix,
    relu_last: bool,
    grads: &mut [Dense],
) -> Result<Matrix> {
    let n = layers.len();
    for i in (0..n).rev() {
        let cache = &caches[i];
        let d_pre = if relu_last || i + 1 < n {
            relu_mask(&d_out, &cache.pre)
        } else {
            d_out
        };
        grads[i].weight.add_assign(&d_pre.matmul_nt(&cache.input)?)?;
        grads[i].bias.add_assign(&d_pre)?;
        d_out = layers[i].weight.matmul_tn(&d_pre)?;
    }
    Ok(d_out)
}

fn relu(m: &Matrix) -> Matrix {
    crate::numkit::relu(m)
}

fn relu_mask(grad: &Matrix, pre: &Matrix) -> Matrix {
    let mut g = grad.clone();
    for (v, p) in g.data_mut().iter_mut().zip(pre.data()) {
        if *p <= 0.0 {
            *v = 0.0;
        }
    }
    g
}

/// Symmetrically normalized self-looped adjacency, with what the
/// backward pass needs.
#[derive(Clone, Debug)]
pub struct Adjacency {
    pub normalized: Matrix,
    /// `Ã = A + I` with `A_ij = softplus(raw_{ij})`.
    looped: Matrix,
    inv_sqrt_degree: Vec<f64>,
    edge_raw: Vec<f64>,
}

impl Adjacency {
    pub fn build(edge_raw: &[f64], n_nodes: usize) -> Result<Self> {
        let expected = n_nodes * n_nodes.saturating_sub(1) / 2;
        if edge_raw.len() != expected {
            return Err(Error::Shape {
                op: "build_normalized_adjacency",
                left: (expected, 1),
                right: (edge_raw.len(), 1),
            });
        }
        let d = n_nodes;
        let mut looped = Matrix::identity(d);
        for i in 0..d {
            for j in i + 1..d {
                let w = softplus_scalar(edge_raw[pair_index(i, j, d)]);
                looped.set(i, j, w);
                looped.set(j, i, w);
            }
        }
        let inv_sqrt_degree: Vec<f64> = (0..d)
            .map(|i| 1.0 / looped.row(i).iter().sum::<f64>().sqrt())
            .collect();
        let s = &inv_sqrt_degree;
        // evaluate each unordered pair once so the result is exactly symmetric
        let normalized = Matrix::from_fn(d, d, |i, j| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            s[a] * looped.get(a, b) * s[b]
        });
        Ok(Self {
            normalized,
            looped,
            inv_sqrt_degree,
            edge_raw: edge_raw.to_vec(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.normalized.rows()
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.inv_sqrt_degree.iter().map(|s| 1.0 / (s * s)).collect()
    }

    /// Gradient with respect to the raw edge weights given
    /// `grad = ∂L/∂(D̃^{-1/2} Ã D̃^{-1/2})`, routing through both the
    /// degree normalization and the softplus.
    pub fn backward(&self, grad: &Matrix) -> Vec<f64> {
        let d = self.n_nodes();
        let s = &self.inv_sqrt_degree;
        let a = &self.looped;
        // ∂L/∂deg_i through s_i = deg_i^{-1/2}
        let d_deg: Vec<f64> = (0..d)
            .map(|i| {
                let ds: f64 = (0..d)
                    .map(|j| (grad.get(i, j) + grad.get(j, i)) * a.get(i, j) * s[j])
                    .sum();
                -0.5 * ds * s[i] * s[i] * s[i]
            })
            .collect();
        let d_looped = |i: usize, j: usize| grad.get(i, j) * s[i] * s[j] + d_deg[i];
        let mut out = vec![0.0; self.edge_raw.len()];
        for i in 0..d {
            for j in i + 1..d {
                let k = pair_index(i, j, d);
                out[k] = (d_looped(i, j) + d_looped(j, i)) * logistic(self.edge_raw[k]);
            }
        }
        out
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` for a fully connected graph whose pair
/// weights are `softplus(edge_raw)`.
pub fn build_normalized_adjacency(edge_raw: &[f64], n_nodes: usize) -> Result<Matrix> {
    Adjacency::build(edge_raw, n_nodes).map(|a| a.normalized)
}

#[derive(Clone, Debug)]
pub(crate) struct GcnCache {
    input: Matrix,
    /// `Â·H`
    aggregated: Matrix,
    pre: Matrix,
    relu: bool,
}

pub(crate) fn gcn_forward(h: &Matrix, a_norm: &Matrix, w: &Matrix, activation: bool) -> Result<(Matrix, GcnCache)> {
    let aggregated = a_norm.matmul(h)?;
    let pre = aggregated.matmul(w)?;
    let out = if activation { relu(&pre) } else { pre.clone() };
    Ok((
        out,
        GcnCache {
            input: h.clone(),
            aggregated,
            pre,
            relu: activation,
        },
    ))
}

/// Accumulates `∂L/∂W` and `∂L/∂Â`; returns `∂L/∂H`.
pub(crate) fn gcn_backward(
    cache: &GcnCache,
    a_norm: &Matrix,
    w: &Matrix,
    d_out: Matrix,
    d_w: &mut Matrix,
    d_a: &mut Matrix,
) -> Result<Matrix> {
    let d_pre = if cache.relu { relu_mask(&d_out, &cache.pre) } else { d_out };
    d_w.add_assign(&cache.aggregated.matmul_tn(&d_pre)?)?;
    let m = d_pre.matmul_nt(w)?;
    d_a.add_assign(&m.matmul_nt(&cache.input)?)?;
    a_norm.matmul_tn(&m)
}

/// `σ(Â · H · W)`, σ = ReLU when `activation` is set.
pub fn gcn_layer(h: &GraphState, a_norm: &Matrix, w: &Matrix, activation: bool) -> Result<GraphState> {
    gcn_forward(&h.node_features, a_norm, w, activation).map(|(node_features, _)| GraphState { node_features })
}

//! Full forward pass, composite loss and reverse pass.
//!
//! Pipeline for one standardized input `x`:
//!
//! ```text
//! z   = encoder(x)                       ReLU on every layer
//! x̂   = decoder(z)                       ReLU on hidden layers, linear output
//! H⁰  = reshape(W_p z + b_p)             d × 1
//! Hˢ  = S shared graph convolutions      ReLU
//! O_t = head_t(Hˢ)                       B graph convolutions (ReLU) + linear read-out
//! ŷ_t = mean over the d rows of O_t
//! ```
//!
//! The loss is `(1/N) Σ ‖ŷ − y‖² + α ‖x̂ − x‖²`.

use rayon::prelude::*;

use super::layers::{dense_chain_backward, dense_chain_forward, gcn_backward, gcn_forward, Adjacency, DenseCache, GcnCache, GraphState};
use super::params::{GradientBundle, ModelParams};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// One standardized training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Batch-mean loss split into its two terms; `total = regression + α·reconstruction`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub regression: f64,
    pub reconstruction: f64,
}

/// Per-layer encoder activations kept for the reverse pass.
pub struct EncoderCache(Vec<DenseCache>);

impl EncoderCache {
    pub fn n_layers(&self) -> usize {
        self.0.len()
    }
}

#[derive(Clone, Debug)]
struct HeadCache {
    gcn: Vec<GcnCache>,
    readout_input: Matrix,
}

/// Everything one sample's reverse pass needs.
pub struct SampleCache {
    encoder: Vec<DenseCache>,
    z: Matrix,
    decoder: Vec<DenseCache>,
    trunk: Vec<GcnCache>,
    heads: Vec<HeadCache>,
    x: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
}

/// Caches for a whole batch, tied to the parameters that produced them.
pub struct BatchCache {
    adjacency: Adjacency,
    samples: Vec<SampleCache>,
    fingerprint: u64,
    pub loss: LossBreakdown,
}

pub struct Forward {
    pub y_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub cache: SampleCache,
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Shape {
            op: what,
            left: (expected, 1),
            right: (got, 1),
        });
    }
    Ok(())
}

pub fn encoder_forward(x: &[f64], params: &ModelParams) -> Result<(Vec<f64>, EncoderCache)> {
    let (z, cache) = dense_chain_forward(&params.encoder, Matrix::column(x), true)?;
    Ok((z.into_data(), EncoderCache(cache)))
}

pub fn decoder_forward(z: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    let (x_hat, _) = dense_chain_forward(&params.decoder, Matrix::column(z), false)?;
    Ok(x_hat.into_data())
}

fn project(z: &Matrix, params: &ModelParams) -> Result<Matrix> {
    params.projection.weight.matmul(z)?.add(&params.projection.bias)
}

/// `reshape(W_p z + b_p)`: one scalar channel per feature node.
pub fn project_to_nodes(z: &[f64], params: &ModelParams) -> Result<GraphState> {
    project(&Matrix::column(z), params).map(|node_features| GraphState { node_features })
}

fn forward_sample(x: &[f64], params: &ModelParams, config: &ModelConfig, adj: &Adjacency) -> Result<SampleCache> {
    check_len("model_forward", x.len(), config.n_features)?;
    let (z, encoder) = dense_chain_forward(&params.encoder, Matrix::column(x), true)?;
    let (x_hat, decoder) = dense_chain_forward(&params.decoder, z.clone(), false)?;
    let a = &adj.normalized;

    let mut h = project(&z, params)?;
    let mut trunk = Vec::with_capacity(params.shared.len());
    for w in &params.shared {
        let (out, cache) = gcn_forward(&h, a, w, true)?;
        trunk.push(cache);
        h = out;
    }

    let d = config.n_features as f64;
    let mut y_hat = Vec::with_capacity(config.n_targets);
    let mut heads = Vec::with_capacity(params.heads.len());
    for head in &params.heads {
        let mut hh = h.clone();
        let mut gcn = Vec::with_capacity(head.gcn.len());
        for w in &head.gcn {
            let (out, cache) = gcn_forward(&hh, a, w, true)?;
            gcn.push(cache);
            hh = out;
        }
        let readout = hh.matmul(&head.readout_weight)?;
        for k in 0..readout.cols() {
            let mean = (0..readout.rows()).map(|n| readout.get(n, k)).sum::<f64>() / d;
            y_hat.push(mean + head.readout_bias.get(0, k));
        }
        heads.push(HeadCache { gcn, readout_input: hh });
    }

    Ok(SampleCache {
        encoder,
        z,
        decoder,
        trunk,
        heads,
        x: x.to_vec(),
        y_hat,
        x_hat: x_hat.into_data(),
    })
}

/// Forward pass for a single standardized input.
pub fn model_forward(x: &[f64], params: &ModelParams, config: &ModelConfig) -> Result<Forward> {
    let adj = Adjacency::build(params.edge_raw.data(), config.n_features)?;
    let cache = forward_sample(x, params, config, &adj)?;
    Ok(Forward {
        y_hat: cache.y_hat.clone(),
        x_hat: cache.x_hat.clone(),
        cache,
    })
}

fn sample_loss(cache: &SampleCache, y: &[f64]) -> (f64, f64) {
    let reg = cache.y_hat.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    let rec = cache.x_hat.iter().zip(&cache.x).map(|(a, b)| (a - b).powi(2)).sum();
    (reg, rec)
}

fn check_batch(batch: &[Example], config: &ModelConfig) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::usage("composite loss needs a non-empty batch"));
    }
    for ex in batch {
        check_len("composite_loss (x)", ex.x.len(), config.n_features)?;
        check_len("composite_loss (y)", ex.y.len(), config.n_targets)?;
    }
    Ok(())
}

fn mean_loss(parts: impl Iterator<Item = (f64, f64)>, n: usize, alpha: f64) -> LossBreakdown {
    let (reg, rec) = parts.fold((0.0, 0.0), |(a, b), (r, c)| (a + r, b + c));
    let regression = reg / n as f64;
    let reconstruction = rec / n as f64;
    LossBreakdown {
        total: regression + alpha * reconstruction,
        regression,
        reconstruction,
    }
}

/// Forward over a batch, keeping caches for [`model_backward`].
pub fn batch_forward(batch: &[Example], params: &ModelParams, config: &ModelConfig) -> Result<BatchCache> {
    check_batch(batch, config)?;
    params.audit(config)?;
    let adjacency = Adjacency::build(params.edge_raw.data(), config.n_features)?;
    let samples = batch
        .iter()
        .map(|ex| forward_sample(&ex.x, params, config, &adjacency))
        .collect::<Result<Vec<_>>>()?;
    let loss = mean_loss(
        samples.iter().zip(batch).map(|(c, ex)| sample_loss(c, &ex.y)),
        batch.len(),
        config.alpha,
    );
    Ok(BatchCache {
        adjacency,
        samples,
        fingerprint: params.fingerprint(),
        loss,
    })
}

pub fn composite_loss_breakdown(batch: &[Example], params: &ModelParams, config: &ModelConfig) -> Result<LossBreakdown> {
    check_batch(batch, config)?;
    let adj = Adjacency::build(params.edge_raw.data(), config.n_features)?;
    let mut parts = Vec::with_capacity(batch.len());
    for ex in batch {
        let cache = forward_sample(&ex.x, params, config, &adj)?;
        parts.push(sample_loss(&cache, &ex.y));
    }
    Ok(mean_loss(parts.into_iter(), batch.len(), config.alpha))
}

pub fn composite_loss(batch: &[Example], params: &ModelParams, config: &ModelConfig) -> Result<f64> {
    composite_loss_breakdown(batch, params, config).map(|l| l.total)
}

/// Reverse pass of one sample. Accumulates parameter gradients into
/// `grads` and `∂L/∂Â` into `d_adj`.
fn backward_sample(
    cache: &SampleCache,
    y: &[f64],
    n_batch: usize,
    params: &ModelParams,
    config: &ModelConfig,
    adj: &Adjacency,
    grads: &mut ModelParams,
    d_adj: &mut Matrix,
) -> Result<()> {
    let scale = 2.0 / n_batch as f64;
    let d_nodes = config.n_features;
    let a = &adj.normalized;

    let d_yhat: Vec<f64> = cache.y_hat.iter().zip(y).map(|(p, t)| scale * (p - t)).collect();

    let mut d_trunk = Matrix::zeros(d_nodes, config.trunk_width());
    let outputs = config.head_outputs();
    for (t, (head, hc)) in params.heads.iter().zip(&cache.heads).enumerate() {
        let g = &d_yhat[t * outputs..(t + 1) * outputs];
        let gh = &mut grads.heads[t];
        // ŷ_k = mean_n (H W_out)_nk + b_k
        let d_o = Matrix::from_fn(d_nodes, outputs, |_, k| g[k] / d_nodes as f64);
        gh.readout_weight.add_assign(&hc.readout_input.matmul_tn(&d_o)?)?;
        for (b, gk) in gh.readout_bias.data_mut().iter_mut().zip(g) {
            *b += gk;
        }
        let mut d_h = d_o.matmul_nt(&head.readout_weight)?;
        for i in (0..head.gcn.len()).rev() {
            d_h = gcn_backward(&hc.gcn[i], a, &head.gcn[i], d_h, &mut gh.gcn[i], d_adj)?;
        }
        d_trunk.add_assign(&d_h)?;
    }

    let mut d_h = d_trunk;
    for i in (0..params.shared.len()).rev() {
        d_h = gcn_backward(&cache.trunk[i], a, &params.shared[i], d_h, &mut grads.shared[i], d_adj)?;
    }

    // projection H⁰ = W_p z + b_p
    grads.projection.weight.add_assign(&d_h.matmul_nt(&cache.z)?)?;
    grads.projection.bias.add_assign(&d_h)?;
    let mut d_z = params.projection.weight.matmul_tn(&d_h)?;

    let rec_scale = scale * config.alpha;
    let d_xhat = Matrix::from_fn(config.n_features, 1, |i, _| rec_scale * (cache.x_hat[i] - cache.x[i]));
    let d_z_dec = dense_chain_backward(&params.decoder, &cache.decoder, d_xhat, false, &mut grads.decoder)?;
    d_z.add_assign(&d_z_dec)?;
    dense_chain_backward(&params.encoder, &cache.encoder, d_z, true, &mut grads.encoder)?;
    Ok(())
}

fn finish(mut grads: ModelParams, d_adj: &Matrix, adj: &Adjacency) -> Result<GradientBundle> {
    let d_raw = adj.backward(d_adj);
    grads.edge_raw.data_mut().copy_from_slice(&d_raw);
    let bundle = GradientBundle(grads);
    if !bundle.is_finite() {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    Ok(bundle)
}

/// Exact gradient of the composite loss from the caches of a matching
/// [`batch_forward`] call.
pub fn model_backward(
    batch: &[Example],
    params: &ModelParams,
    config: &ModelConfig,
    cache: &BatchCache,
) -> Result<GradientBundle> {
    check_batch(batch, config)?;
    if cache.samples.len() != batch.len()
        || cache.fingerprint != params.fingerprint()
        || cache.samples.iter().zip(batch).any(|(c, ex)| c.x != ex.x)
    {
        return Err(Error::usage("cache does not belong to this batch and parameter set"));
    }
    let mut grads = ModelParams::zeros(config)?;
    let mut d_adj = Matrix::zeros(config.n_features, config.n_features);
    for (c, ex) in cache.samples.iter().zip(batch) {
        backward_sample(c, &ex.y, batch.len(), params, config, &cache.adjacency, &mut grads, &mut d_adj)?;
    }
    finish(grads, &d_adj, &cache.adjacency)
}

/// Samples per parallel work unit. Fixed, so the floating-point reduction
/// order (and hence every result bit) does not depend on the thread count.
const CHUNK: usize = 16;

/// Forward and reverse in one sweep without retaining caches; the
/// training loop uses this.
pub fn loss_and_gradient(
    batch: &[Example],
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(LossBreakdown, GradientBundle)> {
    check_batch(batch, config)?;
    let adj = Adjacency::build(params.edge_raw.data(), config.n_features)?;
    let n = batch.len();
    let partials = batch
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<_> {
            let mut grads = ModelParams::zeros(config)?;
            let mut d_adj = Matrix::zeros(config.n_features, config.n_features);
            let mut parts = (0.0, 0.0);
            for ex in chunk {
                let cache = forward_sample(&ex.x, params, config, &adj)?;
                let (r, c) = sample_loss(&cache, &ex.y);
                parts.0 += r;
                parts.1 += c;
                backward_sample(&cache, &ex.y, n, params, config, &adj, &mut grads, &mut d_adj)?;
            }
            Ok((parts, GradientBundle(grads), d_adj))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut iter = partials.into_iter();
    let (first_parts, mut grads, mut d_adj) = iter.next().expect("non-empty batch");
    let mut parts = vec![first_parts];
    for (p, g, a) in iter {
        parts.push(p);
        grads.add_assign(&g)?;
        d_adj.add_assign(&a)?;
    }
    let loss = mean_loss(parts.into_iter(), n, config.alpha);
    let grads = finish(grads.0, &d_adj, &adj)?;
    Ok((loss, grads))
}

/// Predictions for many standardized inputs (adjacency built once).
pub fn predict_batch(inputs: &[Vec<f64>], params: &ModelParams, config: &ModelConfig) -> Result<Vec<Vec<f64>>> {
    let adj = Adjacency::build(params.edge_raw.data(), config.n_features)?;
    inputs
        .par_iter()
        .map(|x| forward_sample(x, params, config, &adj).map(|c| c.y_hat))
        .collect()
}

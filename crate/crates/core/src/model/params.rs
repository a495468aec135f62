use super::ModelConfig;
use crate::error::{CheckpointError, Error, Result};
use crate::numkit::{Matrix, Rng};

/// `ln(e − 1)`: the raw edge value whose softplus is exactly 1.
pub const UNIT_EDGE_RAW: f64 = 0.541_324_854_612_918;

/// Affine layer `W·u + b` with `W` of shape `out × in` and `b` of `out × 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: Matrix::zeros(outputs, 1),
        }
    }
}

/// One prediction branch: graph-convolution weights followed by a
/// node-wise linear read-out (`readout_weight: in × outputs`,
/// `readout_bias: 1 × outputs`).
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub gcn: Vec<Matrix>,
    pub readout_weight: Matrix,
    pub readout_bias: Matrix,
}

/// Every trainable tensor of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
    pub projection: Dense,
    /// One raw weight per unordered node pair, in [`pair_index`] order
    /// (`edge_raw` is `|E| × 1`).
    pub edge_raw: Matrix,
    pub shared: Vec<Matrix>,
    pub heads: Vec<Head>,
}

/// Gradients of the composite loss, one tensor per [`ModelParams`] tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle(pub ModelParams);

/// Position of the unordered pair `{i, j}` (`i ≠ j`) among the
/// `d(d−1)/2` pairs enumerated as (0,1), (0,2), …, (0,d−1), (1,2), …
pub fn pair_index(i: usize, j: usize, d: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    debug_assert!(a != b && b < d);
    a * (2 * d - a - 1) / 2 + (b - a - 1)
}

pub fn layer_widths(config: &ModelConfig) -> (Vec<usize>, Vec<usize>) {
    let mut enc = vec![config.n_features];
    enc.extend(&config.encoder_widths);
    let dec: Vec<usize> = enc.iter().rev().copied().collect();
    (enc, dec)
}

impl ModelParams {
    /// All-zero parameters shaped for `config` (edge weights zero too).
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (enc, dec) = layer_widths(config);
        let dense_chain = |w: &[usize]| w.windows(2).map(|p| Dense::zeros(p[0], p[1])).collect();
        let mut shared = Vec::new();
        let mut width = 1;
        for &w in &config.shared_widths {
            shared.push(Matrix::zeros(width, w));
            width = w;
        }
        let heads = (0..config.n_heads())
            .map(|_| {
                let mut gcn = Vec::new();
                let mut w_in = width;
                for _ in 0..config.head_layers {
                    gcn.push(Matrix::zeros(w_in, config.head_width));
                    w_in = config.head_width;
                }
                Head {
                    gcn,
                    readout_weight: Matrix::zeros(w_in, config.head_outputs()),
                    readout_bias: Matrix::zeros(1, config.head_outputs()),
                }
            })
            .collect();
        Ok(Self {
            encoder: dense_chain(&enc),
            decoder: dense_chain(&dec),
            projection: Dense::zeros(config.latent_width(), config.n_features),
            edge_raw: Matrix::zeros(config.n_edges(), 1),
            shared,
            heads,
        })
    }

    /// Glorot-uniform weights, zero biases, unit effective edge weights.
    ///
    /// Weight tensors are filled in [`ModelParams::tensors`] order from a
    /// single stream of `rng`.
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        params.edge_raw = Matrix::filled(config.n_edges(), 1, UNIT_EDGE_RAW);
        for (name, tensor) in params.tensors_mut() {
            if name.ends_with("bias") || name == "edge_raw" {
                continue;
            }
            let (r, c) = tensor.shape();
            let bound = (6.0 / (r + c) as f64).sqrt();
            for v in tensor.data_mut() {
                *v = rng.uniform(-bound, bound);
            }
        }
        Ok(params)
    }

    /// `(name, tensor)` pairs in a fixed canonical order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}.weight"), &l.weight));
            out.push((format!("encoder.{i}.bias"), &l.bias));
        }
        for (i, l) in self.decoder.iter().enumerate() {
            out.push((format!("decoder.{i}.weight"), &l.weight));
            out.push((format!("decoder.{i}.bias"), &l.bias));
        }
        out.push(("projection.weight".into(), &self.projection.weight));
        out.push(("projection.bias".into(), &self.projection.bias));
        out.push(("edge_raw".into(), &self.edge_raw));
        for (i, w) in self.shared.iter().enumerate() {
            out.push((format!("shared.{i}.weight"), w));
        }
        for (t, h) in self.heads.iter().enumerate() {
            for (i, w) in h.gcn.iter().enumerate() {
                out.push((format!("heads.{t}.gcn.{i}.weight"), w));
            }
            out.push((format!("heads.{t}.readout.weight"), &h.readout_weight));
            out.push((format!("heads.{t}.readout.bias"), &h.readout_bias));
        }
        out
    }

    /// Mutable counterpart of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter_mut().enumerate() {
            out.push((format!("encoder.{i}.weight"), &mut l.weight));
            out.push((format!("encoder.{i}.bias"), &mut l.bias));
        }
        for (i, l) in self.decoder.iter_mut().enumerate() {
            out.push((format!("decoder.{i}.weight"), &mut l.weight));
            out.push((format!("decoder.{i}.bias"), &mut l.bias));
        }
        out.push(("projection.weight".into(), &mut self.projection.weight));
        out.push(("projection.bias".into(), &mut self.projection.bias));
        out.push(("edge_raw".into(), &mut self.edge_raw));
        for (i, w) in self.shared.iter_mut().enumerate() {
            out.push((format!("shared.{i}.weight"), w));
        }
        for (t, h) in self.heads.iter_mut().enumerate() {
            for (i, w) in h.gcn.iter_mut().enumerate() {
                out.push((format!("heads.{t}.gcn.{i}.weight"), w));
            }
            out.push((format!("heads.{t}.readout.weight"), &mut h.readout_weight));
            out.push((format!("heads.{t}.readout.bias"), &mut h.readout_bias));
        }
        out
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_scalars());
        for (_, t) in self.tensors() {
            flat.extend_from_slice(t.data());
        }
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_scalars() {
            return Err(Error::Shape {
                op: "set_flat",
                left: (self.n_scalars(), 1),
                right: (flat.len(), 1),
            });
        }
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Every tensor has exactly the shape `config` prescribes.
    pub fn audit(&self, config: &ModelConfig) -> Result<()> {
        let expected = Self::zeros(config)?;
        let want = expected.tensors();
        let have = self.tensors();
        if want.len() != have.len() {
            return Err(CheckpointError::ShapeAudit(format!(
                "expected {} tensors, found {}",
                want.len(),
                have.len()
            ))
            .into());
        }
        for ((wn, wt), (hn, ht)) in want.iter().zip(&have) {
            if wn != hn || wt.shape() != ht.shape() {
                return Err(CheckpointError::ShapeAudit(format!(
                    "{hn} has shape {:?}, expected {wn} with shape {:?}",
                    ht.shape(),
                    wt.shape()
                ))
                .into());
            }
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint over every parameter bit (FNV-1a).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, t) in self.tensors() {
            for v in t.data() {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

impl GradientBundle {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        ModelParams::zeros(config).map(GradientBundle)
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        self.0.tensors()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.to_flat()
    }

    pub fn add_assign(&mut self, other: &GradientBundle) -> Result<()> {
        for ((_, a), (_, b)) in self.0.tensors_mut().into_iter().zip(other.0.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }
}

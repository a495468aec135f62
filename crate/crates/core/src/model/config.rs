use serde::{Deserialize, Serialize};

use crate::data::Gas;
use crate::error::{Error, Result};

/// Architecture hyperparameters.
///
/// Decoder widths are not configurable: they are the mirror image of
/// `encoder_widths`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Input feature count (graph node count).
    pub n_features: usize,
    /// Number of predicted offsets.
    pub n_targets: usize,
    /// Encoder layer widths; the last entry is the latent width.
    pub encoder_widths: Vec<usize>,
    /// Output channels of each shared graph-convolution layer.
    pub shared_widths: Vec<usize>,
    /// Graph-convolution layers per head.
    pub head_layers: usize,
    pub head_width: usize,
    /// Weight of the reconstruction term.
    pub alpha: f64,
    pub gas: Gas,
    /// Ablation: one head stack whose read-out emits every target.
    pub single_head: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_features: 10,
            n_targets: 9,
            encoder_widths: vec![32, 16],
            shared_widths: vec![8, 8],
            head_layers: 2,
            head_width: 8,
            alpha: 0.5,
            gas: Gas::Co2,
            single_head: false,
        }
    }
}

impl ModelConfig {
    pub fn latent_width(&self) -> usize {
        *self.encoder_widths.last().expect("validated config")
    }

    /// Channel width entering the heads.
    pub fn trunk_width(&self) -> usize {
        self.shared_widths.last().copied().unwrap_or(1)
    }

    pub fn n_edges(&self) -> usize {
        self.n_features * self.n_features.saturating_sub(1) / 2
    }

    pub fn n_heads(&self) -> usize {
        if self.single_head {
            1
        } else {
            self.n_targets
        }
    }

    /// Read-out outputs per head.
    pub fn head_outputs(&self) -> usize {
        if self.single_head {
            self.n_targets
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_features == 0 || self.n_targets == 0 {
            return bad("n_features and n_targets must be >= 1".into());
        }
        if self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) {
            return bad(format!("encoder_widths must be non-empty and positive, got {:?}", self.encoder_widths));
        }
        if self.shared_widths.contains(&0) {
            return bad(format!("shared_widths must be positive, got {:?}", self.shared_widths));
        }
        if self.head_layers > 0 && self.head_width == 0 {
            return bad("head_width must be >= 1 when head_layers > 0".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        Ok(())
    }
}

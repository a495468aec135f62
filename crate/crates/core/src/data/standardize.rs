use serde::{Deserialize, Serialize};

use super::{Gas, SampleRecord, N_OFFSETS};
use crate::error::{Error, Result};

/// Per-column mean and population standard deviation.
///
/// A column whose spread is negligible relative to its magnitude is
/// flagged `constant`; it standardizes to zero and inverts to its mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
    pub constant: bool,
}

impl ColumnStats {
    pub fn fit(values: impl IntoIterator<Item = f64> + Clone) -> Self {
        let (n, sum) = values.clone().into_iter().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
        let mean = sum / n as f64;
        let var = values.into_iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        let constant = !(std > 1e-12 * mean.abs().max(1.0));
        Self {
            mean,
            std: if constant { 1.0 } else { std },
            constant,
        }
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        if self.constant {
            0.0
        } else {
            (v - self.mean) / self.std
        }
    }

    #[inline]
    pub fn invert(&self, z: f64) -> f64 {
        if self.constant {
            self.mean
        } else {
            z * self.std + self.mean
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub gas: Gas,
    pub features: Vec<ColumnStats>,
    pub targets: Vec<ColumnStats>,
}

/// Statistics from the training records only.
pub fn fit_standardizer(train: &[SampleRecord], gas: Gas) -> Result<Standardizer> {
    if train.is_empty() {
        return Err(Error::usage("cannot fit a standardizer on zero records"));
    }
    let features = (0..super::N_FEATURES)
        .map(|j| ColumnStats::fit(train.iter().map(move |r| r.features()[j])))
        .collect();
    let targets = (0..N_OFFSETS)
        .map(|k| ColumnStats::fit(train.iter().map(move |r| r.targets(gas)[k])))
        .collect();
    Ok(Standardizer { gas, features, targets })
}

impl Standardizer {
    pub fn apply_features(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.features).map(|(v, s)| s.apply(*v)).collect()
    }

    pub fn invert_features(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.features).map(|(v, s)| s.invert(*v)).collect()
    }

    pub fn apply_targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.targets).map(|(v, s)| s.apply(*v)).collect()
    }

    pub fn invert_targets(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.targets).map(|(v, s)| s.invert(*v)).collect()
    }

    pub fn constant_features(&self) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.constant.then_some(i))
            .collect()
    }
}

//! Closed-form pulse-response surrogate for process-model flux simulations.
//!
//! For an offset `δ` days after application:
//!
//! ```text
//! moist   = rain / (rain + 50)
//! CO₂(δ)  = bg_c · Q10^((temp − 10)/10) · moist + [δ ≥ 0] · a_c · N · moist · e^(−δ/τ_c)
//! N₂O(δ)  = bg_n + [δ ≥ 0] · a_n · N · moist · e^(−(pH − pH₀)²/2) · e^(−δ/τ_n)
//! ```
//!
//! Each value is then multiplied by `exp(σ·ε)`, `ε ~ N(0, 1)`, and clipped to
//! the published flux ranges.

use serde::{Deserialize, Serialize};

use super::{SampleRecord, CO2_MAX, N2O_MAX, N_FEATURES, N_OFFSETS, OFFSETS_DAYS};
use crate::error::{Error, Result};
use crate::numkit::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseCoefficients {
    pub co2_background: f64,
    pub q10: f64,
    pub co2_pulse: f64,
    pub co2_decay_days: f64,
    pub n2o_background: f64,
    pub n2o_pulse: f64,
    pub ph_optimum: f64,
    pub n2o_decay_days: f64,
}

impl Default for ResponseCoefficients {
    fn default() -> Self {
        Self {
            co2_background: 20.0,
            q10: 2.0,
            co2_pulse: 0.5,
            co2_decay_days: 6.0,
            n2o_background: 5.0,
            n2o_pulse: 30.0,
            ph_optimum: 6.5,
            n2o_decay_days: 4.0,
        }
    }
}

impl ResponseCoefficients {
    /// Noise-free, unclipped CO₂ and N₂O series for one feature vector.
    pub fn response(&self, f: &[f64; N_FEATURES]) -> ([f64; N_OFFSETS], [f64; N_OFFSETS]) {
        let (temp, rain, ph, n) = (f[0], f[1], f[3], f[8]);
        let moist = rain / (rain + 50.0);
        let respiration = self.co2_background * self.q10.powf((temp - 10.0) / 10.0) * moist;
        let ph_factor = (-(ph - self.ph_optimum).powi(2) / 2.0).exp();
        let mut co2 = [0.0; N_OFFSETS];
        let mut n2o = [0.0; N_OFFSETS];
        for (k, &day) in OFFSETS_DAYS.iter().enumerate() {
            let delta = day as f64;
            co2[k] = respiration;
            n2o[k] = self.n2o_background;
            if day >= 0 {
                co2[k] += self.co2_pulse * n * moist * (-delta / self.co2_decay_days).exp();
                n2o[k] += self.n2o_pulse * n * moist * ph_factor * (-delta / self.n2o_decay_days).exp();
            }
        }
        (co2, n2o)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// σ of the multiplicative log-normal noise.
    pub noise_sigma: f64,
    /// `(low, high)` per feature, in schema order.
    pub feature_ranges: [(f64, f64); N_FEATURES],
    pub response: ResponseCoefficients,
}

impl GeneratorConfig {
    pub fn new(n_samples: usize, seed: u64, noise_sigma: f64) -> Self {
        Self {
            n_samples,
            seed,
            noise_sigma,
            feature_ranges: [
                (0.0, 25.0),
                (10.0, 150.0),
                (1.0, 60.0),
                (5.0, 8.0),
                (50.0, 300.0),
                (10.0, 60.0),
                (60.0, 240.0),
                (30.0, 120.0),
                (0.0, 250.0),
                (150.0, 450.0),
            ],
            response: ResponseCoefficients::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::usage("generator needs n_samples >= 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::usage(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        for (i, (lo, hi)) in self.feature_ranges.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::usage(format!(
                    "feature range for {} is degenerate: [{lo}, {hi}]",
                    super::FEATURE_NAMES[i]
                )));
            }
        }
        Ok(())
    }
}

/// Generate `cfg.n_samples` records. Record `i` draws only from child
/// stream `i` of the seed, so any subset can be regenerated independently.
pub fn generate(cfg: &GeneratorConfig) -> Result<Vec<SampleRecord>> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let records = (0..cfg.n_samples)
        .map(|i| {
            let mut rng = root.split(i as u64);
            let mut features = [0.0; N_FEATURES];
            for (f, (lo, hi)) in features.iter_mut().zip(&cfg.feature_ranges) {
                *f = rng.uniform(*lo, *hi);
            }
            let (co2, n2o) = cfg.response.response(&features);
            let mut rec = SampleRecord::from_features(i as u64, features);
            for k in 0..N_OFFSETS {
                rec.co2_flux[k] = apply_noise(co2[k], cfg.noise_sigma, &mut rng).clamp(0.0, CO2_MAX);
            }
            for k in 0..N_OFFSETS {
                rec.n2o_flux[k] = apply_noise(n2o[k], cfg.noise_sigma, &mut rng).clamp(0.0, N2O_MAX);
            }
            rec
        })
        .collect();
    Ok(records)
}

fn apply_noise(value: f64, sigma: f64, rng: &mut Rng) -> f64 {
    // always draw, so the stream layout does not depend on sigma
    let eps = rng.normal();
    if sigma == 0.0 {
        value
    } else {
        value * (sigma * eps).exp()
    }
}

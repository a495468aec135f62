//! Adam, the minibatch training loop, and the gradient audit.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    batch_forward, composite_loss, composite_loss_breakdown, loss_and_gradient, model_backward, Example,
    GradientBundle, LossBreakdown, ModelConfig, ModelParams,
};
use crate::numkit::{finite_diff_grad, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Overrides the model's α when set.
    pub alpha: Option<f64>,
    /// Log every this many epochs to stderr; 0 disables.
    pub report_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            epochs: 200,
            seed: 0,
            alpha: None,
            report_interval: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("alpha must lie in [0, 1], got {a}"));
            }
        }
        Ok(())
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first: ModelParams,
    pub second: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        Ok(Self {
            first: ModelParams::zeros(config)?,
            second: ModelParams::zeros(config)?,
            step: 0,
        })
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut ModelParams, grads: &GradientBundle, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let p = params.tensors_mut();
    let g = grads.tensors();
    let m = state.first.tensors_mut();
    let v = state.second.tensors_mut();
    if p.len() != g.len() || p.len() != m.len() {
        return Err(Error::Shape {
            op: "adam_step",
            left: (p.len(), 1),
            right: (g.len(), 1),
        });
    }
    for (((( _, p), (_, g)), (_, m)), (_, v)) in p.into_iter().zip(g).zip(m).zip(v) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
        for (((p, g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted mean of the minibatch losses seen during the epoch.
    pub train: LossBreakdown,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub params: ModelParams,
    pub trace: Vec<EpochRecord>,
}

/// Effective model config under `train`'s α override.
pub fn effective_config(model: &ModelConfig, train: &TrainConfig) -> ModelConfig {
    let mut cfg = model.clone();
    if let Some(a) = train.alpha {
        cfg.alpha = a;
    }
    cfg
}

/// Train from a fresh initialization drawn from `train_config.seed`.
pub fn fit(
    train: &[Example],
    val: Option<&[Example]>,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<FitOutcome> {
    let cfg = effective_config(model_config, train_config);
    let mut rng = Rng::new(train_config.seed).split(0);
    let params = ModelParams::init(&cfg, &mut rng)?;
    fit_from(params, train, val, &cfg, train_config)
}

/// Train starting from `params`.
pub fn fit_from(
    mut params: ModelParams,
    train: &[Example],
    val: Option<&[Example]>,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<FitOutcome> {
    train_config.validate()?;
    let cfg = effective_config(model_config, train_config);
    cfg.validate()?;
    params.audit(&cfg)?;
    if train.is_empty() {
        return Err(Error::usage("cannot fit on an empty dataset"));
    }
    let mut state = AdamState::new(&cfg)?;
    let root = Rng::new(train_config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = Vec::with_capacity(train_config.epochs);
    let mut batch = Vec::with_capacity(train_config.batch_size);

    for epoch in 1..=train_config.epochs {
        order.sort_unstable();
        root.split(1 + epoch as u64).shuffle(&mut order);
        let mut sums = (0.0, 0.0, 0.0);
        for chunk in order.chunks(train_config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            let (loss, grads) = loss_and_gradient(&batch, &params, &cfg)?;
            if !loss.total.is_finite() {
                return Err(Error::Numerical(format!("non-finite training loss at epoch {epoch}")));
            }
            let w = batch.len() as f64;
            sums.0 += loss.total * w;
            sums.1 += loss.regression * w;
            sums.2 += loss.reconstruction * w;
            adam_step(&mut params, &grads, &mut state, train_config)?;
        }
        let n = train.len() as f64;
        let val_loss = match val {
            Some(v) if !v.is_empty() => Some(composite_loss(v, &params, &cfg)?),
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            train: LossBreakdown {
                total: sums.0 / n,
                regression: sums.1 / n,
                reconstruction: sums.2 / n,
            },
            val_loss,
        };
        if train_config.report_interval > 0 && epoch % train_config.report_interval == 0 {
            match record.val_loss {
                Some(v) => eprintln!("epoch {epoch:>5}  train {:.6}  val {v:.6}", record.train.total),
                None => eprintln!("epoch {epoch:>5}  train {:.6}", record.train.total),
            }
        }
        trace.push(record);
    }
    Ok(FitOutcome { params, trace })
}

/// Two-column `epoch  mean_loss` table.
pub fn write_loss_trace(trace: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "epoch\tmean_loss").map_err(io)?;
    for r in trace {
        writeln!(out, "{}\t{:?}", r.epoch, r.train.total).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.tensors.iter().all(|t| t.max_rel_error < tol)
    }
}

/// Random parameters for auditing: Glorot weights plus random biases and
/// raw edge weights, so no tensor sits at a symmetric starting point.
pub fn audit_params(config: &ModelConfig, rng: &mut Rng) -> Result<ModelParams> {
    let mut p = ModelParams::init(config, rng)?;
    for (name, t) in p.tensors_mut() {
        if name.ends_with("bias") || name == "edge_raw" {
            for v in t.data_mut() {
                *v = rng.uniform(-0.5, 0.5);
            }
        }
    }
    Ok(p)
}

/// Compare the analytic gradient with central differences on a random
/// model and batch derived from `seed`. Per-coordinate error is
/// `|a − f| / max(|a|, |f|, 1e-8)`; the report keeps each tensor's maximum.
pub fn gradcheck(config: &ModelConfig, seed: u64, n_samples: usize, step: f64) -> Result<GradcheckReport> {
    if n_samples == 0 {
        return Err(Error::usage("gradcheck needs at least one sample"));
    }
    config.validate()?;
    let root = Rng::new(seed);
    let params = audit_params(config, &mut root.split(0))?;
    let mut rng = root.split(1);
    let batch: Vec<Example> = (0..n_samples)
        .map(|_| Example {
            x: (0..config.n_features).map(|_| rng.normal()).collect(),
            y: (0..config.n_targets).map(|_| rng.normal()).collect(),
        })
        .collect();

    let cache = batch_forward(&batch, &params, config)?;
    let analytic = model_backward(&batch, &params, config, &cache)?;
    let mut probe = params.clone();
    let mut failure = None;
    let numeric = finite_diff_grad(
        |theta| {
            probe.set_flat(theta).expect("same length");
            match composite_loss_breakdown(&batch, &probe, config) {
                Ok(l) => l.total,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &params.to_flat(),
        step,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let numeric = numeric?;

    let mut offset = 0;
    let tensors = analytic
        .tensors()
        .into_iter()
        .map(|(name, t)| {
            let fd = &numeric[offset..offset + t.len()];
            offset += t.len();
            let mut check = TensorCheck {
                name,
                max_rel_error: 0.0,
                max_abs_analytic: 0.0,
                max_abs_numeric: 0.0,
            };
            for (a, f) in t.data().iter().zip(fd) {
                let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-8);
                check.max_rel_error = check.max_rel_error.max(rel);
                check.max_abs_analytic = check.max_abs_analytic.max(a.abs());
                check.max_abs_numeric = check.max_abs_numeric.max(f.abs());
            }
            check
        })
        .collect();
    Ok(GradcheckReport { tensors })
}

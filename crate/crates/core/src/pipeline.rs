//! Split → standardize → fit → evaluate, for one seed or many.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{fit_standardizer, split, Gas, SampleRecord, Splits, Standardizer};
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_json, write_text, EvalReport, MultiSeedSummary};
use crate::model::{checkpoint_save, Checkpoint, Example, ModelConfig};
use crate::training::{effective_config, fit, write_loss_trace, EpochRecord, TrainConfig};

/// Train / validation / test proportions.
pub const SPLIT_FRACTIONS: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// Contents of a run config file: `[model]` and `[train]` tables, both
/// optional, unknown keys rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }
}

pub fn examples(records: &[SampleRecord], standardizer: &Standardizer) -> Vec<Example> {
    records
        .iter()
        .map(|r| Example {
            x: standardizer.apply_features(&r.features()),
            y: standardizer.apply_targets(r.targets(standardizer.gas)),
        })
        .collect()
}

pub struct TrainedRun {
    pub checkpoint: Checkpoint,
    pub trace: Vec<EpochRecord>,
    pub splits: Splits<SampleRecord>,
}

impl TrainedRun {
    /// `model.ckpt.json` and `loss_trace.tsv` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint_save(&self.checkpoint, dir.join("model.ckpt.json"))?;
        write_loss_trace(&self.trace, dir.join("loss_trace.tsv"))
    }
}

/// Split `records` by `seed`, standardize on the training part and fit.
/// `seed` drives both the split and the training randomness.
pub fn train_run(
    records: &[SampleRecord],
    gas: Gas,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<TrainedRun> {
    let splits = split(records, seed, SPLIT_FRACTIONS)?;
    let standardizer = fit_standardizer(&splits.train, gas)?;
    let model_config = ModelConfig {
        gas,
        ..model_config.clone()
    };
    let train_config = TrainConfig {
        seed,
        ..train_config.clone()
    };
    let train = examples(&splits.train, &standardizer);
    let val = examples(&splits.val, &standardizer);
    let outcome = fit(&train, Some(&val), &model_config, &train_config)?;
    Ok(TrainedRun {
        checkpoint: Checkpoint {
            config: effective_config(&model_config, &train_config),
            standardizer,
            params: outcome.params,
        },
        trace: outcome.trace,
        splits,
    })
}

pub struct ExperimentOutcome {
    pub summary: MultiSeedSummary,
    pub reports: Vec<EvalReport>,
}

/// Repeat [`train_run`] for seeds `train_config.seed + i`, `i < n_seeds`,
/// evaluating each on its own test split. With `out_dir`, every seed gets
/// a `seed_<s>/` directory and the summary lands in `summary.json`.
pub fn run_experiment(
    records: &[SampleRecord],
    gas: Gas,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    n_seeds: usize,
    out_dir: Option<&Path>,
) -> Result<ExperimentOutcome> {
    if n_seeds == 0 {
        return Err(Error::usage("experiment needs at least one seed"));
    }
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| train_config.seed + i).collect();
    let mut reports = Vec::with_capacity(n_seeds);
    for &seed in &seeds {
        let run = train_run(records, gas, model_config, train_config, seed)?;
        let report = evaluate(&run.checkpoint, &run.splits.test, gas, "test")?.report;
        if let Some(dir) = out_dir {
            let run_dir = dir.join(format!("seed_{seed}"));
            run.write(&run_dir)?;
            write_json(&report, run_dir.join("report.json"))?;
        }
        reports.push(report);
    }
    let summary = MultiSeedSummary::from_reports(&seeds, &reports)?;
    if let Some(dir) = out_dir {
        write_json(&summary, dir.join("summary.json"))?;
        write_text(&dir.join("summary.txt"), &summary.table())?;
    }
    Ok(ExperimentOutcome { summary, reports })
}

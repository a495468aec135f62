//! Error metrics, evaluation reports, scatter export and multi-seed
//! summaries.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_predict, feature_matrix, LinearModel};
use crate::data::{Gas, ResponseCoefficients, SampleRecord, N_OFFSETS, OFFSETS_DAYS};
use crate::error::{Error, Result};
use crate::model::{predict_batch, Checkpoint};

fn check_pair(op: &str, y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::usage(format!("{op}: length mismatch ({} vs {})", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Err(Error::usage(format!("{op}: empty input")));
    }
    Ok(())
}

/// `sqrt(‖y − ŷ‖² / n)`
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair("rmse", y, y_hat)?;
    Ok((squared_error(y, y_hat) / y.len() as f64).sqrt())
}

/// `mean |y − ŷ|`
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair("mae", y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// `1 − SS_res / SS_tot`; `None` when `y` is constant.
pub fn r_squared(y: &[f64], y_hat: &[f64]) -> Result<Option<f64>> {
    check_pair("r_squared", y, y_hat)?;
    if y.len() < 2 {
        return Err(Error::usage("r_squared needs at least two points"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    Ok(Some(1.0 - squared_error(y, y_hat) / ss_tot))
}

fn squared_error(y: &[f64], y_hat: &[f64]) -> f64 {
    y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// `null` when the actual values are constant.
    pub r2: Option<f64>,
    pub sse: f64,
}

impl Metrics {
    pub fn compute(y: &[f64], y_hat: &[f64]) -> Result<Self> {
        let m = Self {
            rmse: rmse(y, y_hat)?,
            mae: mae(y, y_hat)?,
            r2: if y.len() >= 2 { r_squared(y, y_hat)? } else { None },
            sse: squared_error(y, y_hat),
        };
        // quadratic mean dominates arithmetic mean; allow for the last rounding
        if m.rmse < m.mae * (1.0 - 1e-12) {
            return Err(Error::Numerical(format!("rmse {} below mae {}", m.rmse, m.mae)));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetMetrics {
    pub offset_day: i32,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub gas: Gas,
    pub split: String,
    pub model: String,
    pub n_samples: usize,
    pub per_offset: Vec<OffsetMetrics>,
    /// Pooled over all `9n` (actual, predicted) pairs.
    pub overall: Metrics,
}

impl EvalReport {
    /// Aligned plain-text table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{} | gas {} | split {} | n = {}\n{:>8} {:>12} {:>12} {:>9}\n",
            self.model, self.gas, self.split, self.n_samples, "offset", "rMSE", "MAE", "R2"
        );
        let r2 = |v: Option<f64>| v.map_or("n/a".to_string(), |r| format!("{r:.4}"));
        for row in &self.per_offset {
            out.push_str(&format!(
                "{:>8} {:>12.4} {:>12.4} {:>9}\n",
                row.offset_day,
                row.metrics.rmse,
                row.metrics.mae,
                r2(row.metrics.r2)
            ));
        }
        out.push_str(&format!(
            "{:>8} {:>12.4} {:>12.4} {:>9}\n",
            "overall",
            self.overall.rmse,
            self.overall.mae,
            r2(self.overall.r2)
        ));
        out
    }
}

/// Anything that maps records to flux trajectories in original units.
pub trait FluxPredictor {
    fn gas(&self) -> Gas;
    fn label(&self) -> String;
    fn predict(&self, records: &[SampleRecord]) -> Result<Vec<[f64; N_OFFSETS]>>;
}

fn to_rows(rows: impl Iterator<Item = Vec<f64>>) -> Result<Vec<[f64; N_OFFSETS]>> {
    rows.map(|r| {
        <[f64; N_OFFSETS]>::try_from(r.as_slice()).map_err(|_| Error::Shape {
            op: "predict",
            left: (1, N_OFFSETS),
            right: (1, r.len()),
        })
    })
    .collect()
}

impl FluxPredictor for Checkpoint {
    fn gas(&self) -> Gas {
        self.config.gas
    }

    fn label(&self) -> String {
        if self.config.single_head {
            "kgfgnn-single-head".into()
        } else {
            "kgfgnn".into()
        }
    }

    fn predict(&self, records: &[SampleRecord]) -> Result<Vec<[f64; N_OFFSETS]>> {
        let inputs: Vec<Vec<f64>> = records.iter().map(|r| self.standardizer.apply_features(&r.features())).collect();
        let z = predict_batch(&inputs, &self.params, &self.config)?;
        to_rows(z.iter().map(|row| self.standardizer.invert_targets(row)))
    }
}

impl FluxPredictor for LinearModel {
    fn gas(&self) -> Gas {
        self.gas
    }

    fn label(&self) -> String {
        self.kind.label().into()
    }

    fn predict(&self, records: &[SampleRecord]) -> Result<Vec<[f64; N_OFFSETS]>> {
        let p = baseline_predict(self, &feature_matrix(records))?;
        to_rows((0..p.rows()).map(|i| p.row(i).to_vec()))
    }
}

/// Predicts the training-set mean of every offset.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanPredictor {
    pub gas: Gas,
    pub means: [f64; N_OFFSETS],
}

impl MeanPredictor {
    pub fn fit(train: &[SampleRecord], gas: Gas) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::usage("mean predictor needs training records"));
        }
        let mut means = [0.0; N_OFFSETS];
        for r in train {
            for (m, v) in means.iter_mut().zip(r.targets(gas)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= train.len() as f64);
        Ok(Self { gas, means })
    }
}

impl FluxPredictor for MeanPredictor {
    fn gas(&self) -> Gas {
        self.gas
    }

    fn label(&self) -> String {
        "mean".into()
    }

    fn predict(&self, records: &[SampleRecord]) -> Result<Vec<[f64; N_OFFSETS]>> {
        Ok(vec![self.means; records.len()])
    }
}

/// The generator's own noise-free response surface.
#[derive(Clone, Debug, PartialEq)]
pub struct OraclePredictor {
    pub gas: Gas,
    pub response: ResponseCoefficients,
}

impl FluxPredictor for OraclePredictor {
    fn gas(&self) -> Gas {
        self.gas
    }

    fn label(&self) -> String {
        "oracle".into()
    }

    fn predict(&self, records: &[SampleRecord]) -> Result<Vec<[f64; N_OFFSETS]>> {
        Ok(records
            .iter()
            .map(|r| {
                let (co2, n2o) = self.response.response(&r.features());
                match self.gas {
                    Gas::Co2 => co2,
                    Gas::N2o => n2o,
                }
            })
            .collect())
    }
}

/// A report together with the pairs it was computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub actual: Vec<[f64; N_OFFSETS]>,
    pub predicted: Vec<[f64; N_OFFSETS]>,
}

pub fn evaluate(predictor: &dyn FluxPredictor, records: &[SampleRecord], gas: Gas, split: &str) -> Result<Evaluation> {
    if predictor.gas() != gas {
        return Err(Error::usage(format!(
            "model predicts {} but evaluation asked for {gas}",
            predictor.gas()
        )));
    }
    if records.is_empty() {
        return Err(Error::usage("cannot evaluate on zero records"));
    }
    let predicted = predictor.predict(records)?;
    let actual: Vec<[f64; N_OFFSETS]> = records.iter().map(|r| *r.targets(gas)).collect();
    let mut per_offset = Vec::with_capacity(N_OFFSETS);
    for (t, &day) in OFFSETS_DAYS.iter().enumerate() {
        let y: Vec<f64> = actual.iter().map(|r| r[t]).collect();
        let p: Vec<f64> = predicted.iter().map(|r| r[t]).collect();
        per_offset.push(OffsetMetrics {
            offset_day: day,
            metrics: Metrics::compute(&y, &p)?,
        });
    }
    let pooled_y: Vec<f64> = actual.iter().flatten().copied().collect();
    let pooled_p: Vec<f64> = predicted.iter().flatten().copied().collect();
    let report = EvalReport {
        gas,
        split: split.into(),
        model: predictor.label(),
        n_samples: records.len(),
        per_offset,
        overall: Metrics::compute(&pooled_y, &pooled_p)?,
    };
    Ok(Evaluation {
        report,
        actual,
        predicted,
    })
}

/// Least-squares line `predicted = slope · actual + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionLine {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

pub fn regression_line(actual: &[f64], predicted: &[f64]) -> Result<RegressionLine> {
    check_pair("regression_line", actual, predicted)?;
    let n = actual.len() as f64;
    let mx = actual.iter().sum::<f64>() / n;
    let my = predicted.iter().sum::<f64>() / n;
    let sxx: f64 = actual.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = actual.iter().zip(predicted).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Ok(RegressionLine {
            slope: None,
            intercept: None,
        });
    }
    let slope = sxy / sxx;
    Ok(RegressionLine {
        slope: Some(slope),
        intercept: Some(my - slope * mx),
    })
}

impl Evaluation {
    fn column(rows: &[[f64; N_OFFSETS]], t: usize) -> Vec<f64> {
        rows.iter().map(|r| r[t]).collect()
    }

    /// Per-offset regression lines followed by the pooled one.
    pub fn regression_lines(&self) -> Result<Vec<(String, RegressionLine)>> {
        let mut out = Vec::with_capacity(N_OFFSETS + 1);
        for (t, &day) in OFFSETS_DAYS.iter().enumerate() {
            let line = regression_line(&Self::column(&self.actual, t), &Self::column(&self.predicted, t))?;
            out.push((day.to_string(), line));
        }
        let a: Vec<f64> = self.actual.iter().flatten().copied().collect();
        let p: Vec<f64> = self.predicted.iter().flatten().copied().collect();
        out.push(("overall".into(), regression_line(&a, &p)?));
        Ok(out)
    }

    /// One `scatter_<offset>.tsv` per offset (actual, predicted,
    /// offset_day) plus `regression_lines.tsv`.
    pub fn write_scatter(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (t, &day) in OFFSETS_DAYS.iter().enumerate() {
            let path = dir.join(format!("scatter_{}.tsv", crate::data::offset_suffix(day)));
            let mut text = String::from("actual\tpredicted\toffset_day\n");
            for (a, p) in self.actual.iter().zip(&self.predicted) {
                text.push_str(&format!("{:?}\t{:?}\t{day}\n", a[t], p[t]));
            }
            write_text(&path, &text)?;
        }
        let mut text = String::from("offset_day\tslope\tintercept\n");
        let fmt = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:?}"));
        for (label, line) in self.regression_lines()? {
            text.push_str(&format!("{label}\t{}\t{}\n", fmt(line.slope), fmt(line.intercept)));
        }
        write_text(&dir.join("regression_lines.tsv"), &text)
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Pretty JSON to `path`.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

/// `mean±sd` with four decimals; a missing sd prints as `n/a`.
pub fn format_mean_sd(mean: f64, sd: Option<f64>) -> String {
    match sd {
        Some(sd) => format!("{mean:.4}±{sd:.4}"),
        None => format!("{mean:.4}±n/a"),
    }
}

/// Mean and sample standard deviation (`n − 1`); sd is `None` below two values.
pub fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, sd)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedSummary {
    pub gas: Gas,
    pub model: String,
    pub seeds: Vec<u64>,
    pub rmse: Vec<f64>,
    pub mae: Vec<f64>,
    pub r2: Vec<Option<f64>>,
    pub rmse_mean: f64,
    pub rmse_sd: Option<f64>,
    pub mae_mean: f64,
    pub mae_sd: Option<f64>,
}

impl MultiSeedSummary {
    pub fn from_reports(seeds: &[u64], reports: &[EvalReport]) -> Result<Self> {
        let first = reports.first().ok_or_else(|| Error::usage("summary needs at least one report"))?;
        if seeds.len() != reports.len() {
            return Err(Error::usage("one seed per report"));
        }
        let rmse: Vec<f64> = reports.iter().map(|r| r.overall.rmse).collect();
        let mae: Vec<f64> = reports.iter().map(|r| r.overall.mae).collect();
        let (rmse_mean, rmse_sd) = mean_sd(&rmse);
        let (mae_mean, mae_sd) = mean_sd(&mae);
        Ok(Self {
            gas: first.gas,
            model: first.model.clone(),
            seeds: seeds.to_vec(),
            r2: reports.iter().map(|r| r.overall.r2).collect(),
            rmse,
            mae,
            rmse_mean,
            rmse_sd,
            mae_mean,
            mae_sd,
        })
    }

    pub fn table(&self) -> String {
        format!(
            "{:<20} {:>20} {:>20}\n{:<20} {:>20} {:>20}\n",
            "method",
            "rMSE",
            "MAE",
            self.model,
            format_mean_sd(self.rmse_mean, self.rmse_sd),
            format_mean_sd(self.mae_mean, self.mae_sd)
        )
    }
}

//! Linear comparison models fitted independently per target offset:
//! ridge, lasso and elastic net.
//!
//! All solvers work on standardized data and minimise
//!
//! ```text
//! (1/2n) ‖y − Xβ‖² + λ1 ‖β‖₁ + (λ2/2) ‖β‖²
//! ```
//!
//! so ridge solves `(XᵀX + nλ2 I) β = Xᵀy` and lasso is `λ2 = 0`.

use serde::{Deserialize, Serialize};

use crate::data::{Gas, SampleRecord, N_FEATURES, N_OFFSETS};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numkit::{cholesky_solve, Matrix};

/// Coefficients and intercept in the original units of `X` and `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElasticNetFit {
    pub fit: LinearFit,
    pub converged: bool,
    /// Full coordinate cycles performed.
    pub cycles: usize,
    /// Objective (standardized scale) after each cycle.
    pub objective: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElasticNetOptions {
    pub lambda1: f64,
    pub lambda2: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub fit_intercept: bool,
}

impl Default for ElasticNetOptions {
    fn default() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            tol: 1e-10,
            max_iter: 100_000,
            fit_intercept: true,
        }
    }
}

/// `sign(x) · max(|x| − λ, 0)`
pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// Standardized design: centred (when fitting an intercept) and scaled
/// columns, plus the same for `y`.
struct Design {
    z: Matrix,
    mean: Vec<f64>,
    scale: Vec<f64>,
    y: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
}

fn location_scale(values: impl Iterator<Item = f64> + Clone, n: usize, center: bool) -> (f64, f64) {
    let mean = if center { values.clone().sum::<f64>() / n as f64 } else { 0.0 };
    let spread = (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let scale = if spread > 1e-12 * mean.abs().max(1.0) { spread } else { 1.0 };
    (mean, scale)
}

fn standardize(x: &Matrix, y: &[f64], fit_intercept: bool) -> Result<Design> {
    let (n, d) = x.shape();
    if n == 0 {
        return Err(Error::usage("linear fit needs at least one row"));
    }
    if y.len() != n {
        return Err(Error::Shape {
            op: "linear fit",
            left: x.shape(),
            right: (y.len(), 1),
        });
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("linear fit input is not finite".into()));
    }
    let mut mean = Vec::with_capacity(d);
    let mut scale = Vec::with_capacity(d);
    for j in 0..d {
        let (m, s) = location_scale((0..n).map(|i| x.get(i, j)), n, fit_intercept);
        mean.push(m);
        scale.push(s);
    }
    let z = Matrix::from_fn(n, d, |i, j| (x.get(i, j) - mean[j]) / scale[j]);
    let (y_mean, y_scale) = location_scale(y.iter().copied(), n, fit_intercept);
    let y = y.iter().map(|v| (v - y_mean) / y_scale).collect();
    Ok(Design {
        z,
        mean,
        scale,
        y,
        y_mean,
        y_scale,
    })
}

impl Design {
    fn restore(&self, beta: &[f64]) -> LinearFit {
        let coefficients: Vec<f64> = beta
            .iter()
            .zip(&self.scale)
            .map(|(b, s)| b * self.y_scale / s)
            .collect();
        let intercept = self.y_mean - coefficients.iter().zip(&self.mean).map(|(c, m)| c * m).sum::<f64>();
        LinearFit { coefficients, intercept }
    }
}

/// Closed-form ridge on standardized data via a Cholesky solve.
/// With `lambda2 = 0` and a rank-deficient design this returns
/// [`Error::Singular`].
pub fn ridge_fit(x: &Matrix, y: &[f64], lambda2: f64, fit_intercept: bool) -> Result<LinearFit> {
    if !(lambda2 >= 0.0) {
        return Err(Error::usage(format!("lambda2 must be >= 0, got {lambda2}")));
    }
    let design = standardize(x, y, fit_intercept)?;
    let n = x.rows() as f64;
    let mut gram = design.z.matmul_tn(&design.z)?;
    for j in 0..gram.rows() {
        gram.set(j, j, gram.get(j, j) + n * lambda2);
    }
    let rhs = design.z.matmul_tn(&Matrix::column(&design.y))?;
    let beta = cholesky_solve(&gram, rhs.data())?;
    Ok(design.restore(&beta))
}

/// Smallest `λ1` at which every standardized lasso coefficient is zero.
pub fn lambda_max(x: &Matrix, y: &[f64], fit_intercept: bool) -> Result<f64> {
    let design = standardize(x, y, fit_intercept)?;
    let n = x.rows() as f64;
    Ok((0..x.cols()).fold(0.0_f64, |m, j| m.max((column_dot(&design.z, j, &design.y) / n).abs())))
}

fn column_dot(z: &Matrix, j: usize, v: &[f64]) -> f64 {
    v.iter().enumerate().map(|(i, r)| z.get(i, j) * r).sum()
}

fn objective(residual: &[f64], beta: &[f64], lambda1: f64, lambda2: f64) -> f64 {
    let n = residual.len() as f64;
    let fit = residual.iter().map(|r| r * r).sum::<f64>() / (2.0 * n);
    let l1 = beta.iter().map(|b| b.abs()).sum::<f64>();
    let l2 = beta.iter().map(|b| b * b).sum::<f64>();
    fit + lambda1 * l1 + 0.5 * lambda2 * l2
}

/// Cyclic coordinate descent with soft-thresholding. Stops once a full
/// cycle moves no standardized coefficient by `tol` or more; running out
/// of cycles is reported through `converged`, not as an error.
pub fn elasticnet_fit(x: &Matrix, y: &[f64], opts: &ElasticNetOptions) -> Result<ElasticNetFit> {
    if !(opts.lambda1 >= 0.0) || !(opts.lambda2 >= 0.0) {
        return Err(Error::usage("penalties must be >= 0"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::usage("tol must be > 0"));
    }
    let design = standardize(x, y, opts.fit_intercept)?;
    let (n, d) = design.z.shape();
    let nf = n as f64;
    let z = &design.z;
    let col_sq: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| z.get(i, j).powi(2)).sum::<f64>() / nf)
        .collect();
    let mut beta = vec![0.0; d];
    let mut residual = design.y.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut cycles = 0;
    while cycles < opts.max_iter {
        cycles += 1;
        let mut max_change = 0.0_f64;
        for j in 0..d {
            let denom = col_sq[j] + opts.lambda2;
            let old = beta[j];
            let rho = column_dot(z, j, &residual) / nf + col_sq[j] * old;
            let new = if denom > 0.0 { soft_threshold(rho, opts.lambda1) / denom } else { 0.0 };
            let delta = new - old;
            if delta != 0.0 {
                for (i, r) in residual.iter_mut().enumerate() {
                    *r -= z.get(i, j) * delta;
                }
                beta[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        trace.push(objective(&residual, &beta, opts.lambda1, opts.lambda2));
        if max_change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(ElasticNetFit {
        fit: design.restore(&beta),
        converged,
        cycles,
        objective: trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Ridge,
    Lasso,
    ElasticNet,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Ridge, BaselineKind::Lasso, BaselineKind::ElasticNet];

    /// `(λ1, λ2)` for one grid strength; elastic net splits it evenly.
    pub fn penalties(self, strength: f64) -> (f64, f64) {
        match self {
            BaselineKind::Ridge => (0.0, strength),
            BaselineKind::Lasso => (strength, 0.0),
            BaselineKind::ElasticNet => (0.5 * strength, 0.5 * strength),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Ridge => "ridge",
            BaselineKind::Lasso => "lasso",
            BaselineKind::ElasticNet => "elasticnet",
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ridge" => Ok(BaselineKind::Ridge),
            "lasso" => Ok(BaselineKind::Lasso),
            "elasticnet" | "elastic-net" | "enet" => Ok(BaselineKind::ElasticNet),
            other => Err(Error::usage(format!("unknown baseline `{other}` (ridge, lasso, elasticnet)"))),
        }
    }
}

/// Regularization strengths tried on the validation split:
/// eight log-spaced points from 1e-4 to 1e1.
pub fn lambda_grid() -> [f64; 8] {
    std::array::from_fn(|k| 10f64.powf(-4.0 + 5.0 * k as f64 / 7.0))
}

/// One linear map per target offset, in original units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: BaselineKind,
    pub gas: Gas,
    /// T × d
    pub coefficients: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    /// `(λ1, λ2)` selected for each offset.
    pub regularization: Vec<(f64, f64)>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

fn fit_one(kind: BaselineKind, x: &Matrix, y: &[f64], strength: f64) -> Result<LinearFit> {
    let (l1, l2) = kind.penalties(strength);
    match kind {
        BaselineKind::Ridge => ridge_fit(x, y, l2, true),
        _ => {
            let opts = ElasticNetOptions {
                lambda1: l1,
                lambda2: l2,
                tol: 1e-9,
                max_iter: 10_000,
                fit_intercept: true,
            };
            elasticnet_fit(x, y, &opts).map(|f| f.fit)
        }
    }
}

fn affine(fit: &LinearFit, row: &[f64]) -> f64 {
    fit.intercept + fit.coefficients.iter().zip(row).map(|(c, v)| c * v).sum::<f64>()
}

pub fn feature_matrix(records: &[SampleRecord]) -> Matrix {
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.features().to_vec()).collect();
    Matrix::from_fn(records.len(), N_FEATURES, |i, j| rows[i][j])
}

/// Fit every offset independently, picking each offset's strength from
/// [`lambda_grid`] by validation mean squared error (first minimum wins).
pub fn fit_baseline(kind: BaselineKind, gas: Gas, train: &[SampleRecord], val: &[SampleRecord]) -> Result<LinearModel> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::usage("baseline tuning needs non-empty train and validation sets"));
    }
    let x = feature_matrix(train);
    let xv = feature_matrix(val);
    let mut coefficients = Vec::with_capacity(N_OFFSETS);
    let mut intercepts = Vec::with_capacity(N_OFFSETS);
    let mut regularization = Vec::with_capacity(N_OFFSETS);
    for t in 0..N_OFFSETS {
        let y: Vec<f64> = train.iter().map(|r| r.targets(gas)[t]).collect();
        let mut best: Option<(f64, f64, LinearFit)> = None;
        for strength in lambda_grid() {
            let fit = fit_one(kind, &x, &y, strength)?;
            let mse = val
                .iter()
                .enumerate()
                .map(|(i, r)| (affine(&fit, xv.row(i)) - r.targets(gas)[t]).powi(2))
                .sum::<f64>()
                / val.len() as f64;
            if best.as_ref().map_or(true, |b| mse < b.0) {
                best = Some((mse, strength, fit));
            }
        }
        let (_, strength, fit) = best.expect("grid is non-empty");
        coefficients.push(fit.coefficients);
        intercepts.push(fit.intercept);
        regularization.push(kind.penalties(strength));
    }
    let (feature_mean, feature_std) = (0..N_FEATURES)
        .map(|j| location_scale((0..x.rows()).map(|i| x.get(i, j)), x.rows(), true))
        .unzip();
    Ok(LinearModel {
        kind,
        gas,
        coefficients,
        intercepts,
        regularization,
        feature_mean,
        feature_std,
    })
}

/// n × T predictions in original flux units.
pub fn baseline_predict(model: &LinearModel, x: &Matrix) -> Result<Matrix> {
    let d = model.coefficients.first().map_or(0, Vec::len);
    if x.cols() != d {
        return Err(Error::Shape {
            op: "baseline_predict",
            left: (model.coefficients.len(), d),
            right: x.shape(),
        });
    }
    Ok(Matrix::from_fn(x.rows(), model.coefficients.len(), |i, t| {
        model.intercepts[t]
            + model.coefficients[t]
                .iter()
                .zip(x.row(i))
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }))
}

/// The model config with per-offset branching disabled: one head whose
/// read-out emits every offset.
pub fn single_head_ablation(config: &ModelConfig) -> ModelConfig {
    ModelConfig {
        single_head: true,
        ..config.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    fn random_problem(rng: &mut Rng, n: usize, d: usize) -> (Matrix, Vec<f64>) {
        let x = Matrix::from_fn(n, d, |_, j| rng.normal() * (1.0 + j as f64) + j as f64);
        let beta: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let y = (0..n)
            .map(|i| 3.0 + x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + 0.5 * rng.normal())
            .collect();
        (x, y)
    }

    #[test]
    fn soft_threshold_kernel() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    #[test]
    fn ridge_identity_design_returns_targets() {
        let x = Matrix::identity(5);
        let y = [1.0, -2.0, 0.5, 4.0, 3.0];
        let fit = ridge_fit(&x, &y, 0.0, false).unwrap();
        for (b, t) in fit.coefficients.iter().zip(&y) {
            assert!((b - t).abs() < 1e-12);
        }
        assert_eq!(fit.intercept, 0.0);
    }

    #[test]
    fn ridge_infinite_shrinkage() {
        let (x, y) = random_problem(&mut Rng::new(1), 40, 6);
        let fit = ridge_fit(&x, &y, 1e9, true).unwrap();
        let norm = fit.coefficients.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "{norm}");
    }

    #[test]
    fn ridge_singular_without_penalty() {
        // duplicated column
        let x = Matrix::from_fn(10, 2, |i, _| i as f64);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(ridge_fit(&x, &y, 0.0, true), Err(Error::Singular { .. })));
        assert!(ridge_fit(&x, &y, 0.1, true).is_ok());
    }

    #[test]
    fn lasso_kill_at_lambda_max() {
        let (x, y) = random_problem(&mut Rng::new(2), 50, 10);
        let lmax = lambda_max(&x, &y, true).unwrap();
        let opts = ElasticNetOptions {
            lambda1: lmax,
            ..Default::default()
        };
        let fit = elasticnet_fit(&x, &y, &opts).unwrap();
        assert!(fit.fit.coefficients.iter().all(|b| *b == 0.0));
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((fit.fit.intercept - mean).abs() < 1e-12);
        let just_below = ElasticNetOptions {
            lambda1: 0.99 * lmax,
            ..Default::default()
        };
        assert!(elasticnet_fit(&x, &y, &just_below).unwrap().fit.coefficients.iter().any(|b| *b != 0.0));
    }

    #[test]
    fn coordinate_descent_objective_never_increases() {
        let mut rng = Rng::new(3);
        for (l1, l2) in [(0.01, 0.0), (0.05, 0.1), (0.0, 0.3)] {
            let (x, y) = random_problem(&mut rng, 60, 8);
            let opts = ElasticNetOptions {
                lambda1: l1,
                lambda2: l2,
                ..Default::default()
            };
            let fit = elasticnet_fit(&x, &y, &opts).unwrap();
            assert!(fit.converged);
            for w in fit.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-15 * w[0].abs(), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn non_convergence_is_flagged() {
        let (x, y) = random_problem(&mut Rng::new(4), 30, 5);
        let opts = ElasticNetOptions {
            lambda1: 1e-3,
            max_iter: 1,
            ..Default::default()
        };
        let fit = elasticnet_fit(&x, &y, &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.cycles, 1);
    }

    #[test]
    fn elasticnet_without_l1_is_ridge() {
        let mut rng = Rng::new(5);
        for _ in 0..5 {
            let (x, y) = random_problem(&mut rng, 50, 10);
            let ridge = ridge_fit(&x, &y, 0.2, true).unwrap();
            let opts = ElasticNetOptions {
                lambda2: 0.2,
                ..Default::default()
            };
            let enet = elasticnet_fit(&x, &y, &opts).unwrap().fit;
            for (a, b) in ridge.coefficients.iter().zip(&enet.coefficients) {
                assert!((a - b).abs() < 1e-6);
            }
            assert!((ridge.intercept - enet.intercept).abs() < 1e-6);
        }
    }

    #[test]
    fn lasso_active_set_shrinks_along_path() {
        let (x, y) = random_problem(&mut Rng::new(6), 80, 10);
        let lmax = lambda_max(&x, &y, true).unwrap();
        let mut previous = usize::MAX;
        for k in 0..10 {
            let lambda1 = lmax * 10f64.powf(-3.0 + 3.0 * k as f64 / 9.0);
            let opts = ElasticNetOptions {
                lambda1,
                ..Default::default()
            };
            let active = elasticnet_fit(&x, &y, &opts).unwrap().fit.coefficients.iter().filter(|b| **b != 0.0).count();
            assert!(active <= previous, "active set grew at step {k}");
            previous = active;
        }
        assert_eq!(previous, 0);
    }

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid();
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert!((g[7] - 10.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("Ridge".parse::<BaselineKind>().unwrap(), BaselineKind::Ridge);
        assert_eq!("elastic-net".parse::<BaselineKind>().unwrap(), BaselineKind::ElasticNet);
        assert!(matches!("svm".parse::<BaselineKind>(), Err(Error::Usage(_))));
        assert_eq!(BaselineKind::ElasticNet.penalties(2.0), (1.0, 1.0));
    }
}

//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so every line is printed whether it passes or not.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use kgfgnn::baselines::{elasticnet_fit, fit_baseline, lambda_max, ridge_fit, BaselineKind, ElasticNetOptions};
use kgfgnn::data::{csv_read, csv_write, generate, split, Gas, GeneratorConfig, CO2_MAX, CSV_HEADER, N2O_MAX};
use kgfgnn::error::CsvError;
use kgfgnn::eval::{evaluate, mae, r_squared, rmse, EvalReport, MultiSeedSummary};
use kgfgnn::model::{checkpoint_load, checkpoint_save, model_forward, pair_index, ModelConfig, ModelParams};
use kgfgnn::numkit::{Matrix, Rng};
use kgfgnn::pipeline::{train_run, RunConfig, SPLIT_FRACTIONS};
use kgfgnn::training::{audit_params, gradcheck};
use kgfgnn::Error;

// criterion 1
const GRADCHECK_SEED: u64 = 0;
const GRADCHECK_SAMPLES: usize = 8;
const GRADCHECK_STEP: f64 = 1e-5;
const GRADCHECK_TOL: f64 = 1e-4;
const GRADCHECK_BUDGET_S: f64 = 60.0;
// criterion 2
const METRIC_PAIRS: usize = 1000;
const METRIC_TOL: f64 = 1e-12;
// criterion 3
const RIDGE_INSTANCES: usize = 20;
const RIDGE_TOL: f64 = 1e-6;
// criterion 4
const PERMUTATIONS: usize = 100;
const PERMUTATION_TOL: f64 = 1e-12;
// criteria 6 and 7
const LEARN_N: usize = 4000;
const LEARN_NOISE: f64 = 0.05;
const LEARN_SEED: u64 = 42;
const CO2_MIN_R2: f64 = 0.8;
const N2O_MIN_R2: f64 = 0.6;
const GAS_BUDGET_S: f64 = 600.0;
const ABLATION_SEEDS: usize = 5;
// criterion 9
const CSV_RECORDS: usize = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_kgfgnn")
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn c1_gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let report = gradcheck(&ModelConfig::default(), GRADCHECK_SEED, GRADCHECK_SAMPLES, GRADCHECK_STEP).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = report
        .tensors
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    let failing = report.tensors.iter().filter(|t| t.max_rel_error >= GRADCHECK_TOL).count();
    let has_edges = report.tensors.iter().any(|t| t.name == "edge_raw");
    outcome(
        report.passes(GRADCHECK_TOL) && has_edges && secs < GRADCHECK_BUDGET_S,
        format!(
            "seed {GRADCHECK_SEED}: worst {} = {:.3e}, {failing}/{} tensors >= {GRADCHECK_TOL:e}, {secs:.1}s",
            worst.name,
            worst.max_rel_error,
            report.tensors.len()
        ),
    )
}

fn c2_metric_oracles() -> Outcome {
    let mut rng = Rng::new(2);
    let mut worst = 0.0_f64;
    let mut ordered = true;
    for _ in 0..METRIC_PAIRS {
        let n = 2 + rng.below(49) as usize;
        let y: Vec<f64> = (0..n).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let mut sq = 0.0;
        let mut ab = 0.0;
        let mut mean = 0.0;
        for i in 0..n {
            sq += (y[i] - p[i]) * (y[i] - p[i]);
            ab += (y[i] - p[i]).abs();
            mean += y[i];
        }
        mean /= n as f64;
        let mut tot = 0.0;
        for v in &y {
            tot += (v - mean) * (v - mean);
        }
        let (e_rmse, e_mae, e_r2) = ((sq / n as f64).sqrt(), ab / n as f64, 1.0 - sq / tot);
        let (g_rmse, g_mae, g_r2) = (rmse(&y, &p).unwrap(), mae(&y, &p).unwrap(), r_squared(&y, &p).unwrap().unwrap());
        for (g, e) in [(g_rmse, e_rmse), (g_mae, e_mae), (g_r2, e_r2)] {
            worst = worst.max((g - e).abs() / e.abs().max(1.0));
        }
        ordered &= g_rmse >= g_mae;
    }
    outcome(
        worst <= METRIC_TOL && ordered,
        format!("{METRIC_PAIRS} pairs: worst deviation {worst:.1e}, rMSE >= MAE on all: {ordered}"),
    )
}

/// Ridge on standardized data solved by nalgebra's LU, mapped back to
/// original units.
fn nalgebra_ridge(x: &Matrix, y: &[f64], lambda2: f64) -> (Vec<f64>, f64) {
    let (n, d) = x.shape();
    let nf = n as f64;
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / nf).collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| ((0..n).map(|i| (x.get(i, j) - mean[j]).powi(2)).sum::<f64>() / nf).sqrt())
        .collect();
    let y_mean = y.iter().sum::<f64>() / nf;
    let z = DMatrix::from_fn(n, d, |i, j| (x.get(i, j) - mean[j]) / sd[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let lhs = z.transpose() * &z + DMatrix::identity(d, d) * (nf * lambda2);
    let beta = lhs.lu().solve(&(z.transpose() * yc)).expect("regularized system is solvable");
    let coef: Vec<f64> = (0..d).map(|j| beta[j] / sd[j]).collect();
    let intercept = y_mean - coef.iter().zip(&mean).map(|(c, m)| c * m).sum::<f64>();
    (coef, intercept)
}

fn c3_baseline_oracles() -> Outcome {
    let mut rng = Rng::new(3);
    let mut worst = 0.0_f64;
    let mut all_zero = true;
    for _ in 0..RIDGE_INSTANCES {
        let x = Matrix::from_fn(50, 10, |_, j| rng.normal() * (0.5 + j as f64) + rng.uniform(-3.0, 3.0));
        let truth: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..50)
            .map(|i| 1.5 + x.row(i).iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + rng.normal())
            .collect();
        let lambda2 = rng.uniform(0.01, 1.0);
        let (oracle, oracle_b) = nalgebra_ridge(&x, &y, lambda2);
        let opts = ElasticNetOptions {
            lambda2,
            ..Default::default()
        };
        let enet = elasticnet_fit(&x, &y, &opts).unwrap().fit;
        let ridge = ridge_fit(&x, &y, lambda2, true).unwrap();
        for fit in [&enet, &ridge] {
            for (a, b) in fit.coefficients.iter().zip(&oracle) {
                worst = worst.max((a - b).abs());
            }
            worst = worst.max((fit.intercept - oracle_b).abs());
        }
        let lmax = lambda_max(&x, &y, true).unwrap();
        let lasso = ElasticNetOptions {
            lambda1: lmax,
            ..Default::default()
        };
        all_zero &= elasticnet_fit(&x, &y, &lasso).unwrap().fit.coefficients.iter().all(|b| *b == 0.0);
    }
    outcome(
        worst < RIDGE_TOL && all_zero,
        format!("{RIDGE_INSTANCES} instances: max |enet/ridge − oracle| {worst:.1e}, lasso at λ_max all zero: {all_zero}"),
    )
}

fn permuted(p: &ModelParams, perm: &[usize]) -> ModelParams {
    let d = perm.len();
    let mut q = p.clone();
    for n in 0..d {
        for c in 0..p.projection.weight.cols() {
            q.projection.weight.set(perm[n], c, p.projection.weight.get(n, c));
        }
        q.projection.bias.set(perm[n], 0, p.projection.bias.get(n, 0));
    }
    for i in 0..d {
        for j in i + 1..d {
            q.edge_raw.set(pair_index(perm[i], perm[j], d), 0, p.edge_raw.get(pair_index(i, j, d), 0));
        }
    }
    q
}

fn c4_permutation_invariance() -> Outcome {
    let cfg = ModelConfig::default();
    let mut rng = Rng::new(4);
    let params = audit_params(&cfg, &mut rng).unwrap();
    let inputs: Vec<Vec<f64>> = (0..4).map(|_| (0..10).map(|_| rng.normal()).collect()).collect();
    let base: Vec<Vec<f64>> = inputs.iter().map(|x| model_forward(x, &params, &cfg).unwrap().y_hat).collect();
    let mut worst = 0.0_f64;
    for _ in 0..PERMUTATIONS {
        let mut perm: Vec<usize> = (0..10).collect();
        rng.shuffle(&mut perm);
        let q = permuted(&params, &perm);
        for (x, b) in inputs.iter().zip(&base) {
            let y = model_forward(x, &q, &cfg).unwrap().y_hat;
            for (u, v) in y.iter().zip(b) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    outcome(
        worst < PERMUTATION_TOL,
        format!("{PERMUTATIONS} permutations: max |Δŷ| {worst:.1e}"),
    )
}

fn c5_determinism(work: &Path) -> Outcome {
    let data = work.join("c5.csv");
    csv_write(&generate(&GeneratorConfig::new(400, 5, 0.05)).unwrap(), &data).unwrap();
    let config = work.join("c5.toml");
    std::fs::write(&config, "[train]\nepochs = 5\n").unwrap();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = work.join(format!("c5_{run}"));
        let status = cli(&[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--gas",
            "co2",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        files.push(std::fs::read(out.join("model.ckpt.json")).unwrap());
    }
    let identical = files[0] == files[1];
    let ckpt = checkpoint_load(work.join("c5_a").join("model.ckpt.json")).unwrap();
    let copy = work.join("c5_copy.json");
    checkpoint_save(&ckpt, &copy).unwrap();
    let back = checkpoint_load(&copy).unwrap();
    let bits = |p: &ModelParams| p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let exact = bits(&ckpt.params) == bits(&back.params) && ckpt.standardizer == back.standardizer && ckpt.config == back.config;
    outcome(
        identical && exact,
        format!("train twice identical: {identical}, save→load bit-exact: {exact}"),
    )
}

fn read_report(path: &Path) -> EvalReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read_summary(path: &Path) -> MultiSeedSummary {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct Experiments {
    full: MultiSeedSummary,
    full_seconds: f64,
    full_stdout: String,
    single: MultiSeedSummary,
    co2_report: EvalReport,
    co2_seconds: f64,
}

fn run_cli_experiments(work: &Path, data: &Path) -> Experiments {
    let run = |label: &str, extra: &[&str]| {
        let out = work.join(label);
        let seed = LEARN_SEED.to_string();
        let seeds = ABLATION_SEEDS.to_string();
        let mut args = vec![
            "experiment",
            "--data",
            data.to_str().unwrap(),
            "--gas",
            "co2",
            "--seeds",
            &seeds,
            "--seed",
            &seed,
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let start = Instant::now();
        let o = cli(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (out, start.elapsed().as_secs_f64(), String::from_utf8_lossy(&o.stdout).into_owned())
    };
    let (full_dir, full_seconds, full_stdout) = run("c7_full", &[]);
    let (single_dir, _, _) = run("c7_single", &["--single-head"]);
    let co2_report = read_report(&full_dir.join(format!("seed_{LEARN_SEED}")).join("report.json"));
    Experiments {
        full: read_summary(&full_dir.join("summary.json")),
        co2_seconds: full_seconds / ABLATION_SEEDS as f64,
        full_seconds,
        full_stdout,
        single: read_summary(&single_dir.join("summary.json")),
        co2_report,
    }
}

fn ridge_rmse(records: &[kgfgnn::data::SampleRecord], gas: Gas) -> f64 {
    let parts = split(records, LEARN_SEED, SPLIT_FRACTIONS).unwrap();
    let ridge = fit_baseline(BaselineKind::Ridge, gas, &parts.train, &parts.val).unwrap();
    evaluate(&ridge, &parts.test, gas, "test").unwrap().report.overall.rmse
}

fn c6_learning(records: &[kgfgnn::data::SampleRecord], ex: &Experiments) -> Outcome {
    let co2 = &ex.co2_report;
    let co2_r2 = co2.overall.r2.unwrap_or(f64::NAN);
    let co2_ridge = ridge_rmse(records, Gas::Co2);

    let start = Instant::now();
    let cfg = RunConfig::default();
    let run = train_run(records, Gas::N2o, &cfg.model, &cfg.train, LEARN_SEED).unwrap();
    let n2o = evaluate(&run.checkpoint, &run.splits.test, Gas::N2o, "test").unwrap().report;
    let n2o_seconds = start.elapsed().as_secs_f64();
    let n2o_r2 = n2o.overall.r2.unwrap_or(f64::NAN);
    let n2o_ridge = ridge_rmse(records, Gas::N2o);

    let pass = co2_r2 >= CO2_MIN_R2
        && co2.overall.rmse < co2_ridge
        && n2o_r2 >= N2O_MIN_R2
        && n2o.overall.rmse < n2o_ridge
        && ex.co2_seconds <= GAS_BUDGET_S
        && n2o_seconds <= GAS_BUDGET_S;
    outcome(
        pass,
        format!(
            "CO2 R² {co2_r2:.4} rMSE {:.4} vs ridge {co2_ridge:.4} ({:.0}s); N2O R² {n2o_r2:.4} rMSE {:.4} vs ridge {n2o_ridge:.4} ({n2o_seconds:.0}s)",
            co2.overall.rmse, ex.co2_seconds, n2o.overall.rmse
        ),
    )
}

fn c7_ablation(ex: &Experiments) -> Outcome {
    let (full, single) = (&ex.full, &ex.single);
    let slack = full.rmse_sd.unwrap_or(0.0).max(single.rmse_sd.unwrap_or(0.0));
    let pass = full.rmse_mean <= single.rmse_mean + slack;
    outcome(
        pass,
        format!(
            "{ABLATION_SEEDS} seeds: full {:.4} vs single-head {:.4} (allowed slack {slack:.4})",
            full.rmse_mean, single.rmse_mean
        ),
    )
}

fn c8_stability(ex: &Experiments) -> Outcome {
    let s = &ex.full;
    let finite = s.rmse.iter().chain(&s.mae).all(|v| v.is_finite()) && s.rmse_mean.is_finite() && s.mae_mean.is_finite();
    let sd_positive = s.rmse_sd.is_some_and(|v| v > 0.0) && s.mae_sd.is_some_and(|v| v > 0.0);
    let formatted = ex.full_stdout.lines().any(|l| {
        let cells: Vec<&str> = l.split_whitespace().collect();
        cells.len() == 3 && cells[1..].iter().all(|c| is_mean_sd(c))
    });
    outcome(
        finite && sd_positive && formatted && s.seeds.len() == ABLATION_SEEDS,
        format!(
            "{} seeds in {:.0}s: rMSE {:.4}±{:.4}, sd > 0: {sd_positive}, finite: {finite}, table formatted: {formatted}",
            s.seeds.len(),
            ex.full_seconds,
            s.rmse_mean,
            s.rmse_sd.unwrap_or(f64::NAN)
        ),
    )
}

/// `12.3456±0.7890`
fn is_mean_sd(cell: &str) -> bool {
    let Some((m, s)) = cell.split_once('±') else { return false };
    let four = |t: &str| t.split_once('.').is_some_and(|(_, frac)| frac.len() == 4) && t.parse::<f64>().is_ok();
    four(m) && four(s)
}

fn c9_data_pipeline(work: &Path) -> Outcome {
    let records = generate(&GeneratorConfig::new(CSV_RECORDS, 9, 0.3)).unwrap();
    let path = work.join("c9.csv");
    csv_write(&records, &path).unwrap();
    let lossless = csv_read(&path).unwrap() == records;
    let in_range = records.iter().all(|r| {
        r.co2_flux.iter().all(|v| (0.0..=CO2_MAX).contains(v)) && r.n2o_flux.iter().all(|v| (0.0..=N2O_MAX).contains(v))
    });

    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<String> = text.lines().take(3).map(String::from).collect();
    let columns: Vec<&str> = CSV_HEADER.split(',').collect();
    let ph = columns.iter().position(|c| *c == "soil_ph").unwrap();
    let n2o_d4 = columns.iter().position(|c| *c == "n2o_d4").unwrap();
    let edit = |lines: &[String], row: usize, col: usize, value: &str| -> String {
        let mut out = lines.to_vec();
        let mut cells: Vec<String> = out[row].split(',').map(String::from).collect();
        cells[col] = value.into();
        out[row] = cells.join(",");
        out.join("\n") + "\n"
    };
    let drop_column = |lines: &[String], col: usize| -> String {
        lines
            .iter()
            .map(|l| {
                let mut cells: Vec<&str> = l.split(',').collect();
                cells.remove(col);
                cells.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    };
    let classify = |body: String| -> String {
        let p = work.join("c9_bad.csv");
        std::fs::write(&p, body).unwrap();
        match csv_read(&p) {
            Err(Error::Csv(e)) => match e {
                CsvError::MissingColumn { .. } => "missing",
                CsvError::UnexpectedColumn { .. } => "unexpected",
                CsvError::NonNumeric { .. } => "non-numeric",
                CsvError::OutOfRange { .. } => "range",
                CsvError::FieldCount { .. } => "field-count",
                CsvError::Malformed(_) => "malformed",
            }
            .to_string(),
            other => format!("{other:?}"),
        }
    };
    let mut short = lines.clone();
    short[2] = short[2].rsplit_once(',').unwrap().0.to_string();
    let observed = [
        classify(drop_column(&lines, ph)),
        classify({
            let mut extra = lines.clone();
            extra[0].push_str(",notes");
            extra.join("\n") + "\n"
        }),
        classify(edit(&lines, 1, 2, "wet")),
        classify(edit(&lines, 1, n2o_d4, "-1")),
        classify(short.join("\n") + "\n"),
    ];
    let expected = ["missing", "unexpected", "non-numeric", "range", "field-count"];
    let distinct = observed.iter().zip(&expected).all(|(o, e)| o == e);
    outcome(
        lossless && in_range && distinct,
        format!("{CSV_RECORDS} records lossless: {lossless}, ranges: {in_range}, error classes: {observed:?}"),
    )
}

fn report(failed: &mut usize, n: usize, name: &str, o: Outcome) {
    println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    *failed += usize::from(!o.pass);
}

fn main() {
    // libtest-style arguments (e.g. --nocapture) are accepted and ignored
    let work = tempfile::tempdir().unwrap();
    let dir = work.path();
    let mut failed = 0;

    report(&mut failed, 1, "gradient fidelity", c1_gradient_fidelity());
    report(&mut failed, 2, "metric oracles", c2_metric_oracles());
    report(&mut failed, 3, "baseline oracle equivalence", c3_baseline_oracles());
    report(&mut failed, 4, "permutation invariance", c4_permutation_invariance());
    report(&mut failed, 5, "determinism", c5_determinism(dir));

    let records = generate(&GeneratorConfig::new(LEARN_N, LEARN_SEED, LEARN_NOISE)).unwrap();
    let data = dir.join("learn.csv");
    csv_write(&records, &data).unwrap();
    let experiments = run_cli_experiments(dir, &data);
    report(&mut failed, 6, "learning sanity", c6_learning(&records, &experiments));
    report(&mut failed, 7, "ablation direction", c7_ablation(&experiments));
    report(&mut failed, 8, "multi-seed stability", c8_stability(&experiments));
    report(&mut failed, 9, "data pipeline", c9_data_pipeline(dir));

    println!("acceptance: {}/9 criteria pass", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

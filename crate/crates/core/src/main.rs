use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgfgnn::baselines::{fit_baseline, BaselineKind};
use kgfgnn::data::{csv_read, csv_read_features, csv_write, generate, predictions_write, split, Gas, GeneratorConfig};
use kgfgnn::eval::{evaluate, write_json, FluxPredictor};
use kgfgnn::model::checkpoint_load;
use kgfgnn::pipeline::{run_experiment, train_run, RunConfig, SPLIT_FRACTIONS};
use kgfgnn::training::gradcheck;
use kgfgnn::{Error, Result};

#[derive(Parser)]
#[command(name = "kgfgnn", version, about = "Graph-network regression of soil GHG flux trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write its checkpoint and loss trace.
    Train(TrainArgs),
    /// Train the single-head ablation.
    Ablate {
        #[arg(long)]
        single_head: bool,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        scatter: Option<PathBuf>,
    },
    /// Predict flux trajectories for feature rows.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit and score a tuned linear baseline.
    Baseline {
        #[arg(long)]
        method: BaselineKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        gas: Gas,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
    /// Repeat split, fit and test evaluation over consecutive seeds.
    Experiment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        gas: Gas,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// First seed; defaults to the config's train seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        single_head: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    gas: Gas,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn train(args: &TrainArgs, single_head: bool) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    cfg.model.single_head |= single_head;
    let records = csv_read(&args.data)?;
    let run = train_run(&records, args.gas, &cfg.model, &cfg.train, args.seed)?;
    run.write(&args.out)?;
    let eval = evaluate(&run.checkpoint, &run.splits.test, args.gas, "test")?;
    write_json(&eval.report, args.out.join("report.json"))?;
    if let Some(last) = run.trace.last() {
        println!("epochs {}  final train loss {:.6}", last.epoch, last.train.total);
    }
    print!("{}", eval.report.table());
    println!("wrote {}", args.out.join("model.ckpt.json").display());
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { n, seed, noise, out } => {
            let records = generate(&GeneratorConfig::new(n, seed, noise))?;
            csv_write(&records, &out)?;
            println!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Train(args) => train(&args, false)?,
        Command::Ablate { single_head, train: args } => {
            if !single_head {
                return Err(Error::usage("ablate currently supports only --single-head"));
            }
            train(&args, true)?;
        }
        Command::Eval {
            model,
            data,
            report,
            scatter,
        } => {
            let ckpt = checkpoint_load(&model)?;
            let records = csv_read(&data)?;
            let eval = evaluate(&ckpt, &records, ckpt.gas(), "all")?;
            write_json(&eval.report, &report)?;
            if let Some(dir) = scatter {
                eval.write_scatter(dir)?;
            }
            print!("{}", eval.report.table());
        }
        Command::Predict { model, input, out } => {
            let ckpt = checkpoint_load(&model)?;
            let records = csv_read_features(&input)?;
            let preds = ckpt.predict(&records)?;
            let ids: Vec<u64> = records.iter().map(|r| r.sample_id).collect();
            predictions_write(&out, ckpt.gas(), &ids, &preds)?;
            println!("wrote {} predictions to {}", preds.len(), out.display());
        }
        Command::Baseline {
            method,
            data,
            gas,
            report,
            seed,
        } => {
            let records = csv_read(&data)?;
            let parts = split(&records, seed, SPLIT_FRACTIONS)?;
            let model = fit_baseline(method, gas, &parts.train, &parts.val)?;
            let eval = evaluate(&model, &parts.test, gas, "test")?;
            write_json(&eval.report, &report)?;
            print!("{}", eval.report.table());
        }
        Command::Gradcheck {
            seed,
            config,
            samples,
            step,
        } => {
            let cfg = load_config(config.as_deref())?;
            let report = gradcheck(&cfg.model, seed, samples, step)?;
            println!("{:<28} {:>14} {:>14}", "tensor", "max rel err", "max |grad|");
            for t in &report.tensors {
                println!("{:<28} {:>14.3e} {:>14.3e}", t.name, t.max_rel_error, t.max_abs_analytic);
            }
            let worst = report.max_rel_error();
            if !report.passes(GRADCHECK_TOLERANCE) {
                return Err(Error::Numerical(format!(
                    "gradient check failed: max relative error {worst:.3e} >= {GRADCHECK_TOLERANCE:e}"
                )));
            }
            println!("ok: max relative error {worst:.3e}");
        }
        Command::Experiment {
            data,
            gas,
            seeds,
            out,
            config,
            seed,
            single_head,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.model.single_head |= single_head;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let records = csv_read(&data)?;
            let outcome = run_experiment(&records, gas, &cfg.model, &cfg.train, seeds, Some(&out))?;
            print!("{}", outcome.summary.table());
            println!("wrote {}", out.join("summary.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

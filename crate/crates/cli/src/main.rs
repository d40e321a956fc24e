use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cdm_shape::config::RunConfig;
use cdm_shape::evaluation::{self, UncertaintySummary};
use cdm_shape::{dataset, pipeline, verify, Error};
use clap::{Parser, Subcommand};

/// Continuum manipulator shape estimation from FBG wavelength shifts.
#[derive(Parser, Debug)]
#[command(name = "cdm-shape", version)]
struct Cli {
    /// Run configuration (TOML). Built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the effective configuration as TOML.
    Config,
    /// Simulate all scenarios and write train/test CSVs.
    Gen {
        /// Output directory (default: paths.data_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the network and regression baselines on the training CSV.
    Train {
        /// Dataset directory (default: paths.data_dir).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint directory (default: paths.model_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override training.epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Override training.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score all models on the test splits and write the report files.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Report directory (default: paths.report_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Monte Carlo passes per sample.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predict shapes and confidence intervals for a wavelength CSV
    /// (columns dl1..dl8).
    Infer {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Network checkpoint (default: paths.model_dir/mlp.cdms).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// Interval width in standard deviations.
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize an uncertainty table: calibration statistics and
    /// false-positive count.
    Report {
        /// Uncertainty CSV (default: paths.report_dir/uncertainty.csv).
        #[arg(long)]
        table: Option<PathBuf>,
        /// Tip error above which a row counts as wrong, mm.
        #[arg(long)]
        error_threshold: Option<f64>,
        /// Tip std below which a row counts as confident, mm.
        #[arg(long)]
        std_threshold: Option<f64>,
    },
    /// Run gradient, physics and solver self-checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Exit codes; `2` is reserved for command-line usage errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Failure {
    Other = 1,
    Config = 3,
    Io = 4,
    Data = 5,
    Numeric = 6,
    Verification = 7,
}

impl Failure {
    fn of(err: &Error) -> Self {
        match err {
            Error::Config(_) | Error::Range { .. } => Failure::Config,
            Error::File { .. } | Error::Io(_) => Failure::Io,
            Error::Parse { .. }
            | Error::MissingColumn(_)
            | Error::Csv(_)
            | Error::Checkpoint(_)
            | Error::Shape { .. }
            | Error::Empty(_) => Failure::Data,
            Error::Solver { .. } | Error::Divergence { .. } | Error::RankDeficient { .. } => {
                Failure::Numeric
            }
            Error::Argument(_) => Failure::Other,
        }
    }

    fn kind(self) -> &'static str {
        match self {
            Failure::Other => "argument",
            Failure::Config => "config",
            Failure::Io => "io",
            Failure::Data => "data",
            Failure::Numeric => "numeric",
            Failure::Verification => "verification",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((failure, msg)) => {
            let msg = msg.replace('\n', " ");
            eprintln!("error kind={} code={} msg={msg:?}", failure.kind(), failure as u8);
            ExitCode::from(failure as u8)
        }
    }
}

type CliResult = Result<(), (Failure, String)>;

fn fail(err: Error) -> (Failure, String) {
    (Failure::of(&err), err.to_string())
}

fn run(cli: Cli) -> CliResult {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(fail)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml().map_err(fail)?);
            Ok(())
        }
        Command::Gen { out } => gen(&cfg, out.as_deref().unwrap_or(&cfg.paths.data_dir)),
        Command::Train {
            data,
            out,
            epochs,
            seed,
        } => {
            let mut cfg = cfg.clone();
            cfg.training.epochs = epochs.unwrap_or(cfg.training.epochs);
            cfg.training.seed = seed.unwrap_or(cfg.training.seed);
            train(
                &cfg,
                data.as_deref().unwrap_or(&cfg.paths.data_dir),
                out.as_deref().unwrap_or(&cfg.paths.model_dir),
            )
        }
        Command::Eval {
            data,
            models,
            out,
            k,
            seed,
        } => {
            let mut cfg = cfg.clone();
            cfg.uncertainty.k = k.unwrap_or(cfg.uncertainty.k);
            cfg.uncertainty.seed = seed.unwrap_or(cfg.uncertainty.seed);
            cfg.validate().map_err(fail)?;
            eval(
                &cfg,
                data.as_deref().unwrap_or(&cfg.paths.data_dir),
                models.as_deref().unwrap_or(&cfg.paths.model_dir),
                out.as_deref().unwrap_or(&cfg.paths.report_dir),
            )
        }
        Command::Infer {
            input,
            output,
            model,
            k,
            omega,
            seed,
        } => {
            let model = model.unwrap_or_else(|| cfg.paths.model_dir.join(pipeline::MLP_FILE));
            let u = &cfg.uncertainty;
            infer(
                &input,
                &output,
                &model,
                k.unwrap_or(u.k),
                omega.unwrap_or(u.omega),
                seed.unwrap_or(u.seed),
            )
        }
        Command::Report {
            table,
            error_threshold,
            std_threshold,
        } => {
            let table = table.unwrap_or_else(|| cfg.paths.report_dir.join(pipeline::UNCERTAINTY_CSV));
            report(
                &table,
                error_threshold.unwrap_or(cfg.uncertainty.error_threshold),
                std_threshold.unwrap_or(cfg.uncertainty.std_threshold),
            )
        }
        Command::Verify { seed } => run_verify(seed),
    }
}

fn gen(cfg: &RunConfig, out: &Path) -> CliResult {
    let (split, stats) = pipeline::generate(cfg).map_err(fail)?;
    pipeline::write_split(&split, &stats, out).map_err(fail)?;
    println!(
        "generated train={} test_id={} test_ood={} skipped={} ({:.3} %) max_penetration_mm={:.3e} -> {}",
        split.train.len(),
        split.test_id.len(),
        split.test_ood.len(),
        stats.skipped,
        100.0 * stats.skip_fraction(),
        stats.max_penetration,
        out.display()
    );
    Ok(())
}

fn train(cfg: &RunConfig, data: &Path, out: &Path) -> CliResult {
    let samples = dataset::read_csv(data.join(pipeline::TRAIN_CSV)).map_err(fail)?;
    let models = pipeline::train_models(cfg, &samples).map_err(fail)?;
    pipeline::save_models(&models, out).map_err(fail)?;
    let last = models.curve.last();
    println!(
        "trained rows={} epochs={} final_train_mse={} final_val_mse={} linear_rms={:.4} poly2_rms={:.4} -> {}",
        samples.len(),
        models.curve.len(),
        last.map_or(f64::NAN, |e| e.train_mse),
        last.and_then(|e| e.val_mse).map_or(f64::NAN, |v| v),
        models.linear.residual(),
        models.poly2.residual(),
        out.display()
    );
    Ok(())
}

fn eval(cfg: &RunConfig, data: &Path, models: &Path, out: &Path) -> CliResult {
    let split = pipeline::read_split(data).map_err(fail)?;
    let models = pipeline::load_models(models).map_err(fail)?;
    let result = pipeline::evaluate(cfg, &models, &split).map_err(fail)?;
    pipeline::write_evaluation(&result, out).map_err(fail)?;
    print!("{}", result.report.render());
    Ok(())
}

fn infer(input: &Path, output: &Path, model: &Path, k: usize, omega: f64, seed: u64) -> CliResult {
    let frames = dataset::read_features_csv(input).map_err(fail)?;
    let model = cdm_shape::nn::MlpModel::load(model).map_err(fail)?;
    let rows = pipeline::infer(&model, &frames, k, omega, seed).map_err(fail)?;
    pipeline::write_inference_csv(&rows, output).map_err(fail)?;
    println!("inferred rows={} k={k} omega={omega} -> {}", rows.len(), output.display());
    Ok(())
}

fn report(table: &Path, error_threshold: f64, std_threshold: f64) -> CliResult {
    let rows = evaluation::read_uncertainty_csv(table).map_err(fail)?;
    let summary = UncertaintySummary::from_table(&rows, 0, error_threshold, std_threshold).map_err(fail)?;
    println!("rows={}", summary.rows);
    println!("mean_tip_std_id_mm={}", summary.mean_tip_std_id);
    if let Some(ood) = summary.mean_tip_std_ood {
        println!("mean_tip_std_ood_mm={ood}");
    }
    println!("spearman={}", summary.spearman);
    println!(
        "false_positives={} fraction={} error_threshold_mm={error_threshold} std_threshold_mm={std_threshold}",
        summary.false_positives,
        summary.false_positive_fraction()
    );
    Ok(())
}

fn run_verify(seed: u64) -> CliResult {
    let checks = verify::run_all(seed).map_err(fail)?;
    for c in &checks {
        println!(
            "{} {} value={:e} limit={:e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.limit
        );
    }
    match checks.iter().filter(|c| !c.passed).count() {
        0 => Ok(()),
        n => Err((Failure::Verification, format!("{n} self-checks failed"))),
    }
}

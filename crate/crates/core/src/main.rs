//! Command-line surface: fitting, bias reports, bootstrap intervals,
//! benchmark conversion, simulation, and the experiment drivers.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/config error, 3 the fit did
//! not converge (results are still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ratekit::bridge::{benchmark_to_games, default_grid, tune_w};
use ratekit::features::bias_report;
use ratekit::io::{
    build_leaderboard, games_to_string, parse_benchmark, parse_games, AppConfig,
};
use ratekit::model::{Dataset, FeatureSpec, PriorSpec, RatingParameters};
use ratekit::optimizer::FitResult;
use ratekit::sim::{
    comparison_csv, equivalence_csv, equivalence_experiment, generate,
    model_comparison_experiment, sample_efficiency_experiment, EfficiencyScenario,
    EfficiencyVariant, GroundTruth,
};
use ratekit::uncertainty::bootstrap_fit;
use ratekit::{fit, LikelihoodModel, RatingError, Result};

#[derive(Parser)]
#[command(name = "ratekit", version, about = "Pairwise-preference rating engine")]
struct Cli {
    /// TOML run configuration; CLI flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// bradley_terry | rao_kupper | davidson | accuracy_based
    #[arg(long, global = true)]
    likelihood: Option<String>,
    /// Draw parameter for rao_kupper / davidson.
    #[arg(long, global = true)]
    theta: Option<f64>,
    /// Rating points per 10x odds.
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Mean base rating after anchoring.
    #[arg(long, global = true)]
    anchor: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct BootstrapArgs {
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Fit ratings on a JSONL game file and print the leaderboard.
    Fit {
        games: PathBuf,
        /// Write the machine-readable leaderboard JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit with bootstrap intervals and print the leaderboard.
    Bootstrap {
        games: PathBuf,
        #[command(flatten)]
        bootstrap: BootstrapArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report shared bias coefficients and influences with intervals.
    BiasReport {
        games: PathBuf,
        #[command(flatten)]
        bootstrap: BootstrapArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a benchmark CSV into JSONL games.
    ConvertBenchmark {
        benchmark: PathBuf,
        /// Win-rate rescaling parameter.
        #[arg(long, default_value_t = 1.0)]
        w: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick the win-rate rescaling that best matches human training games.
    TuneW {
        benchmark: PathBuf,
        games: PathBuf,
    },
    /// Draw synthetic games from a ground-truth JSON description.
    Simulate {
        truth: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment driver and emit its CSV table.
    Experiment {
        #[command(subcommand)]
        which: ExperimentCommand,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Games-to-target comparison of warm-start strategies on a new task.
    Efficiency {
        #[arg(long, default_value = "250,500,1000,2000,4000,8000", value_delimiter = ',')]
        budgets: Vec<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Joint-versus-separate task-rating discrepancy across dataset sizes.
    Equivalence {
        #[arg(long, default_value = "1000,10000,100000", value_delimiter = ',')]
        sizes: Vec<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Held-out loss curves for the alternative likelihood models.
    CompareLikelihoods {
        games: PathBuf,
        #[arg(long, default_value = "500,1000,2000", value_delimiter = ',')]
        train_sizes: Vec<u64>,
        #[arg(long, default_value_t = 0.2)]
        heldout_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version as "errors"; those are success
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Resolved run settings: config file values overridden by CLI flags.
struct Settings {
    likelihood: LikelihoodModel,
    specs: Vec<FeatureSpec>,
    priors: PriorSpec,
    fit_config: ratekit::FitConfig,
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut config = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    if let Some(kind) = &cli.likelihood {
        config.likelihood.kind = Some(kind.clone());
    }
    if let Some(theta) = cli.theta {
        config.likelihood.theta = Some(theta);
    }
    if let Some(scale) = cli.scale {
        config.likelihood.scale = Some(scale);
    }
    if let Some(anchor) = cli.anchor {
        config.priors.anchor = Some(anchor);
    }
    let specs = config.feature_specs()?;
    Ok(Settings {
        likelihood: config.likelihood()?,
        priors: config.priors(&specs)?,
        specs,
        fit_config: config.fit_config()?,
    })
}

fn load_games(path: &Path) -> Result<Dataset> {
    let (dataset, warnings) = parse_games(path)?;
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    Ok(dataset)
}

fn write_output(out: Option<&PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn fit_dataset(dataset: &Dataset, s: &Settings) -> Result<FitResult> {
    fit(
        dataset,
        &s.specs,
        &s.likelihood,
        &s.priors,
        &s.fit_config,
        None,
    )
}

fn convergence_code(results: &[&FitResult]) -> u8 {
    if results.iter().all(|r| r.converged) {
        0
    } else {
        eprintln!("warning: fit did not converge; results written anyway");
        3
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Fit { games, out } => {
            let s = settings(cli)?;
            let dataset = load_games(games)?;
            let result = fit_dataset(&dataset, &s)?;
            let doc = build_leaderboard(
                &result,
                &dataset,
                None,
                0.95,
                0,
                &s.likelihood,
                &s.priors,
                &s.fit_config,
            )?;
            println!("{}", doc.to_markdown());
            if let Some(path) = out {
                std::fs::write(path, doc.to_json())?;
            }
            Ok(convergence_code(&[&result]))
        }
        Command::Bootstrap {
            games,
            bootstrap,
            out,
        } => {
            let s = settings(cli)?;
            let dataset = load_games(games)?;
            let result = fit_dataset(&dataset, &s)?;
            let samples = bootstrap_fit(
                &dataset,
                &s.specs,
                &s.likelihood,
                &s.priors,
                &s.fit_config,
                bootstrap.replicates,
                bootstrap.seed,
            )?;
            let doc = build_leaderboard(
                &result,
                &dataset,
                Some(&samples),
                bootstrap.confidence,
                bootstrap.seed,
                &s.likelihood,
                &s.priors,
                &s.fit_config,
            )?;
            println!("{}", doc.to_markdown());
            if let Some(path) = out {
                std::fs::write(path, doc.to_json())?;
            }
            Ok(convergence_code(&[&result]))
        }
        Command::BiasReport {
            games,
            bootstrap,
            out,
        } => {
            let s = settings(cli)?;
            if !s
                .specs
                .iter()
                .any(|spec| spec.kind == ratekit::model::FeatureKind::Shared)
            {
                return Err(RatingError::InvalidConfig(
                    "bias-report needs at least one shared feature in the config".into(),
                ));
            }
            let dataset = load_games(games)?;
            let result = fit_dataset(&dataset, &s)?;
            let samples = bootstrap_fit(
                &dataset,
                &s.specs,
                &s.likelihood,
                &s.priors,
                &s.fit_config,
                bootstrap.replicates,
                bootstrap.seed,
            )?;
            let report = bias_report(&result, &dataset, &samples, bootstrap.confidence)?;
            let json = serde_json::to_string_pretty(&report)
                .expect("bias report serializes");
            write_output(out.as_ref(), &format!("{json}\n"))?;
            Ok(convergence_code(&[&result]))
        }
        Command::ConvertBenchmark { benchmark, w, out } => {
            let bench = parse_benchmark(benchmark)?;
            let games = benchmark_to_games(&bench, *w)?;
            write_output(out.as_ref(), &games_to_string(&games))?;
            Ok(0)
        }
        Command::TuneW { benchmark, games } => {
            let s = settings(cli)?;
            let bench = parse_benchmark(benchmark)?;
            let human = load_games(games)?;
            let w = tune_w(
                &bench,
                &human,
                &s.likelihood,
                &s.priors,
                &s.fit_config,
                &default_grid(),
            )?;
            println!("{w}");
            Ok(0)
        }
        Command::Simulate {
            truth,
            n,
            seed,
            out,
        } => {
            let text = std::fs::read_to_string(truth)?;
            let truth: GroundTruth =
                serde_json::from_str(&text).map_err(|e| RatingError::Parse {
                    line: 0,
                    message: format!("ground truth: {e}"),
                })?;
            let dataset = generate(&truth, *n, *seed)?;
            write_output(out.as_ref(), &games_to_string(&dataset))?;
            Ok(0)
        }
        Command::Experiment { which } => run_experiment(which),
    }
}

fn run_experiment(which: &ExperimentCommand) -> Result<u8> {
    match which {
        ExperimentCommand::Efficiency { budgets, seed, out } => {
            let scenario = EfficiencyScenario::default_synthetic(*seed);
            let report = sample_efficiency_experiment(
                &scenario,
                budgets,
                &[
                    EfficiencyVariant::ColdStart,
                    EfficiencyVariant::PriorInformed,
                    EfficiencyVariant::BenchmarkAugmented,
                ],
                seed.wrapping_add(1),
            )?;
            write_output(out.as_ref(), &report.to_csv())?;
            Ok(0)
        }
        ExperimentCommand::Equivalence { sizes, seed, out } => {
            let truth = default_equivalence_truth();
            let points = equivalence_experiment(
                &truth,
                "focus",
                sizes,
                400.0,
                &ratekit::FitConfig::default(),
                *seed,
            )?;
            write_output(out.as_ref(), &equivalence_csv(&points))?;
            Ok(0)
        }
        ExperimentCommand::CompareLikelihoods {
            games,
            train_sizes,
            heldout_fraction,
            seed,
            out,
        } => {
            let dataset = load_games(games)?;
            let likelihoods = [
                LikelihoodModel::bradley_terry(),
                LikelihoodModel::new(ratekit::LikelihoodKind::RaoKupper { theta: 2.0 }, 400.0)?,
                LikelihoodModel::new(ratekit::LikelihoodKind::Davidson { theta: 1.0 }, 400.0)?,
                LikelihoodModel::new(ratekit::LikelihoodKind::Davidson { theta: 0.0 }, 400.0)?,
            ];
            let curves = model_comparison_experiment(
                &dataset,
                &likelihoods,
                train_sizes,
                *heldout_fraction,
                &PriorSpec::flat(1000.0),
                &ratekit::FitConfig::default(),
                *seed,
            )?;
            write_output(out.as_ref(), &comparison_csv(&curves))?;
            Ok(0)
        }
    }
}

/// Deterministic 10-model truth with a "focus" task carrying true modifiers.
fn default_equivalence_truth() -> GroundTruth {
    let models = (0..10)
        .map(|i| ratekit::ModelId(format!("m{i}")))
        .collect::<Vec<_>>();
    let mut params = RatingParameters::zeros(
        models,
        vec![],
        vec![FeatureSpec::task_modifier("focus")],
        1000.0,
    );
    for (i, b) in params.base.iter_mut().enumerate() {
        *b += 35.0 * (i as f64 - 4.5);
    }
    for (i, row) in params.beta.iter_mut().enumerate() {
        row[0] = 8.0 * (((i * 37) % 11) as f64 - 5.0);
    }
    GroundTruth {
        params,
        likelihood: LikelihoodModel::bradley_terry(),
        feature_ranges: Default::default(),
        task_mix: vec![("base".into(), 0.5), ("focus".into(), 0.5)],
        draw_rate: 0.15,
    }
}

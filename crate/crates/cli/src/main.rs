use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lkdl::SamplingMethod;
use lkdl_cli::commands::{self, TestInput};
use lkdl_cli::config::SweepAxis;
use lkdl_cli::{CliError, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "lkdl", version, about = "Linearized kernel dictionary learning")]
struct Cli {
    /// Worker threads for per-sample work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `out`, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-field override, e.g. `--set pipeline.k=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::load(&self.config, &self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let out = self.out.clone().unwrap_or_else(|| cfg.out_dir());
        Ok((cfg, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the Nystrom map and write virtual train/test samples.
    Preprocess(Common),
    /// Train the configured model.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train on a saved virtual-sample file instead of the dataset.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Classify test samples with a saved model.
    Classify {
        #[arg(long)]
        model: PathBuf,
        /// Config whose test split is classified (with its corruption).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Nystrom map applied to the config's test samples.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Saved virtual test samples, instead of --config.
        #[arg(long, conflicts_with_all = ["config", "map"])]
        features: Option<PathBuf>,
        /// LC-KSVD test cardinality (default: the training one).
        #[arg(long)]
        test_q: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the pipeline `repeats` times and report accuracy and timings.
    Experiment(Common),
    /// Repeat the experiment along one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// c_over_N, noise_sigma, missing_fraction or train_fraction.
        #[arg(long)]
        axis: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Nystrom approximation error per sampler and landmark fraction.
    ApproxError {
        #[command(flatten)]
        common: Common,
        /// Samplers to compare (default: all five).
        #[arg(long, value_delimiter = ',')]
        samplers: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.4")]
        fractions: Vec<f64>,
        /// Eigenpairs kept; `k = c` when absent.
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Train and evaluate LC-KSVD and write per-atom coefficient sums.
    Lcksvd(Common),
}

fn parse_sampler(s: &str) -> Result<SamplingMethod> {
    SamplingMethod::ALL
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| CliError::Config(format!("unknown sampler {s:?}")))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Preprocess(c) => {
            let (cfg, out) = c.load()?;
            let r = commands::preprocess(&cfg, &out)?;
            println!("virtual samples: k={} train={} test={} -> {}", r.k, r.n_train, r.n_test, out.display());
        }
        Command::Train { common, features } => {
            let (cfg, out) = common.load()?;
            let r = commands::train(&cfg, &out, features.as_deref())?;
            println!("trained {} classes in {:.3}s -> {}", r.classes.len(), r.t_train, r.model.display());
        }
        Command::Classify {
            model,
            config,
            map,
            features,
            test_q,
            seed,
            out,
            overrides,
        } => {
            let input = match (features, config) {
                (Some(f), _) => TestInput::Features(f),
                (None, Some(path)) => {
                    let mut cfg = ExperimentConfig::load(&path, &overrides)?;
                    if let Some(s) = seed {
                        cfg.seed = s;
                    }
                    TestInput::Config {
                        cfg: Box::new(cfg),
                        map,
                    }
                }
                (None, None) => return Err(CliError::Config("classify needs --config or --features".into())),
            };
            let out = out.unwrap_or_else(|| PathBuf::from("out"));
            let r = commands::classify(&model, &input, test_q, &out)?;
            println!("accuracy {:.4} on {} samples -> {}", r.accuracy, r.n, r.predictions.display());
        }
        Command::Experiment(c) => {
            let (cfg, out) = c.load()?;
            let r = commands::experiment(&cfg, &out)?;
            if let Some(s) = r.summary {
                println!(
                    "accuracy {:.4} +- {:.4} over {} repeats -> {}",
                    s.accuracy.mean,
                    s.accuracy.std,
                    s.repeats,
                    out.display()
                );
            }
            for f in &r.failures {
                eprintln!("failed {f}");
            }
        }
        Command::Sweep { common, axis, values } => {
            let (cfg, out) = common.load()?;
            let (axis, values) = match (axis, &cfg.sweep) {
                (Some(a), _) => (SweepAxis::parse(&a)?, values),
                (None, Some(s)) => (s.axis, if values.is_empty() { s.values.clone() } else { values }),
                (None, None) => return Err(CliError::Config("sweep needs --axis or a [sweep] table".into())),
            };
            let r = commands::sweep(&cfg, axis, &values, &out)?;
            for p in &r.points {
                if let Some(s) = &p.summary {
                    println!("{}={} accuracy {:.4} +- {:.4}", r.axis, p.value, s.accuracy.mean, s.accuracy.std);
                }
            }
        }
        Command::ApproxError {
            common,
            samplers,
            fractions,
            rank,
        } => {
            let (cfg, out) = common.load()?;
            let samplers = if samplers.is_empty() {
                SamplingMethod::ALL.to_vec()
            } else {
                samplers.iter().map(|s| parse_sampler(s)).collect::<Result<_>>()?
            };
            let rows = commands::approx_error(&cfg, &samplers, &fractions, rank, &out)?;
            println!("{} rows -> {}", rows.len(), out.join(commands::APPROX_FILE).display());
        }
        Command::Lcksvd(c) => {
            let (cfg, out) = c.load()?;
            let r = commands::lcksvd(&cfg, &out)?;
            println!("accuracy {:.4} -> {}", r.accuracy, Path::new(&out).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

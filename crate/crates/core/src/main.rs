//! Command-line front end for the analysis pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use careerplane::career::WindowAlignment;
use careerplane::cli::{run_subcommand, RunConfig};
use careerplane::normalize::NullSampling;
use careerplane::transitions::GapPolicy;

#[derive(Parser)]
#[command(
    name = "careerplane",
    version,
    about = "Career-level analysis of researcher productivity and journal prestige"
)]
struct Args {
    /// JSON configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for every randomized stage.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Null-model realizations per (discipline, year, productivity) cell.
    #[arg(long, global = true)]
    realizations: Option<usize>,

    /// Career-shuffle realizations for the transition null.
    #[arg(long, global = true)]
    shuffles: Option<usize>,

    /// Outlier threshold on the standard scores.
    #[arg(long, global = true)]
    tau: Option<f64>,

    /// MCMC chains.
    #[arg(long, global = true)]
    chains: Option<usize>,

    /// MCMC iterations per chain.
    #[arg(long, global = true)]
    iters: Option<usize>,

    /// Burn-in iterations discarded per chain.
    #[arg(long, global = true)]
    burn_in: Option<usize>,

    /// Null sampling: with or without replacement.
    #[arg(long, global = true, value_enum)]
    null_replacement: Option<NullReplacementArg>,

    /// Publication-gap policy for transition chains.
    #[arg(long, global = true, value_enum)]
    gap_policy: Option<GapPolicyArg>,

    /// Career-age window alignment for the trends.
    #[arg(long, global = true, value_enum)]
    window: Option<WindowArg>,

    /// Publications CSV/JSONL (defaults to <out>/corpus/publications.csv).
    #[arg(long, global = true)]
    publications: Option<PathBuf>,

    /// Journal metric CSV/JSONL.
    #[arg(long, global = true)]
    metrics: Option<PathBuf>,

    /// Researcher metadata CSV/JSONL.
    #[arg(long, global = true)]
    meta: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NullReplacementArg {
    With,
    Without,
}

#[derive(Clone, Copy, ValueEnum)]
enum GapPolicyArg {
    Break,
    Bridge,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Centered,
    Trailing,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted ground truth.
    Synth,
    /// Load, validate, join, and filter the corpus into career series.
    Ingest,
    /// Attach productivity and prestige standard scores.
    Normalize,
    /// Classify sectors, categorize researchers, count categories.
    Classify,
    /// Transition counts against the career-shuffle null.
    Transitions,
    /// Sector-occupation entropy distributions.
    Entropy,
    /// Logistic fits and group permutation tests.
    Logistic,
    /// Career-age trends and occupancy matrices.
    Career,
    /// Hierarchical Bayesian fits per discipline.
    Bayes,
    /// Render figures and collect tables.
    Report,
    /// Run every stage in order.
    All,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::Normalize => "normalize",
            Command::Classify => "classify",
            Command::Transitions => "transitions",
            Command::Entropy => "entropy",
            Command::Logistic => "logistic",
            Command::Career => "career",
            Command::Bayes => "bayes",
            Command::Report => "report",
            Command::All => "all",
        }
    }
}

fn build_config(args: &Args) -> Result<RunConfig, careerplane::Error> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(threads) = args.threads {
        cfg.threads = Some(threads);
    }
    if let Some(realizations) = args.realizations {
        cfg.realizations = realizations;
    }
    if let Some(shuffles) = args.shuffles {
        cfg.shuffles = shuffles;
    }
    if let Some(tau) = args.tau {
        cfg.tau = tau;
    }
    if let Some(chains) = args.chains {
        cfg.chains = chains;
    }
    if let Some(iters) = args.iters {
        cfg.iters = iters;
    }
    if let Some(burn_in) = args.burn_in {
        cfg.burn_in = burn_in;
    }
    if let Some(mode) = args.null_replacement {
        cfg.null_replacement = match mode {
            NullReplacementArg::With => NullSampling::WithReplacement,
            NullReplacementArg::Without => NullSampling::WithoutReplacement,
        };
    }
    if let Some(policy) = args.gap_policy {
        cfg.gap_policy = match policy {
            GapPolicyArg::Break => GapPolicy::Break,
            GapPolicyArg::Bridge => GapPolicy::Bridge,
        };
    }
    if let Some(window) = args.window {
        cfg.window = match window {
            WindowArg::Centered => WindowAlignment::Centered,
            WindowArg::Trailing => WindowAlignment::Trailing,
        };
    }
    if let Some(p) = &args.publications {
        cfg.publications = Some(p.clone());
    }
    if let Some(m) = &args.metrics {
        cfg.metrics = Some(m.clone());
    }
    if let Some(m) = &args.meta {
        cfg.meta = Some(m.clone());
    }
    if cfg.burn_in >= cfg.iters {
        return Err(careerplane::Error::Config("burn_in must be smaller than iters".into()));
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            // Help/version requests are not usage errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let cfg = match build_config(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    let stages: Vec<&str> = match args.command {
        Command::All => careerplane::cli::STAGES.to_vec(),
        ref single => vec![single.name()],
    };
    for stage in stages {
        if let Err(e) = run_subcommand(stage, &cfg) {
            eprintln!("error in {stage}: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    }
    ExitCode::SUCCESS
}

use clap::{Parser, Subcommand};
use contab::error::Error;
use contab::pipeline;
use std::path::PathBuf;
use std::process::ExitCode;

/// Cohort-level mutation-signature embeddings and clustering.
#[derive(Debug, Parser)]
#[command(name = "contab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a mutation TSV into gene and chromosome feature tables.
    Featurize {
        #[arg(long)]
        input: PathBuf,
        /// Column-name mapping (JSON); defaults to COSMIC headers.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Chromosome lengths (JSON map); defaults to GRCh38.
        #[arg(long)]
        lengths: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the dual encoders and write cohort embeddings.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// Run config or a previous manifest.json.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster an embedding table and write the report files.
    Evaluate {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        /// Features directory, enabling spectra, top genes and ARI.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several methods on the same features and tabulate their scores.
    Compare {
        #[arg(long)]
        features: PathBuf,
        /// Comma-separated: ms-contab,nmf,hierarchical,ae,simclr,deepcluster.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a planted two-cluster features directory.
    Synth {
        #[arg(long, default_value_t = 40)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> contab::error::Result<()> {
    match cli.command {
        Command::Featurize {
            input,
            schema,
            lengths,
            out,
        } => {
            let m = pipeline::cmd_featurize(&pipeline::FeaturizeArgs {
                input: &input,
                schema: schema.as_deref(),
                lengths: lengths.as_deref(),
                out: &out,
            })?;
            eprintln!("featurized {} cohorts into {}", m.cohort_count, out.display());
        }
        Command::Train { features, config, out } => {
            pipeline::cmd_train(&features, config.as_deref(), &out)?;
            eprintln!("wrote embeddings to {}", out.join("embeddings.csv").display());
        }
        Command::Evaluate {
            embeddings,
            k,
            features,
            config,
            out,
        } => {
            pipeline::cmd_evaluate(&embeddings, features.as_deref(), config.as_deref(), k, &out)?;
            eprintln!("wrote cluster report to {}", out.display());
        }
        Command::Compare {
            features,
            methods,
            config,
            out,
        } => {
            let (table, _) = pipeline::cmd_compare(&features, config.as_deref(), methods.as_deref(), &out)?;
            println!("{}", table.to_text());
        }
        Command::Synth {
            n,
            seed,
            separation,
            out,
        } => {
            pipeline::cmd_synth(n, seed, separation, &out)?;
            eprintln!("wrote {n} synthetic cohorts to {}", out.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

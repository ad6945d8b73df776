use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fsgcl::pipeline::{
    cmd_ablate, cmd_eval, cmd_mine, cmd_preprocess, cmd_synth, cmd_train, EvalInputs, EvalMode, MotifSpec,
    PipelineConfig,
};
use fsgcl::Error;

#[derive(Parser)]
#[command(name = "fsgcl", version, about = "Motif-guided semantic graph contrastive learning")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Logistic,
    Mlknn,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as TOML.
    Config,
    /// Generate a synthetic overlapping-community graph.
    Synth,
    /// Count motif instances and write co-occurrence matrices.
    Mine,
    /// Build semantic graphs and the diffusion matrix.
    Preprocess,
    /// Build semantic graphs only, with optional overrides.
    BuildSemantic {
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated built-in motif names.
        #[arg(long, value_delimiter = ',')]
        motifs: Vec<String>,
    },
    /// Train (preprocessing first when needed) and write embeddings.
    Train,
    /// Evaluate frozen embeddings.
    Eval {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Train and evaluate the full model and its six ablations.
    Ablate,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) => 3,
        Error::Parse { .. } => 4,
        Error::Io { .. } => 5,
        Error::Shape { .. } => 6,
        Error::Numeric { .. } => 7,
        Error::Contract(_) => 8,
        Error::Infeasible(_) => 9,
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("reports serialize"));
}

fn run(cli: Cli) -> fsgcl::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    match cli.command {
        Command::Config => print!("{}", cfg.to_toml()),
        Command::Synth => print_json(&cmd_synth(&cfg)?),
        Command::Mine => {
            for (name, count) in cmd_mine(&cfg)? {
                println!("{name}: {count}");
            }
        }
        Command::Preprocess => print_json(&cmd_preprocess(&cfg)?),
        Command::BuildSemantic { k, motifs } => {
            if let Some(k) = k {
                cfg.semantic.k = k;
            }
            if !motifs.is_empty() {
                cfg.motifs = motifs.iter().map(|m| MotifSpec::builtin(m)).collect();
            }
            print_json(&cmd_preprocess(&cfg)?);
        }
        Command::Train => {
            let out = cmd_train(&cfg)?;
            if let Some(last) = out.trace.last() {
                println!("trained {} steps, final loss {}", out.trace.len(), last.loss.total);
            }
            println!("embeddings: {}", cfg.out(fsgcl::pipeline::EMBEDDINGS_FILE).display());
        }
        Command::Eval { embeddings, labels, mode } => {
            let mode = mode.map(|m| match m {
                Mode::Logistic => EvalMode::Logistic,
                Mode::Mlknn => EvalMode::Mlknn,
            });
            print_json(&cmd_eval(&cfg, &EvalInputs { embeddings, labels, mode })?);
        }
        Command::Ablate => {
            for row in cmd_ablate(&cfg)? {
                println!("{:<16} {:.4} ± {:.4}", row.variant, row.report.mean, row.report.std);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lenctl::encoding::{Family, DEFAULT_BASE};
use lenctl::eval::Unit;
use lenctl_cli::{
    cmd_evaluate, cmd_generate, cmd_pe_dump, cmd_train, exit_code, EvaluateArgs, GenerateArgs,
    PeDumpArgs,
};

#[derive(Parser)]
#[command(
    name = "lenctl",
    about = "Length-controlled sequence generation toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a run configuration file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration file.
        #[arg(long)]
        seed: Option<u64>,
        /// Target lengths to drop from the training split, comma separated.
        #[arg(long, value_delimiter = ',')]
        exclude_lengths: Option<Vec<usize>>,
    },
    /// Decode a JSONL input file at a requested length.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Desired output length in characters.
        #[arg(long)]
        len: Option<u32>,
        #[arg(long, default_value_t = 4)]
        beam: usize,
        #[arg(long, default_value_t = 1)]
        nbest: usize,
        /// Replace the top hypothesis with the source-overlap re-ranked one.
        #[arg(long)]
        rerank: bool,
    },
    /// Score generated outputs against references.
    Evaluate {
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long)]
        references: PathBuf,
        /// Token unit for ROUGE: char or word.
        #[arg(long, default_value = "char")]
        unit: Unit,
        /// DUC-style byte limit applied to candidates before ROUGE.
        #[arg(long)]
        truncate_bytes: Option<usize>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Dump an encoding table as CSV.
    PeDump {
        /// none, pe, ldpe, lrpe, ldpe+pe, lrpe+pe
        #[arg(long)]
        family: Family,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = DEFAULT_BASE)]
        base: f64,
        #[arg(long)]
        len: Option<u32>,
        #[arg(long, default_value_t = 32)]
        max_pos: usize,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            config,
            seed,
            exclude_lengths,
        } => cmd_train(&config, seed, exclude_lengths).map(|dir| {
            println!("artifacts written to {}", dir.display());
        }),
        Command::Generate {
            checkpoint,
            input,
            output,
            len,
            beam,
            nbest,
            rerank,
        } => cmd_generate(&GenerateArgs {
            checkpoint,
            input,
            output,
            len,
            beam,
            nbest,
            rerank,
        }),
        Command::Evaluate {
            outputs,
            references,
            unit,
            truncate_bytes,
            report,
            histogram,
        } => cmd_evaluate(&EvaluateArgs {
            outputs,
            references,
            unit,
            truncate_bytes,
            report,
            histogram,
        }),
        Command::PeDump {
            family,
            dim,
            base,
            len,
            max_pos,
            out,
        } => cmd_pe_dump(&PeDumpArgs {
            family,
            dim,
            base,
            len,
            max_pos,
            out: out.clone(),
        })
        .map(|csv| {
            if out.is_none() {
                print!("{csv}");
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

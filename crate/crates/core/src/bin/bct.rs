//! Command-line front end: reads `BCT_input.txt` and `data.txt`, writes the
//! four report files.

use std::path::PathBuf;
use std::process::ExitCode;

use bct::io::{self, RunOptions};
use bct::Error;
use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "bct", version, about = "Bayes factor tests of equality and order constraints on correlations")]
struct Args {
    /// Input file with the model, hypotheses and implementation details.
    #[arg(long, default_value = io::INPUT_FILE)]
    input: PathBuf,
    /// Whitespace-separated data file.
    #[arg(long, default_value = io::DATA_FILE)]
    data: PathBuf,
    /// Directory for the report files.
    #[arg(long, default_value = ".")]
    outdir: PathBuf,
    /// Number of independent MCMC chains; the posterior draws are split over them.
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Burn-in iterations per chain.
    #[arg(long, default_value_t = 2000)]
    burn_in: usize,
    /// Suppress progress messages (warnings are still shown).
    #[arg(long)]
    quiet: bool,
    /// Write CRLF line endings.
    #[arg(long)]
    crlf: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let options = RunOptions {
        input: args.input,
        data: args.data,
        outdir: args.outdir,
        chains: args.chains,
        burn_in: args.burn_in,
        crlf: args.crlf,
    };
    let quiet = args.quiet;
    let mut progress = |msg: &str| {
        if !quiet {
            eprintln!("bct: {msg}");
        }
    };
    match io::run(&options, &mut progress) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("bct: warning: {w}");
            }
            if !quiet {
                for p in &outcome.written {
                    eprintln!("bct: wrote {}", p.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("bct: error: {line}");
            match e {
                Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ipnpep::fec::{replay, DEFAULT_DELTA};
use ipnpep::galois::{check_golden_vectors, parse_golden_vectors, GOLDEN_VECTORS_CSV};
use ipnpep::harness::run_experiment;
use ipnpep::queueing::{run_sweep, Sweep};

const EXIT_INVARIANT: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "ipnpep", version, about = "Split-connection proxy simulator for long-delay links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV artifacts.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate queue models over a parameter sweep; CSV on stdout.
    QueueModel {
        #[arg(long)]
        sweep: PathBuf,
    },
    /// Replay a loss trace through the FEC encoder and decoder; CSV on stdout.
    FecReplay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Loss estimate used by the encoder.
        #[arg(long, default_value_t = 0.01)]
        p_e: f64,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
    },
    /// Check coefficient golden vectors.
    Vectors {
        #[arg(long)]
        check: bool,
        /// Vector file; the built-in set when absent.
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn read(path: &PathBuf) -> Result<String, ExitCode> {
    fs::read_to_string(path).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, seed, out } => match run_experiment(&scenario, seed, &out) {
            Ok(r) => {
                let rep = &r.report;
                println!(
                    "{}: {} flow(s) done in {:.3} s, goodput {:.3} Mbps, artifacts in {}",
                    rep.scenario,
                    rep.flows,
                    rep.last_completion_s,
                    rep.goodput_bps / 1e6,
                    out.display()
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(e.exit_code() as u8, &e),
        },
        Command::QueueModel { sweep } => {
            let text = match read(&sweep) {
                Ok(t) => t,
                Err(c) => return c,
            };
            let parsed = match Sweep::parse(&text) {
                Ok(s) => s,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            match run_sweep(&parsed) {
                Ok(csv) => {
                    print!("{csv}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_INVARIANT, e),
            }
        }
        Command::FecReplay { trace, seed, p_e, delta } => {
            let text = match read(&trace) {
                Ok(t) => t,
                Err(c) => return c,
            };
            let events = match replay::parse_trace(&text) {
                Ok(ev) => ev,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            match replay::replay(&events, seed, p_e, delta) {
                Ok(rep) if rep.mismatches == 0 => {
                    print!("{}", rep.to_csv());
                    ExitCode::SUCCESS
                }
                Ok(rep) => fail(EXIT_INVARIANT, format!("{} recovered symbols differ from the original", rep.mismatches)),
                Err(e) => fail(EXIT_INVARIANT, e),
            }
        }
        Command::Vectors { check, file } => {
            let text = match &file {
                Some(p) => match read(p) {
                    Ok(t) => t,
                    Err(c) => return c,
                },
                None => GOLDEN_VECTORS_CSV.to_string(),
            };
            let vectors = match parse_golden_vectors(&text) {
                Ok(v) => v,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            if !check {
                print!("{text}");
                return ExitCode::SUCCESS;
            }
            let bad = check_golden_vectors(&vectors);
            for (v, got) in &bad {
                eprintln!("mismatch: seed={} k={} i={} expected {} got {got}", v.seed, v.k, v.i, v.coefficient);
            }
            if bad.is_empty() {
                println!("{} vectors OK", vectors.len());
                ExitCode::SUCCESS
            } else {
                fail(EXIT_INVARIANT, format!("{} of {} vectors mismatch", bad.len(), vectors.len()))
            }
        }
    }
}


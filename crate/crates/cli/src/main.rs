use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use entropy_gas_lab::report::ensure_writable;
use entropy_gas_lab::{
    parse_config, run_experiment, write_report, ConfigSource, Subcommand, EXIT_ERROR, EXIT_USAGE,
};

#[derive(Parser)]
#[command(name = "entropy-gas-lab", version, about = "Entropy and energy experiments")]
enum Cli {
    /// Free-energy decay of a finite Markov chain
    Markov(RunArgs),
    /// Entropy along the central limit theorem and the heat flow
    Clt(RunArgs),
    /// Free central limit theorem and Kesten-McKay moments
    Free(RunArgs),
    /// Confined particle gas sampled by MALA
    Gas(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in config by name
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overrides out_dir
    #[arg(long)]
    out: Option<PathBuf>,
}

fn threads() -> Result<usize, String> {
    match std::env::var("ENTROPY_LAB_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(format!("ENTROPY_LAB_THREADS must be a positive integer, got '{v}'")),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let (subcommand, args) = match cli {
        Cli::Markov(a) => (Subcommand::Markov, a),
        Cli::Clt(a) => (Subcommand::Clt, a),
        Cli::Free(a) => (Subcommand::Free, a),
        Cli::Gas(a) => (Subcommand::Gas, a),
    };
    let text = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return ExitCode::from(EXIT_USAGE as u8);
            }
        },
        None => None,
    };
    let source = ConfigSource {
        text,
        preset: args.preset,
        seed: args.seed,
        out_dir: args.out,
    };
    let mut config = match parse_config(subcommand, &source) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    config.threads = match threads() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    if let Err(e) = ensure_writable(&config.out_dir) {
        eprintln!("error: output directory {} is not writable: {e}", config.out_dir.display());
        return ExitCode::from(EXIT_ERROR as u8);
    }

    let bundle = run_experiment(&config);
    let summary = &bundle.summary;
    for (name, m) in &summary.metrics {
        println!("{:<34} {:>24.16e}  {}", name, m.value, if m.pass { "pass" } else { "FAIL" });
    }
    for w in &summary.warnings {
        println!("warning: {w}");
    }
    if let Some(e) = &summary.error {
        eprintln!("error ({}): {}", e.class, e.message);
    }
    if let Err(e) = write_report(&bundle, &config.out_dir) {
        eprintln!("error: writing the report to {} failed: {e}", config.out_dir.display());
        eprint!("{}", summary.render());
        return ExitCode::from(EXIT_ERROR as u8);
    }
    println!("{} -> {}", summary.status.as_str(), config.out_dir.display());
    ExitCode::from(bundle.exit_code() as u8)
}

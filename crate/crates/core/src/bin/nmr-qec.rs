use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nmr_qec::config::{parse_config, ExperimentConfig};
use nmr_qec::grape;
use nmr_qec::sweep::{fit_report, gnuplot_script, run_sweep, to_csv};

#[derive(Parser)]
#[command(name = "nmr-qec", version, about = "Three-qubit NMR phase-code simulator")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the delay sweep of a configuration and write CSV.
    Run {
        config: PathBuf,
        /// CSV destination; overrides [output] csv. Without either, CSV goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Design a pulse from the [grape] section of a configuration.
    Grape {
        config: PathBuf,
        /// Pulse file destination; overrides [grape] pulse.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Numerical(format!("writing {}: {e}", path.display())))
}

fn run(config: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config)?;
    if cfg.delays_ms.is_empty() {
        return Err(Failure::Config(format!("{}: no [sweep] section to run", config.display())));
    }
    let rows = run_sweep(&cfg).map_err(|e| Failure::Numerical(e.to_string()))?;
    let csv = to_csv(&rows);
    match out.or(cfg.output.csv.clone()) {
        Some(path) => {
            write(&path, &csv)?;
            if let Some(gp) = &cfg.output.gnuplot {
                write(gp, &gnuplot_script(&path.display().to_string(), &cfg.modes))?;
            }
            eprintln!("{} rows written to {}", rows.len(), path.display());
        }
        None => print!("{csv}"),
    }
    if let Some(fits) = &cfg.output.fits {
        write(fits, &fit_report(&rows, &cfg.modes))?;
    }
    Ok(())
}

fn design(config: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config)?;
    let Some(gcfg) = &cfg.grape else {
        return Err(Failure::Config(format!("{}: no [grape] section", config.display())));
    };
    let res = grape::design(gcfg, &cfg.system).map_err(|e| Failure::Numerical(e.to_string()))?;
    eprintln!(
        "fidelity {:.6} after {} iterations ({}), {} slices",
        res.fidelity,
        res.iterations,
        res.status,
        res.pulse.n_slices()
    );
    let path = out.or(gcfg.pulse_out.clone()).unwrap_or_else(|| PathBuf::from("grape.pulse"));
    let mut buf = Vec::new();
    res.pulse.write_to(&mut buf).map_err(|e| Failure::Numerical(e.to_string()))?;
    write(&path, &String::from_utf8_lossy(&buf))?;
    eprintln!("pulse written to {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    // usage errors count as configuration errors (exit 1), not clap's default 2
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match cli.command {
        Command::Run { config, out } => run(&config, out),
        Command::Grape { config, out } => design(&config, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

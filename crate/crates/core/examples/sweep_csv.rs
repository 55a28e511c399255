//! Runs a configured delay sweep, prints the CSV and the quadratic fits.
//!
//! ```text
//! cargo run --release --example sweep_csv [config]
//! ```

use nmr_qec::config::parse_config;
use nmr_qec::sweep::{dominant_error_syndrome, fit_report, run_sweep, to_csv};
use nmr_qec::config::SweepMode;
use nmr_qec::protocol::Mode;

const DEFAULT: &str = "
[system]
builtin: malonic
bath.Cm = 0.25

[channel]
kind = natural
lambda = 0.1
dispersion = lorentzian
t2_star_ms = 2

[sweep]
modes = unencoded, decoded, corrected
delays = 0:1:0.1
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => DEFAULT.to_string(),
    };
    let cfg = parse_config(&text)?;
    let rows = run_sweep(&cfg)?;
    print!("{}", to_csv(&rows));
    println!();
    print!("{}", fit_report(&rows, &cfg.modes));
    if let Some(k) = dominant_error_syndrome(&rows, SweepMode::OneRound(Mode::Corrected)) {
        println!("dominant error syndrome: {}", ["s00", "s10", "s01", "s11"][k]);
    }
    Ok(())
}

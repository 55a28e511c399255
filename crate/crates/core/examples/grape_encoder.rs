//! Designs a 1 ms pulse implementing the encoding unitary on malonic acid,
//! robust over Zeeman dispersion and RF inhomogeneity.
//!
//! ```text
//! cargo run --release --example grape_encoder [out.pulse]
//! ```

use std::time::{Duration, Instant};

use nmr_qec::code::CodeCircuit;
use nmr_qec::grape::{
    optimize_multiresolution, ControlPulse, ControlSystem, GrapeSettings, RobustnessEnsemble,
};
use nmr_qec::noise::DEFAULT_T2_STAR_MS;
use nmr_qec::spin::SpinSystem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ctrl = ControlSystem::new(&SpinSystem::malonic())?;
    let target = CodeCircuit::default().u_encode.clone();
    let ensemble = RobustnessEnsemble::default_for_t2_star(DEFAULT_T2_STAR_MS)?;
    let start = Instant::now();

    let coarse = ControlPulse::smooth_guess(100, 1.0, 5.0)?;
    let settings = GrapeSettings {
        max_iterations: 20_000,
        target_fidelity: 0.998,
        time_limit: Some(Duration::from_secs(600)),
        ..GrapeSettings::default()
    };
    let res = optimize_multiresolution(&coarse, &ctrl, &target, &ensemble, &[10], &settings)?;
    println!(
        "{} slices, fidelity {:.6} after {} iterations ({}), {:.1} s",
        res.pulse.n_slices(),
        res.fidelity,
        res.iterations,
        res.status,
        start.elapsed().as_secs_f64()
    );
    if let Some(path) = std::env::args().nth(1) {
        res.pulse.write_to(std::fs::File::create(&path)?)?;
        println!("pulse written to {path}");
    }
    Ok(())
}

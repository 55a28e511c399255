//! Builds the malonic-acid Hamiltonian and looks at its structure.

use nmr_qec::spin::{build_hamiltonian, coherence_order, SpinSystem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = SpinSystem::malonic();
    let h = build_hamiltonian(&sys, 0.0)?;
    println!("labels: {:?}", sys.labels);
    println!("trace = {:.2e}, hermiticity error = {:.2e}", h.trace().norm(), h.hermiticity_error());
    println!("diagonal (rad/ms):");
    for i in 0..8 {
        println!("  |{:03b}>  {:+9.4}", i, h.get(i, i).re);
    }
    println!("flip-flop <011|H|101> = {:+.4}", h.get(0b011, 0b101).re);
    println!("coherence order of |000><111|: {}", coherence_order(0b000, 0b111, 3));
    Ok(())
}

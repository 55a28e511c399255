//! Distils the labelled pseudopure state `(I+Z)(I+Z)X/8` from thermal
//! polarization with the triple-quantum phase cycle.

use nmr_qec::protocol::{phase_cycle_filter, pps_target, prepare_pps, DeviationState, TQC_STEPS};
use nmr_qec::spin::{coherence_decompose, pauli};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let thermal = DeviationState::thermal();
    let pps = prepare_pps(&thermal)?;
    let target = pps_target();
    let overlap = target.inner(&pps.matrix).re;
    let cos = overlap / (target.frobenius_norm() * pps.matrix.frobenius_norm());
    println!("prepared / target scale: {:.6}", overlap / target.inner(&target).re);
    println!("Frobenius angle from target: {:.3e} rad", cos.clamp(-1.0, 1.0).acos());

    let mixed = &(&pauli("XXX")? + &pauli("XYI")?) + &pauli("ZIX")?;
    println!("\ncoherence orders of XXX + XYI + ZIX:");
    for (p, part) in coherence_decompose(&mixed) {
        if part.max_abs() > 1e-12 {
            println!("  p = {p:+}: |part| = {:.4}", part.frobenius_norm());
        }
    }
    let kept = phase_cycle_filter(&mixed, 3, TQC_STEPS)?;
    println!("after the {TQC_STEPS}-step triple-quantum filter: |rho| = {:.4}", kept.frobenius_norm());
    Ok(())
}

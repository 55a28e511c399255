//! The three phase-noise classes acting on a transverse data spin:
//! a coherent Z rotation, incoherent dephasing, and natural evolution with a
//! proton bath spin, the last showing the coupling-driven revival.

use nmr_qec::noise::{coherent_z, dephasing_with_flip, natural_evolution, ChannelSpec, NoiseChannel};
use nmr_qec::spin::{pauli, BathCoupling, SpinSystem};

fn expectation(obs: &nmr_qec::linalg::OperatorMatrix, rho: &nmr_qec::linalg::OperatorMatrix) -> f64 {
    obs.inner(rho).re / rho.dim() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = pauli("IIX")?;

    let rotated = coherent_z(0.6, 2).apply(&x)?;
    println!("coherent Z(0.6) on Cm:  <X> = {:.4}, <Y> = {:.4}", expectation(&x, &rotated), expectation(&pauli("IIY")?, &rotated));

    let dephased = dephasing_with_flip(0.2, 2)?.apply(&x)?;
    println!("dephasing q = 0.2:      <X> = {:.4}", expectation(&x, &dephased));

    let spec = ChannelSpec::Dephasing { t2_ms: 1.5, qubits: vec![2] };
    println!("dephasing T2 = 1.5 ms:  <X>(1 ms) = {:.4}", expectation(&x, &spec.build(1.0)?.apply(&x)?));

    // Cm alone, coupled to one proton: <X>(tau) = cos(2 pi d tau)
    let d = 0.5;
    let sys = SpinSystem::uncoupled(&["C1", "C2", "Cm"], &[0.0; 3])
        .with_bath(vec![BathCoupling { carbon: 2, coupling_khz: d }]);
    println!("\nbath revival, d = {d} kHz:");
    for k in 0..=8 {
        let tau = k as f64 * 0.25;
        let ch: NoiseChannel = natural_evolution(&sys, tau, 1.0)?;
        println!("  tau = {tau:4.2} ms  <X_m> = {:+.4}", expectation(&x, &ch.apply(&x)?));
    }
    Ok(())
}

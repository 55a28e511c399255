//! One round over the full interval against two rounds over its halves,
//! with fresh ancillae and with the ensemble block-projection procedure.

use nmr_qec::noise::ChannelSpec;
use nmr_qec::protocol::{run_one_round, run_two_rounds, Mode, RoundConfig, TwoRoundConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let channel = ChannelSpec::Dephasing { t2_ms: 1.0, qubits: vec![0, 1, 2] };
    println!("tau/ms   one round   two (fresh)   two (projected)   branches");
    for k in 0..=10 {
        let tau = 0.2 * k as f64;
        let one = run_one_round(&RoundConfig::new(Mode::Corrected, channel.clone(), tau))?;
        let ideal = run_two_rounds(&TwoRoundConfig {
            ideal_ancillae: true,
            ..TwoRoundConfig::new(channel.clone(), tau)
        })?;
        let projected = run_two_rounds(&TwoRoundConfig::new(channel.clone(), tau))?;
        println!(
            "{tau:5.2}    {:.5}     {:.5}       {:.5}           {:?}",
            one.entanglement_fidelity, ideal.entanglement_fidelity, projected.entanglement_fidelity, projected.executions
        );
    }
    Ok(())
}

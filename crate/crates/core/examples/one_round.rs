//! One round of the phase code on malonic acid: unencoded, decoded and
//! corrected fidelities under the natural Hamiltonian with a proton bath on
//! Cm and Zeeman dispersion.

use nmr_qec::noise::{ChannelSpec, DispersionModel, Frame, DEFAULT_T2_STAR_MS};
use nmr_qec::protocol::{run_one_round, Mode, RoundConfig};
use nmr_qec::spin::{BathCoupling, SpinSystem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let system = SpinSystem::malonic().with_bath(vec![BathCoupling { carbon: 2, coupling_khz: 0.25 }]);
    let channel = ChannelSpec::Natural {
        system,
        decoupling_scale: 1.0,
        dispersion: Some(DispersionModel::lorentzian_for_t2_star(DEFAULT_T2_STAR_MS)?),
        frame: Frame::Interaction,
    };
    println!("tau/ms  unencoded  decoded  corrected   s00    s10    s01    s11");
    for k in 0..=8 {
        let tau = 0.5 * k as f64;
        let f = |mode| run_one_round(&RoundConfig::new(mode, channel.clone(), tau));
        let (u, d, c) = (f(Mode::Unencoded)?, f(Mode::Decoded)?, f(Mode::Corrected)?);
        let s = c.mean_syndromes().expect("encoded run");
        println!(
            "{tau:5.2}   {:.4}     {:.4}   {:.4}    {:.3}  {:.3}  {:.3}  {:.3}",
            u.entanglement_fidelity, d.entanglement_fidelity, c.entanglement_fidelity, s[0], s[1], s[2], s[3]
        );
    }
    Ok(())
}

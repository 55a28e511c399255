//! Applies each correctable phase error to an encoded state and prints the
//! syndrome it leaves on the ancillae, before and after correction.

use nmr_qec::code::{error_operator, syndrome_intensities, CodeCircuit, SYNDROME_LABELS};
use nmr_qec::protocol::{data_signal, prepared_input};
use nmr_qec::spin::Pauli;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let code = CodeCircuit::default();
    code.validate()?;
    println!("error  syndrome  s00     s10     s01     s11     data survives (corrected)");
    for (error, (a, b)) in code.syndrome_table() {
        let rho = prepared_input(Pauli::X)?;
        let reference = data_signal(&rho, Pauli::X);
        let encoded = code.encode(&rho)?;
        let hit = error_operator(&error.to_string()).conjugate(&encoded);
        let corrected = code.decode_and_correct(&hit, true)?;
        let s = syndrome_intensities(&corrected, Pauli::X).map(|v| v * 2.0 / reference);
        println!(
            "{error}    {a}{b}        {:+.3}  {:+.3}  {:+.3}  {:+.3}  {:+.3}",
            s[0],
            s[1],
            s[2],
            s[3],
            data_signal(&corrected, Pauli::X) / reference
        );
    }
    println!("slots: {SYNDROME_LABELS:?}");
    Ok(())
}

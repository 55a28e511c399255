//! The three-qubit phase code.
//!
//! Wires: qubits 1 and 2 (tensor factors 0 and 1) are ancillae, qubit 3 (factor
//! 2) carries the data. Encoding maps `|00>|0> -> |+++>` and `|00>|1> -> |--->`.
//! After decoding, the ancillae hold the syndrome `(q1, q2)`:
//!
//! | error | syndrome |
//! |-------|----------|
//! | III   | 00       |
//! | ZII   | 10       |
//! | IZI   | 01       |
//! | IIZ   | 11       |
//!
//! A data-qubit phase error comes out of the decoder as a bit flip on the
//! data, so correction is a Toffoli: flip the data when both ancillae read 1.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{c, kronecker_all, OperatorMatrix};
use crate::spin::{pauli_operator, Pauli, PauliString};

/// Entries outside the ancilla-`|00>` block larger than this are leakage.
pub const LEAKAGE_TOL: f64 = 1e-8;

pub const N_QUBITS: usize = 3;
pub const DIM: usize = 8;
pub const DATA_QUBIT: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodeError {
    #[error("expected a 3-qubit (8x8) operator, got dimension {0}")]
    WrongDimension(usize),
    #[error("input leaks outside the ancilla |00> block (max entry {0:e})")]
    Leakage(f64),
}

/// Which ancilla wire receives which syndrome bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AncillaOrder {
    /// Bit from the qubit-1 check lands on qubit 1.
    #[default]
    Standard,
    /// The two syndrome bits are routed to the opposite ancillae.
    Swapped,
}

/// Syndrome label `(q1, q2)`; stored in the order `s00, s10, s01, s11`.
pub const SYNDROME_LABELS: [&str; 4] = ["00", "10", "01", "11"];

/// Position of syndrome `(a, b)` in the `[s00, s10, s01, s11]` layout.
pub fn syndrome_slot(a: u8, b: u8) -> usize {
    (a + 2 * b) as usize
}

/// Encoder, decoder and coherent correction for the phase code.
#[derive(Debug, Clone)]
pub struct CodeCircuit {
    pub u_encode: OperatorMatrix,
    pub u_decode: OperatorMatrix,
    pub u_correct: OperatorMatrix,
    order: AncillaOrder,
}

fn permutation(map: impl Fn(usize) -> usize) -> OperatorMatrix {
    OperatorMatrix::from_fn(DIM, |row, col| if map(col) == row { c(1., 0.) } else { c(0., 0.) })
        .expect("dim 8")
        .with_flags(false, true)
}

fn bit(index: usize, qubit: usize) -> usize {
    (index >> (N_QUBITS - 1 - qubit)) & 1
}

fn flip(index: usize, qubit: usize) -> usize {
    index ^ (1 << (N_QUBITS - 1 - qubit))
}

fn cnot(control: usize, target: usize) -> OperatorMatrix {
    permutation(|i| if bit(i, control) == 1 { flip(i, target) } else { i })
}

fn hadamard_all() -> OperatorMatrix {
    let s = 1.0 / 2f64.sqrt();
    let h = OperatorMatrix::from_rows(2, &[c(s, 0.), c(s, 0.), c(s, 0.), c(-s, 0.)])
        .expect("2x2")
        .with_flags(true, true);
    kronecker_all([&h, &h, &h])
}

impl CodeCircuit {
    pub fn new(order: AncillaOrder) -> Self {
        // fan the data out onto both ancillae, then rotate every qubit into the X basis
        let fan_out = &cnot(DATA_QUBIT, 1) * &cnot(DATA_QUBIT, 0);
        let u_encode = &hadamard_all() * &fan_out;
        let mut u_decode = u_encode.adjoint();
        if order == AncillaOrder::Swapped {
            let swap = permutation(|i| {
                let (a, b) = (bit(i, 0), bit(i, 1));
                if a != b {
                    flip(flip(i, 0), 1)
                } else {
                    i
                }
            });
            u_decode = &swap * &u_decode;
        }
        let u_correct = permutation(|i| {
            if bit(i, 0) == 1 && bit(i, 1) == 1 {
                flip(i, DATA_QUBIT)
            } else {
                i
            }
        });
        Self {
            u_encode,
            u_decode,
            u_correct,
            order,
        }
    }

    pub fn order(&self) -> AncillaOrder {
        self.order
    }

    /// The syndrome `(q1, q2)` that each correctable error leaves behind.
    pub fn syndrome_table(&self) -> [(PauliString, (u8, u8)); 4] {
        let swap = |(a, b): (u8, u8)| match self.order {
            AncillaOrder::Standard => (a, b),
            AncillaOrder::Swapped => (b, a),
        };
        [
            ("III".parse().unwrap(), (0, 0)),
            ("ZII".parse().unwrap(), swap((1, 0))),
            ("IZI".parse().unwrap(), swap((0, 1))),
            ("IIZ".parse().unwrap(), (1, 1)),
        ]
    }

    /// Maps a 3-qubit deviation supported on the ancilla-`|00>` block into the code space.
    pub fn encode(&self, rho: &OperatorMatrix) -> Result<OperatorMatrix, CodeError> {
        check_dim(rho)?;
        let leak = leakage(rho);
        if leak > LEAKAGE_TOL {
            return Err(CodeError::Leakage(leak));
        }
        Ok(self.u_encode.conjugate(rho))
    }

    pub fn decode_and_correct(
        &self,
        rho: &OperatorMatrix,
        apply_correction: bool,
    ) -> Result<OperatorMatrix, CodeError> {
        check_dim(rho)?;
        let decoded = self.u_decode.conjugate(rho);
        Ok(if apply_correction {
            self.u_correct.conjugate(&decoded)
        } else {
            decoded
        })
    }

    /// Checks the encoding map, the stabilizers, and decode-after-encode.
    pub fn validate(&self) -> Result<(), String> {
        let s = 1.0 / 8f64.sqrt();
        let plus = vec![c(s, 0.); DIM];
        let minus: Vec<Complex64> = (0..DIM)
            .map(|i| if i.count_ones() % 2 == 0 { c(s, 0.) } else { c(-s, 0.) })
            .collect();
        for (input, want) in [(0usize, &plus), (1usize, &minus)] {
            let mut e = vec![c(0., 0.); DIM];
            e[input] = c(1., 0.);
            let got = self.u_encode.apply(&e);
            let overlap: Complex64 = want.iter().zip(&got).map(|(a, b)| a.conj() * b).sum();
            if (overlap.norm() - 1.0).abs() > 1e-10 {
                return Err(format!("basis state {input} encodes with overlap {}", overlap.norm()));
            }
            for stab in ["XXI", "IXX"] {
                let s_op = pauli_operator(&stab.parse().unwrap());
                let img = s_op.apply(&got);
                let dev = img.iter().zip(&got).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                if dev > 1e-10 {
                    return Err(format!("encoded state not stabilized by {stab}"));
                }
            }
        }
        let round_trip = &self.u_decode * &self.u_encode;
        let err = match self.order {
            AncillaOrder::Standard => round_trip.max_abs_diff(&OperatorMatrix::identity(DIM)),
            AncillaOrder::Swapped => (0..2)
                .flat_map(|i| (0..DIM).map(move |j| (i, j)))
                .map(|(i, j)| {
                    let want = if i == j { 1.0 } else { 0.0 };
                    (round_trip.get(j, i) - c(want, 0.0)).norm()
                })
                .fold(0.0, f64::max),
        };
        if err > 1e-10 {
            return Err(format!("decode after encode deviates from identity by {err:e}"));
        }
        Ok(())
    }
}

impl Default for CodeCircuit {
    fn default() -> Self {
        Self::new(AncillaOrder::Standard)
    }
}

fn check_dim(rho: &OperatorMatrix) -> Result<(), CodeError> {
    if rho.dim() != DIM {
        return Err(CodeError::WrongDimension(rho.dim()));
    }
    Ok(())
}

fn leakage(rho: &OperatorMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..DIM {
        for j in 0..DIM {
            if i >= 2 || j >= 2 {
                worst = worst.max(rho.get(i, j).norm());
            }
        }
    }
    worst
}

/// `|00><00| (x) data`: places a single-qubit deviation under fresh ancillae.
pub fn embed_data(data: &OperatorMatrix) -> OperatorMatrix {
    assert_eq!(data.dim(), 2, "data operator must be 2x2");
    let p00 = OperatorMatrix::basis_outer(4, 0, 0);
    crate::linalg::kronecker(&p00, data)
}

/// `|ab><ab| (x) P` for ancilla pattern `(a, b)`.
pub fn syndrome_observable(a: u8, b: u8, input: Pauli) -> OperatorMatrix {
    let idx = (2 * a + b) as usize;
    let block = OperatorMatrix::basis_outer(4, idx, idx);
    crate::linalg::kronecker(&block, &input.matrix())
}

/// Fraction of the input observable's signal found in each syndrome block.
///
/// Normalised against a unit input `|00><00| (x) P`, so a noiseless round gives
/// `[1, 0, 0, 0]`. Layout is `[s00, s10, s01, s11]`.
pub fn syndrome_intensities(rho: &OperatorMatrix, input: Pauli) -> [f64; 4] {
    let mut out = [0.0; 4];
    for a in 0..2u8 {
        for b in 0..2u8 {
            let obs = syndrome_observable(a, b, input);
            out[syndrome_slot(a, b)] = obs.inner(rho).re / 2.0;
        }
    }
    out
}

/// Builds the 3-qubit Pauli operator for a named error.
pub fn error_operator(label: &str) -> OperatorMatrix {
    pauli_operator(&label.parse().expect("valid Pauli label"))
}

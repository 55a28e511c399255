//! Density-matrix simulation of a three-qubit phase code on a solid-state
//! NMR register (the three carbons of malonic acid), plus GRAPE design of the
//! control pulses.
//!
//! Qubit 1 is the slowest Kronecker factor; qubits 1 and 2 are the ancillae,
//! qubit 3 carries the data. Frequencies are in kHz, times in ms and
//! Hamiltonians in rad/ms.

pub mod linalg;
pub mod spin;
pub mod code;
pub mod noise;
pub mod protocol;
pub mod grape;
pub mod config;
pub mod sweep;

//! Spin-register construction: Pauli strings, the secular carbon Hamiltonian
//! with optional proton bath, and coherence-order bookkeeping.
//!
//! Units are fixed: frequencies and couplings in kHz, time in ms, so every
//! Hamiltonian returned here is in rad/ms. All factors of pi are applied
//! inside [`build_hamiltonian`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{c, kronecker_all, OperatorMatrix};

/// At most this many bath spins are simulated explicitly (dim 32 with three carbons).
pub const MAX_BATH_SPINS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("invalid Pauli letter '{0}'")]
    InvalidLetter(char),
    #[error("Pauli string has {found} letters, register has {expected} spins")]
    LengthMismatch { expected: usize, found: usize },
    #[error("{what} must be finite, got {value}")]
    NonFinite { what: String, value: f64 },
    #[error("coupling table entry ({row},{col}) lies on or below the diagonal; tables are upper-triangular")]
    LowerTriangular { row: usize, col: usize },
    #[error("spin index {index} out of range for {n} spins")]
    BadIndex { index: usize, n: usize },
    #[error("{0} bath spins requested, at most {MAX_BATH_SPINS} supported")]
    TooManyBathSpins(usize),
    #[error("spin system needs at least one spin")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> OperatorMatrix {
        let o = c(0., 0.);
        let l = c(1., 0.);
        let entries = match self {
            Pauli::I => [l, o, o, l],
            Pauli::X => [o, l, l, o],
            Pauli::Y => [o, c(0., -1.), c(0., 1.), o],
            Pauli::Z => [l, o, o, c(-1., 0.)],
        };
        OperatorMatrix::from_rows(2, &entries)
            .expect("2x2 is valid")
            .with_flags(true, true)
    }

    pub fn letter(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

impl TryFrom<char> for Pauli {
    type Error = SpinError;
    fn try_from(ch: char) -> Result<Self, SpinError> {
        match ch.to_ascii_uppercase() {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(SpinError::InvalidLetter(other)),
        }
    }
}

/// A tensor product of single-qubit Paulis, leftmost letter = qubit 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Self {
        Self(letters)
    }

    pub fn identity(n: usize) -> Self {
        Self(vec![Pauli::I; n])
    }

    /// `P` acting on `qubit` (0-based), identity elsewhere.
    pub fn single(n: usize, qubit: usize, p: Pauli) -> Self {
        let mut letters = vec![Pauli::I; n];
        letters[qubit] = p;
        Self(letters)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.0
    }

    /// Checks the string addresses exactly `n` spins.
    pub fn expect_len(&self, n: usize) -> Result<(), SpinError> {
        if self.len() != n {
            return Err(SpinError::LengthMismatch {
                expected: n,
                found: self.len(),
            });
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = SpinError;
    fn from_str(s: &str) -> Result<Self, SpinError> {
        s.chars().map(Pauli::try_from).collect::<Result<Vec<_>, _>>().map(Self)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

/// Kronecker product of the single-qubit Paulis in global factor order.
pub fn pauli_operator(s: &PauliString) -> OperatorMatrix {
    assert!(!s.is_empty(), "empty Pauli string");
    let mats: Vec<OperatorMatrix> = s.letters().iter().map(|p| p.matrix()).collect();
    kronecker_all(mats.iter()).with_flags(true, true)
}

/// Convenience: parse and build in one step.
pub fn pauli(s: &str) -> Result<OperatorMatrix, SpinError> {
    Ok(pauli_operator(&s.parse()?))
}

/// `sum_i P_i` over all `n` qubits.
pub fn collective(n: usize, p: Pauli) -> OperatorMatrix {
    let mut acc = OperatorMatrix::zeros(1 << n);
    for q in 0..n {
        acc = &acc + &pauli_operator(&PauliString::single(n, q, p));
    }
    acc
}

/// Secular heteronuclear coupling between one carbon and one bath proton.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathCoupling {
    /// 0-based index of the carbon the proton couples to.
    pub carbon: usize,
    /// Coupling constant `d` in kHz; the bath term is `pi d Z_c Z_bath`.
    pub coupling_khz: f64,
}

/// Carbon register parameters (kHz) plus optional explicit bath protons.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    pub labels: Vec<String>,
    pub shifts_khz: Vec<f64>,
    /// Upper-triangular dipolar constants, `dipolar_khz[i][j]` for `i < j`.
    pub dipolar_khz: Vec<Vec<f64>>,
    /// Upper-triangular J constants, `j_khz[i][j]` for `i < j`.
    pub j_khz: Vec<Vec<f64>>,
    pub bath: Vec<BathCoupling>,
}

impl SpinSystem {
    /// Uncoupled spins with the given shifts.
    pub fn uncoupled(labels: &[&str], shifts_khz: &[f64]) -> Self {
        assert_eq!(labels.len(), shifts_khz.len());
        let n = labels.len();
        Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            shifts_khz: shifts_khz.to_vec(),
            dipolar_khz: vec![vec![0.0; n]; n],
            j_khz: vec![vec![0.0; n]; n],
            bath: Vec::new(),
        }
    }

    /// The triply labelled malonic acid register at the experimental orientation.
    pub fn malonic() -> Self {
        let mut sys = Self::uncoupled(&["C1", "C2", "Cm"], &[6.380, -1.533, -5.650]);
        sys.dipolar_khz[0][1] = 0.297;
        sys.dipolar_khz[0][2] = 0.780;
        sys.dipolar_khz[1][2] = 1.050;
        sys.j_khz[0][1] = -0.025;
        sys.j_khz[0][2] = 0.071;
        sys.j_khz[1][2] = 0.042;
        sys
    }

    pub fn with_bath(mut self, bath: Vec<BathCoupling>) -> Self {
        self.bath = bath;
        self
    }

    pub fn n_spins(&self) -> usize {
        self.shifts_khz.len()
    }

    pub fn n_bath(&self) -> usize {
        self.bath.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn validate(&self) -> Result<(), SpinError> {
        let n = self.n_spins();
        if n == 0 {
            return Err(SpinError::Empty);
        }
        if self.labels.len() != n {
            return Err(SpinError::LengthMismatch {
                expected: n,
                found: self.labels.len(),
            });
        }
        for (i, w) in self.shifts_khz.iter().enumerate() {
            finite(&format!("shift of spin {}", i + 1), *w)?;
        }
        for table in [&self.dipolar_khz, &self.j_khz] {
            if table.len() != n || table.iter().any(|row| row.len() != n) {
                return Err(SpinError::LengthMismatch {
                    expected: n,
                    found: table.len(),
                });
            }
            for (i, row) in table.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    finite(&format!("coupling ({},{})", i + 1, j + 1), *v)?;
                    if j <= i && *v != 0.0 {
                        return Err(SpinError::LowerTriangular { row: i + 1, col: j + 1 });
                    }
                }
            }
        }
        if self.bath.len() > MAX_BATH_SPINS {
            return Err(SpinError::TooManyBathSpins(self.bath.len()));
        }
        for b in &self.bath {
            if b.carbon >= n {
                return Err(SpinError::BadIndex { index: b.carbon, n });
            }
            finite("bath coupling", b.coupling_khz)?;
        }
        Ok(())
    }

    /// Reorders spins so that new spin `k` is old spin `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self, SpinError> {
        let n = self.n_spins();
        let mut seen = vec![false; n];
        if order.len() != n {
            return Err(SpinError::LengthMismatch {
                expected: n,
                found: order.len(),
            });
        }
        for &o in order {
            if o >= n || seen[o] {
                return Err(SpinError::BadIndex { index: o, n });
            }
            seen[o] = true;
        }
        let pair = |table: &Vec<Vec<f64>>, a: usize, b: usize| {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            table[lo][hi]
        };
        let mut out = Self::uncoupled(
            &order.iter().map(|&o| self.labels[o].as_str()).collect::<Vec<_>>(),
            &order.iter().map(|&o| self.shifts_khz[o]).collect::<Vec<_>>(),
        );
        for i in 0..n {
            for j in (i + 1)..n {
                out.dipolar_khz[i][j] = pair(&self.dipolar_khz, order[i], order[j]);
                out.j_khz[i][j] = pair(&self.j_khz, order[i], order[j]);
            }
        }
        out.bath = self
            .bath
            .iter()
            .map(|b| BathCoupling {
                carbon: order.iter().position(|&o| o == b.carbon).expect("permutation"),
                coupling_khz: b.coupling_khz,
            })
            .collect();
        Ok(out)
    }

    /// Copy with every bath coupling multiplied by `scale`.
    pub fn with_bath_scaled(&self, scale: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.bath {
            b.coupling_khz *= scale;
        }
        out
    }
}

fn finite(what: &str, value: f64) -> Result<(), SpinError> {
    if !value.is_finite() {
        return Err(SpinError::NonFinite {
            what: what.to_string(),
            value,
        });
    }
    Ok(())
}

/// Register Hamiltonian in rad/ms.
///
/// `H = sum_i pi (w_i + offset) Z_i + sum_{i<j} pi D_ij (2 ZZ - XX - YY)
///    + sum_{i<j} (pi/2) J_ij (ZZ + XX + YY) + sum_bath pi d Z_c Z_b`.
///
/// Bath spins, if any, are appended after the carbons as extra tensor factors.
pub fn build_hamiltonian(sys: &SpinSystem, shift_offset_khz: f64) -> Result<OperatorMatrix, SpinError> {
    sys.validate()?;
    finite("shift offset", shift_offset_khz)?;
    let n = sys.n_spins();
    let total = n + sys.n_bath();
    let dim = 1usize << total;
    let single = |q: usize, p: Pauli| pauli_operator(&PauliString::single(total, q, p));
    let pair = |a: usize, b: usize, p: Pauli| {
        let mut letters = vec![Pauli::I; total];
        letters[a] = p;
        letters[b] = p;
        pauli_operator(&PauliString::new(letters))
    };

    let mut h = OperatorMatrix::zeros(dim);
    for (i, w) in sys.shifts_khz.iter().enumerate() {
        let coeff = PI * (w + shift_offset_khz);
        if coeff != 0.0 {
            h = &h + &single(i, Pauli::Z).scale(coeff);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (zz, xx, yy) = (pair(i, j, Pauli::Z), pair(i, j, Pauli::X), pair(i, j, Pauli::Y));
            let d = sys.dipolar_khz[i][j];
            if d != 0.0 {
                let term = &(&zz.scale(2.0) - &xx) - &yy;
                h = &h + &term.scale(PI * d);
            }
            let jc = sys.j_khz[i][j];
            if jc != 0.0 {
                let term = &(&zz + &xx) + &yy;
                h = &h + &term.scale(PI / 2.0 * jc);
            }
        }
    }
    for (k, b) in sys.bath.iter().enumerate() {
        if b.coupling_khz != 0.0 {
            h = &h + &pair_zz(total, b.carbon, n + k).scale(PI * b.coupling_khz);
        }
    }
    Ok(h.hermitian_part())
}

fn pair_zz(total: usize, a: usize, b: usize) -> OperatorMatrix {
    let mut letters = vec![Pauli::I; total];
    letters[a] = Pauli::Z;
    letters[b] = Pauli::Z;
    pauli_operator(&PauliString::new(letters))
}

/// Number of spins in `|0>` (spin up) in basis state `index` of an `n`-spin register.
fn up_count(index: usize, n: usize) -> i32 {
    (n as u32 - (index as u32).count_ones()) as i32
}

/// Coherence order of the matrix element `|a><b|`.
pub fn coherence_order(a: usize, b: usize, n: usize) -> i32 {
    up_count(a, n) - up_count(b, n)
}

/// Splits `rho` into its coherence-order components.
///
/// Every order from `-n` to `n` is present in the result, empty ones as zero
/// matrices; the components sum to `rho` exactly.
pub fn coherence_decompose(rho: &OperatorMatrix) -> BTreeMap<i32, OperatorMatrix> {
    let n = rho.n_qubits();
    let dim = rho.dim();
    let mut out = BTreeMap::new();
    for p in -(n as i32)..=(n as i32) {
        let comp = OperatorMatrix::from_fn(dim, |a, b| {
            if coherence_order(a, b, n) == p {
                rho.get(a, b)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .expect("same dimension");
        out.insert(p, comp);
    }
    out
}

/// Collective rotation `exp(-i phi sum_i Z_i / 2)` on `n` spins.
pub fn collective_z_rotation(n: usize, phi: f64) -> OperatorMatrix {
    let dim = 1usize << n;
    OperatorMatrix::from_fn(dim, |a, b| {
        if a != b {
            return c(0., 0.);
        }
        let sz = 2 * up_count(a, n) - n as i32;
        Complex64::from_polar(1.0, -phi * sz as f64 / 2.0)
    })
    .expect("power-of-two dimension")
    .with_flags(false, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::TRACE_TOL;

    #[test]
    fn pauli_examples() {
        assert!(pauli("III").unwrap().max_abs_diff(&OperatorMatrix::identity(8)) == 0.0);
        let zii = pauli("ZII").unwrap();
        let want = OperatorMatrix::diagonal(&[1., 1., 1., 1., -1., -1., -1., -1.]).unwrap();
        assert_eq!(zii.max_abs_diff(&want), 0.0);
        let xxi = pauli("XXI").unwrap();
        // |000> (index 0) <-> |110> (index 6)
        assert_eq!(xxi.get(0, 6), c(1., 0.));
        assert_eq!(xxi.get(6, 0), c(1., 0.));
        assert_eq!(xxi.get(1, 7), c(1., 0.));
        assert_eq!(xxi.get(0, 0), c(0., 0.));
        assert!(xxi.is_flagged_hermitian() && xxi.is_flagged_unitary());
        assert!(xxi.check_unitary());
    }

    #[test]
    fn pauli_rejects_bad_letter() {
        assert_eq!("XQI".parse::<PauliString>(), Err(SpinError::InvalidLetter('Q')));
    }

    #[test]
    fn malonic_diagonal_entry() {
        let h = build_hamiltonian(&SpinSystem::malonic(), 0.0).unwrap();
        let want = PI * 3.495;
        assert!((h.get(0, 0).re - want).abs() < 1e-12);
        assert!((want - 10.980).abs() < 1e-3);
        assert!(h.trace().norm() < 1e-10);
        assert!(h.check_hermitian());
    }

    #[test]
    fn zero_and_single_term_hamiltonians() {
        let sys = SpinSystem::uncoupled(&["a", "b", "c"], &[0.0, 0.0, 0.0]);
        assert_eq!(build_hamiltonian(&sys, 0.0).unwrap().max_abs(), 0.0);

        let sys = SpinSystem::uncoupled(&["a", "b", "c"], &[1.0, 0.0, 0.0]);
        let h = build_hamiltonian(&sys, 0.0).unwrap();
        assert!(h.max_abs_diff(&pauli("ZII").unwrap().scale(PI)) < 1e-15);
        let eig = crate::linalg::HermitianEigen::new(&h).unwrap();
        for v in eig.values {
            assert!((v.abs() - PI).abs() < 1e-12);
        }
    }

    #[test]
    fn offset_shifts_all_carbons() {
        let sys = SpinSystem::malonic();
        let h0 = build_hamiltonian(&sys, 0.0).unwrap();
        let h1 = build_hamiltonian(&sys, 0.25).unwrap();
        let diff = &h1 - &h0;
        let want = collective(3, Pauli::Z).scale(PI * 0.25);
        assert!(diff.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn bath_enlarges_space_and_is_secular() {
        let sys = SpinSystem::malonic().with_bath(vec![BathCoupling {
            carbon: 2,
            coupling_khz: 1.5,
        }]);
        let h = build_hamiltonian(&sys, 0.0).unwrap();
        assert_eq!(h.dim(), 16);
        let bath_term = &h - &crate::linalg::kronecker(
            &build_hamiltonian(&SpinSystem::malonic(), 0.0).unwrap(),
            &OperatorMatrix::identity(2),
        );
        assert!(bath_term.max_abs_diff(&pauli("IIZZ").unwrap().scale(PI * 1.5)) < 1e-12);
    }

    #[test]
    fn validation_errors() {
        let mut sys = SpinSystem::malonic();
        sys.dipolar_khz[2][0] = 0.1;
        assert_eq!(sys.validate(), Err(SpinError::LowerTriangular { row: 3, col: 1 }));
        let mut sys = SpinSystem::malonic();
        sys.shifts_khz[1] = f64::NAN;
        assert!(matches!(sys.validate(), Err(SpinError::NonFinite { .. })));
        let sys = SpinSystem::malonic().with_bath(vec![
            BathCoupling { carbon: 0, coupling_khz: 1.0 };
            3
        ]);
        assert_eq!(sys.validate(), Err(SpinError::TooManyBathSpins(3)));
        let sys = SpinSystem::malonic().with_bath(vec![BathCoupling {
            carbon: 3,
            coupling_khz: 1.0,
        }]);
        assert!(matches!(sys.validate(), Err(SpinError::BadIndex { .. })));
    }

    #[test]
    fn permutation_moves_couplings() {
        let sys = SpinSystem::malonic();
        let p = sys.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.labels, vec!["Cm", "C1", "C2"]);
        assert_eq!(p.dipolar_khz[0][1], 0.780);
        assert_eq!(p.dipolar_khz[0][2], 1.050);
        assert_eq!(p.dipolar_khz[1][2], 0.297);
        assert_eq!(p.j_khz[0][1], 0.071);
        // Same spectrum either way.
        let e0 = crate::linalg::HermitianEigen::new(&build_hamiltonian(&sys, 0.0).unwrap()).unwrap();
        let e1 = crate::linalg::HermitianEigen::new(&build_hamiltonian(&p, 0.0).unwrap()).unwrap();
        let sorted = |mut v: Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v
        };
        for (a, b) in sorted(e0.values).iter().zip(sorted(e1.values).iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn coherence_examples() {
        let tqc = OperatorMatrix::basis_outer(8, 0, 7);
        let parts = coherence_decompose(&tqc);
        assert_eq!(parts[&3].max_abs_diff(&tqc), 0.0);
        assert_eq!(parts.iter().filter(|(p, m)| **p != 3 && m.max_abs() > 0.0).count(), 0);

        let diag = OperatorMatrix::diagonal(&[1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        let parts = coherence_decompose(&diag);
        assert_eq!(parts[&0].max_abs_diff(&diag), 0.0);

        let pps = &(&(&pauli("IIX").unwrap() + &pauli("ZIX").unwrap()) + &pauli("IZX").unwrap())
            + &pauli("ZZX").unwrap();
        let parts = coherence_decompose(&pps.scale(1.0 / 8.0));
        assert!(parts[&1].max_abs() > 0.0 && parts[&-1].max_abs() > 0.0);
        assert!(parts[&3].max_abs() == 0.0 && parts[&-3].max_abs() == 0.0);
        // |00><00| (x) X has no zero-quantum part either
        assert!(parts[&0].max_abs() == 0.0);
        let sum = parts.values().fold(OperatorMatrix::zeros(8), |acc, m| &acc + m);
        assert!(sum.max_abs_diff(&pps.scale(1.0 / 8.0)) < TRACE_TOL);
    }
}

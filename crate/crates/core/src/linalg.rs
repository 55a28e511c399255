//! Dense complex operators on small register Hilbert spaces.
//!
//! Tensor-factor ordering is fixed for the whole crate: qubit 1 is the
//! leftmost Kronecker factor, which is the slowest-varying basis index and
//! the top wire of a circuit diagram. Basis state `|q1 q2 q3>` therefore sits
//! at index `4*q1 + 2*q2 + q3`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Elementwise tolerance used when validating Hermiticity and unitarity.
pub const VALIDATION_TOL: f64 = 1e-10;

/// Tolerance for trace identities.
pub const TRACE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("operator is not Hermitian (max |A - A^dagger| = {0:e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("factor index {index} out of range for {n_factors} tensor factors")]
    BadFactor { index: usize, n_factors: usize },
}

/// A dense `dim x dim` complex matrix with advisory structure flags.
///
/// The flags are hints set by constructors that know the structure of their
/// output (Pauli strings, exponentials of Hermitian generators). They are
/// never trusted blindly: [`OperatorMatrix::check_hermitian`] and
/// [`OperatorMatrix::check_unitary`] re-validate on demand.
#[derive(Clone, PartialEq)]
pub struct OperatorMatrix {
    data: DMatrix<Complex64>,
    hermitian: bool,
    unitary: bool,
}

impl fmt::Debug for OperatorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorMatrix")
            .field("dim", &self.dim())
            .field("hermitian", &self.hermitian)
            .field("unitary", &self.unitary)
            .field("data", &self.data)
            .finish()
    }
}

fn check_dim(dim: usize) -> Result<(), LinalgError> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(LinalgError::NotPowerOfTwo(dim));
    }
    Ok(())
}

impl OperatorMatrix {
    pub fn from_matrix(data: DMatrix<Complex64>) -> Result<Self, LinalgError> {
        if data.nrows() != data.ncols() {
            return Err(LinalgError::NotSquare {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        check_dim(data.nrows())?;
        Ok(Self {
            data,
            hermitian: false,
            unitary: false,
        })
    }

    /// Builds a matrix from row-major entries.
    pub fn from_rows(dim: usize, entries: &[Complex64]) -> Result<Self, LinalgError> {
        if entries.len() != dim * dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> Complex64) -> Result<Self, LinalgError> {
        check_dim(dim)?;
        Self::from_matrix(DMatrix::from_fn(dim, dim, f))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim.is_power_of_two(), "dimension must be a power of two");
        Self {
            data: DMatrix::identity(dim, dim),
            hermitian: true,
            unitary: true,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim.is_power_of_two(), "dimension must be a power of two");
        Self {
            data: DMatrix::zeros(dim, dim),
            hermitian: true,
            unitary: false,
        }
    }

    /// Diagonal operator with real entries.
    pub fn diagonal(values: &[f64]) -> Result<Self, LinalgError> {
        check_dim(values.len())?;
        let n = values.len();
        let mut data = DMatrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            data[(i, i)] = Complex64::new(*v, 0.0);
        }
        Ok(Self {
            data,
            hermitian: true,
            unitary: false,
        })
    }

    /// Outer product `|bra_a><ket_b|` of two basis states.
    pub fn basis_outer(dim: usize, row: usize, col: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.data[(row, col)] = Complex64::new(1.0, 0.0);
        m.hermitian = row == col;
        m
    }

    /// Projector `|psi><psi|` onto a (not necessarily normalised) state vector.
    pub fn projector(psi: &[Complex64]) -> Result<Self, LinalgError> {
        check_dim(psi.len())?;
        let n = psi.len();
        let data = DMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj());
        Ok(Self {
            data,
            hermitian: true,
            unitary: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of qubits spanned by this operator.
    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[(row, col)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.data
    }

    pub fn is_flagged_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_flagged_unitary(&self) -> bool {
        self.unitary
    }

    pub(crate) fn with_flags(mut self, hermitian: bool, unitary: bool) -> Self {
        self.hermitian = hermitian;
        self.unitary = unitary;
        self
    }

    /// Largest elementwise deviation `max |A - A^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Largest elementwise deviation `max |A^dagger A - I|`.
    pub fn unitarity_error(&self) -> f64 {
        let prod = self.data.adjoint() * &self.data;
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    pub fn check_hermitian(&self) -> bool {
        self.hermiticity_error() <= VALIDATION_TOL
    }

    pub fn check_unitary(&self) -> bool {
        self.unitarity_error() <= VALIDATION_TOL
    }

    pub fn adjoint(&self) -> Self {
        Self {
            data: self.data.adjoint(),
            hermitian: self.hermitian,
            unitary: self.unitary,
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    /// Frobenius inner product `Tr(A^dagger B)`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest elementwise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            data: &self.data * Complex64::new(factor, 0.0),
            hermitian: self.hermitian,
            unitary: false,
        }
    }

    pub fn scale_complex(&self, factor: Complex64) -> Self {
        Self {
            data: &self.data * factor,
            hermitian: false,
            unitary: false,
        }
    }

    /// `U rho U^dagger`.
    pub fn conjugate(&self, rho: &Self) -> Self {
        let data = &self.data * &rho.data * self.data.adjoint();
        Self {
            data,
            hermitian: rho.hermitian,
            unitary: false,
        }
    }

    /// Replaces the matrix by `(A + A^dagger)/2` and sets the Hermitian flag.
    pub fn hermitian_part(&self) -> Self {
        let data = (&self.data + self.data.adjoint()) * Complex64::new(0.5, 0.0);
        Self {
            data,
            hermitian: true,
            unitary: false,
        }
    }

    /// Matrix-vector product on a state vector.
    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(psi.len(), self.dim(), "dimension mismatch");
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.data[(i, j)] * psi[j]).sum())
            .collect()
    }

    /// Commutator `[A, B]`.
    pub fn commutator(&self, other: &Self) -> Self {
        let data = &self.data * &other.data - &other.data * &self.data;
        Self {
            data,
            hermitian: false,
            unitary: false,
        }
    }
}

impl<'a> Mul<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix {
            data: &self.data * &rhs.data,
            hermitian: false,
            unitary: self.unitary && rhs.unitary,
        }
    }
}

impl<'a> Add<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix {
            data: &self.data + &rhs.data,
            hermitian: self.hermitian && rhs.hermitian,
            unitary: false,
        }
    }
}

impl<'a> Sub<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix {
            data: &self.data - &rhs.data,
            hermitian: self.hermitian && rhs.hermitian,
            unitary: false,
        }
    }
}

impl Neg for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn neg(self) -> OperatorMatrix {
        OperatorMatrix {
            data: -&self.data,
            hermitian: self.hermitian,
            unitary: self.unitary,
        }
    }
}

/// Kronecker product with `a` as the slow (leftmost) factor.
pub fn kronecker(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    OperatorMatrix {
        data: a.data.kronecker(&b.data),
        hermitian: a.hermitian && b.hermitian,
        unitary: a.unitary && b.unitary,
    }
}

/// Kronecker product of a sequence of factors, first factor slowest.
pub fn kronecker_all<'a>(factors: impl IntoIterator<Item = &'a OperatorMatrix>) -> OperatorMatrix {
    let mut iter = factors.into_iter();
    let first = iter.next().expect("at least one factor").clone();
    iter.fold(first, |acc, f| kronecker(&acc, f))
}

/// Spectral decomposition `H = V diag(values) V^dagger` of a Hermitian operator.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl HermitianEigen {
    pub fn new(h: &OperatorMatrix) -> Result<Self, LinalgError> {
        let err = h.hermiticity_error();
        if err > VALIDATION_TOL {
            return Err(LinalgError::NotHermitian(err));
        }
        Ok(Self::new_unchecked(h.matrix()))
    }

    /// Skips the Hermiticity check; the lower triangle is what gets read.
    pub(crate) fn new_unchecked(h: &DMatrix<Complex64>) -> Self {
        let eig = h.clone().symmetric_eigen();
        Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    /// `exp(-i H t)` from the stored decomposition.
    pub fn propagator(&self, t: f64) -> DMatrix<Complex64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, lambda) in self.values.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -lambda * t);
            for i in 0..n {
                scaled[(i, j)] *= phase;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// `exp(-i h t)` for Hermitian `h`, computed by eigendecomposition.
pub fn expm_hermitian(h: &OperatorMatrix, t: f64) -> Result<OperatorMatrix, LinalgError> {
    let eig = HermitianEigen::new(h)?;
    Ok(OperatorMatrix {
        data: eig.propagator(t),
        hermitian: false,
        unitary: true,
    })
}

/// Traces out every tensor factor not listed in `keep`.
///
/// `dims` lists the factor dimensions in global order (first = slowest). The
/// kept factors retain their relative order in the result.
pub fn partial_trace(
    rho: &OperatorMatrix,
    keep: &[usize],
    dims: &[usize],
) -> Result<OperatorMatrix, LinalgError> {
    let total: usize = dims.iter().product();
    if total != rho.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: rho.dim(),
            found: total,
        });
    }
    for &k in keep {
        if k >= dims.len() {
            return Err(LinalgError::BadFactor {
                index: k,
                n_factors: dims.len(),
            });
        }
    }
    let kept: Vec<usize> = (0..dims.len()).filter(|i| keep.contains(i)).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let out_dim: usize = kept.iter().map(|&i| dims[i]).product();
    let tr_dim: usize = traced.iter().map(|&i| dims[i]).product();

    // strides of each factor in the full index
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let offsets = |factors: &[usize], mut idx: usize| -> usize {
        let mut off = 0;
        for &f in factors.iter().rev() {
            off += (idx % dims[f]) * strides[f];
            idx /= dims[f];
        }
        off
    };
    let kept_off: Vec<usize> = (0..out_dim).map(|i| offsets(&kept, i)).collect();
    let tr_off: Vec<usize> = (0..tr_dim).map(|i| offsets(&traced, i)).collect();

    let mut out = DMatrix::zeros(out_dim, out_dim);
    for (r, &ro) in kept_off.iter().enumerate() {
        for (c, &co) in kept_off.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &t in &tr_off {
                acc += rho.data[(ro + t, co + t)];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(OperatorMatrix {
        data: out,
        hermitian: rho.hermitian,
        unitary: false,
    })
}

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

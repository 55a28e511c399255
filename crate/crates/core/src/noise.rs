//! Phase-noise channels acting on register deviation matrices.
//!
//! Three classes are modelled: coherent Z rotations, incoherent dephasing
//! (classical mixtures of Z conjugations), and evolution under the natural
//! Hamiltonian, which becomes decoherent once explicit bath protons are traced
//! out. Ensemble dispersion of the Zeeman shifts is averaged deterministically.
//! Every channel here is unital and trace preserving.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::linalg::{c, expm_hermitian, kronecker, partial_trace, LinalgError, OperatorMatrix};
use crate::spin::{
    build_hamiltonian, coherence_decompose, collective, pauli_operator, Pauli, PauliString, SpinError,
    SpinSystem,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("qubit {qubit} out of range for a {n}-qubit register")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("channel acts on dimension {expected}, state has dimension {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dispersion model needs at least one sample")]
    NoSamples,
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    Gaussian,
    Lorentzian,
}

/// Distribution of a common Zeeman offset across the ensemble.
///
/// `width_khz` is the standard deviation for the Gaussian model and the half
/// width at half maximum for the Lorentzian model.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionModel {
    pub distribution: Distribution,
    pub width_khz: f64,
    pub n_samples: usize,
}

/// Default number of quadrature nodes.
pub const DEFAULT_SAMPLES: usize = 15;

/// Free-induction dephasing time the Lorentzian calibration defaults to (ms).
pub const DEFAULT_T2_STAR_MS: f64 = 2.0;

impl DispersionModel {
    pub fn new(distribution: Distribution, width_khz: f64, n_samples: usize) -> Result<Self, NoiseError> {
        if n_samples < 1 {
            return Err(NoiseError::NoSamples);
        }
        if !(width_khz.is_finite() && width_khz >= 0.0) {
            return Err(NoiseError::InvalidParameter(format!(
                "dispersion width must be finite and non-negative, got {width_khz}"
            )));
        }
        Ok(Self {
            distribution,
            width_khz,
            n_samples,
        })
    }

    /// Lorentzian model whose single-quantum FID decays as `exp(-t / t2_star)`.
    pub fn lorentzian_for_t2_star(t2_star_ms: f64) -> Result<Self, NoiseError> {
        if !(t2_star_ms.is_finite() && t2_star_ms > 0.0) {
            return Err(NoiseError::InvalidParameter(format!("T2* must be positive, got {t2_star_ms}")));
        }
        Self::new(Distribution::Lorentzian, 1.0 / (2.0 * PI * t2_star_ms), DEFAULT_SAMPLES)
    }

    /// `E[exp(-i delta s)]` for offset `delta` (kHz) and conjugate variable `s` (rad/kHz).
    ///
    /// Both distributions are symmetric so the result is real.
    pub fn characteristic(&self, s: f64) -> f64 {
        match self.distribution {
            Distribution::Gaussian => (-0.5 * (self.width_khz * s).powi(2)).exp(),
            Distribution::Lorentzian => (-self.width_khz * s.abs()).exp(),
        }
    }

    /// Fixed quadrature nodes (offsets in kHz) and normalised weights.
    ///
    /// Gaussian: Gauss-Hermite nodes. Lorentzian: Gauss-Legendre nodes in the
    /// cumulative-angle variable, `delta = width * tan(pi x / 2)`.
    pub fn quadrature(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_samples;
        let (nodes, weights) = match self.distribution {
            Distribution::Gaussian => golub_welsch(n, |k| (k as f64).sqrt()),
            Distribution::Lorentzian => golub_welsch(n, |k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            }),
        };
        let offsets = nodes
            .iter()
            .map(|x| match self.distribution {
                Distribution::Gaussian => self.width_khz * x,
                Distribution::Lorentzian => self.width_khz * (PI * x / 2.0).tan(),
            })
            .collect();
        (offsets, weights)
    }
}

/// Gauss quadrature for a symmetric weight from its recurrence off-diagonals.
/// Weights come back normalised to sum to one.
fn golub_welsch(n: usize, off_diag: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = off_diag(k);
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| (eig.eigenvalues[j], eig.eigenvectors[(0, j)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let nodes = pairs.iter().map(|p| p.0).collect();
    let weights = pairs.iter().map(|p| p.1 / total).collect();
    (nodes, weights)
}

/// Conjugation by `exp(-i H tau)` under the natural Hamiltonian.
///
/// Bath spins start maximally mixed and are traced out afterwards. When a
/// dispersion model is attached, the ensemble average over a common carbon
/// offset is applied exactly: the offset term is proportional to the total
/// carbon `Z`, which commutes with every secular term, so averaging multiplies
/// each coherence-order-`p` component by the characteristic function at
/// `2 pi p tau`.
#[derive(Debug, Clone)]
pub struct NaturalEvolution {
    pub tau_ms: f64,
    pub decoupling_scale: f64,
    pub frame: Frame,
    n_carbons: usize,
    n_bath: usize,
    hamiltonian: OperatorMatrix,
    propagator: OperatorMatrix,
    dispersion: Option<DispersionModel>,
}

impl NaturalEvolution {
    pub fn n_carbons(&self) -> usize {
        self.n_carbons
    }

    pub fn n_bath(&self) -> usize {
        self.n_bath
    }

    /// Full Hamiltonian including any bath spins (rad/ms).
    pub fn hamiltonian(&self) -> &OperatorMatrix {
        &self.hamiltonian
    }

    pub fn dispersion(&self) -> Option<&DispersionModel> {
        self.dispersion.as_ref()
    }

    fn apply(&self, rho: &OperatorMatrix) -> OperatorMatrix {
        let mut rho = rho.clone();
        if let Some(model) = &self.dispersion {
            rho = coherence_decompose(&rho)
                .into_iter()
                .fold(OperatorMatrix::zeros(rho.dim()), |acc, (p, comp)| {
                    let w = model.characteristic(2.0 * PI * p as f64 * self.tau_ms);
                    &acc + &comp.scale(w)
                });
        }
        if self.n_bath == 0 {
            return self.propagator.conjugate(&rho);
        }
        let bath_dim = 1usize << self.n_bath;
        let mixed = OperatorMatrix::identity(bath_dim).scale(1.0 / bath_dim as f64);
        let full = self.propagator.conjugate(&kronecker(&rho, &mixed));
        let dims = vec![2usize; self.n_carbons + self.n_bath];
        let keep: Vec<usize> = (0..self.n_carbons).collect();
        partial_trace(&full, &keep, &dims).expect("dimensions built consistently")
    }
}

/// Reference frame the delay is observed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    /// The transmitter rotating frame: every carbon term acts during the delay.
    Rotating,
    /// Interaction picture of the known carbon Hamiltonian. The deterministic
    /// homonuclear evolution is undone at the end of the delay, leaving only
    /// the bath coupling and the dispersion as error sources, the way a
    /// refocused or spectrally tracked readout sees them.
    #[default]
    Interaction,
}

impl std::str::FromStr for Frame {
    type Err = NoiseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rotating" => Ok(Frame::Rotating),
            "interaction" => Ok(Frame::Interaction),
            other => Err(NoiseError::InvalidParameter(format!("unknown frame '{other}'"))),
        }
    }
}

/// A unital, trace-preserving map on an `n`-qubit deviation matrix.
#[derive(Debug, Clone)]
pub enum NoiseChannel {
    Identity,
    /// Conjugation by `cos(theta/2) I - i sin(theta/2) Z_qubit`.
    CoherentZ { theta: f64, qubit: usize },
    /// `cos^2(theta) rho + sin^2(theta) Z rho Z` on one qubit.
    Dephasing { theta: f64, qubit: usize },
    /// `(1 - p) rho + p/3 (X rho X + Y rho Y + Z rho Z)` on one qubit; used as a gate-error knob.
    Depolarizing { strength: f64, qubit: usize },
    Natural(Box<NaturalEvolution>),
    /// Conjugation by a fixed unitary on the whole register.
    Unitary(OperatorMatrix),
    /// Weighted mixture of channels; weights sum to one.
    Ensemble(Vec<(f64, NoiseChannel)>),
    /// Applied in list order.
    Composed(Vec<NoiseChannel>),
}

fn local_pauli(n: usize, qubit: usize, p: Pauli) -> OperatorMatrix {
    pauli_operator(&PauliString::single(n, qubit, p))
}

fn check_qubit(qubit: usize, n: usize) -> Result<(), NoiseError> {
    if qubit >= n {
        return Err(NoiseError::QubitOutOfRange { qubit, n });
    }
    Ok(())
}

pub fn coherent_z(theta: f64, qubit: usize) -> NoiseChannel {
    NoiseChannel::CoherentZ { theta, qubit }
}

pub fn dephasing(theta: f64, qubit: usize) -> NoiseChannel {
    NoiseChannel::Dephasing { theta, qubit }
}

/// Dephasing specified by its flip weight `q = sin^2(theta)`.
pub fn dephasing_with_flip(q: f64, qubit: usize) -> Result<NoiseChannel, NoiseError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(NoiseError::InvalidParameter(format!("flip weight must lie in [0, 1], got {q}")));
    }
    Ok(dephasing(q.sqrt().asin(), qubit))
}

/// Conjugation by `u`, which must be unitary.
pub fn unitary(u: OperatorMatrix) -> Result<NoiseChannel, NoiseError> {
    let err = u.unitarity_error();
    if err > 1e-10 {
        return Err(NoiseError::InvalidParameter(format!("operator is not unitary (error {err:e})")));
    }
    Ok(NoiseChannel::Unitary(u))
}

pub fn depolarizing(strength: f64, qubit: usize) -> Result<NoiseChannel, NoiseError> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(NoiseError::InvalidParameter(format!(
            "depolarizing strength must lie in [0, 1], got {strength}"
        )));
    }
    Ok(NoiseChannel::Depolarizing { strength, qubit })
}

/// Evolution under the natural Hamiltonian for `tau_ms`, bath couplings
/// scaled by `decoupling_scale`, seen in the transmitter rotating frame.
pub fn natural_evolution(sys: &SpinSystem, tau_ms: f64, decoupling_scale: f64) -> Result<NoiseChannel, NoiseError> {
    natural_evolution_in_frame(sys, tau_ms, decoupling_scale, Frame::Rotating)
}

/// As [`natural_evolution`], in a chosen frame.
///
/// In [`Frame::Interaction`] the propagator is `(U_C(tau)^dagger (x) I) U(tau)`
/// with `U_C` generated by the carbon-only Hamiltonian; bath terms that fail to
/// commute with the flip-flop couplings still leave a residual.
pub fn natural_evolution_in_frame(
    sys: &SpinSystem,
    tau_ms: f64,
    decoupling_scale: f64,
    frame: Frame,
) -> Result<NoiseChannel, NoiseError> {
    if !(tau_ms.is_finite() && tau_ms >= 0.0) {
        return Err(NoiseError::InvalidParameter(format!("delay must be non-negative, got {tau_ms}")));
    }
    if !(0.0..=1.0).contains(&decoupling_scale) {
        return Err(NoiseError::InvalidParameter(format!(
            "decoupling scale must lie in [0, 1], got {decoupling_scale}"
        )));
    }
    let scaled = if decoupling_scale == 0.0 {
        sys.clone().with_bath(Vec::new())
    } else {
        sys.with_bath_scaled(decoupling_scale)
    };
    let hamiltonian = build_hamiltonian(&scaled, 0.0)?;
    let mut propagator = expm_hermitian(&hamiltonian, tau_ms)?;
    if frame == Frame::Interaction {
        let carbon = build_hamiltonian(&sys.clone().with_bath(Vec::new()), 0.0)?;
        let back = expm_hermitian(&carbon, -tau_ms)?;
        let back = kronecker(&back, &OperatorMatrix::identity(1 << scaled.n_bath()));
        propagator = &back * &propagator;
    }
    Ok(NoiseChannel::Natural(Box::new(NaturalEvolution {
        tau_ms,
        decoupling_scale,
        frame,
        n_carbons: scaled.n_spins(),
        n_bath: scaled.n_bath(),
        hamiltonian,
        propagator,
        dispersion: None,
    })))
}

/// Attaches a Zeeman-dispersion average to a natural-evolution channel.
pub fn dispersion_average(base: &NoiseChannel, model: &DispersionModel) -> Result<NoiseChannel, NoiseError> {
    if model.n_samples < 1 {
        return Err(NoiseError::NoSamples);
    }
    let NoiseChannel::Natural(nat) = base else {
        return Err(NoiseError::InvalidParameter(
            "dispersion averaging applies to natural-evolution channels".into(),
        ));
    };
    let total = nat.n_carbons + nat.n_bath;
    let offset_gen = kronecker(
        &collective(nat.n_carbons, Pauli::Z),
        &OperatorMatrix::identity(1 << nat.n_bath),
    );
    debug_assert_eq!(offset_gen.dim(), 1 << total);
    let comm = offset_gen.commutator(&nat.hamiltonian).max_abs();
    if comm > 1e-9 {
        return Err(NoiseError::InvalidParameter(format!(
            "offset generator does not commute with the Hamiltonian ({comm:e})"
        )));
    }
    let mut out = (**nat).clone();
    out.dispersion = Some(model.clone());
    Ok(NoiseChannel::Natural(Box::new(out)))
}

/// Quadrature route for the same average: a weighted ensemble of
/// natural-evolution channels evaluated at the model's fixed offset nodes.
pub fn dispersion_quadrature(
    sys: &SpinSystem,
    tau_ms: f64,
    decoupling_scale: f64,
    model: &DispersionModel,
    frame: Frame,
) -> Result<NoiseChannel, NoiseError> {
    let (offsets, weights) = model.quadrature();
    let members = offsets
        .iter()
        .zip(weights)
        .map(|(off, w)| {
            let mut shifted = sys.clone();
            for s in &mut shifted.shifts_khz {
                *s += off;
            }
            let ch = natural_evolution_in_frame(&shifted, tau_ms, decoupling_scale, Frame::Rotating)?;
            // the frame tracks the nominal shifts only, so the offset stays visible
            let ch = match frame {
                Frame::Rotating => ch,
                Frame::Interaction => {
                    let carbon = build_hamiltonian(&sys.clone().with_bath(Vec::new()), 0.0)?;
                    let NoiseChannel::Natural(mut nat) = ch else { unreachable!() };
                    let back = kronecker(
                        &expm_hermitian(&carbon, -tau_ms)?,
                        &OperatorMatrix::identity(1 << nat.n_bath),
                    );
                    nat.propagator = &back * &nat.propagator;
                    nat.frame = Frame::Interaction;
                    NoiseChannel::Natural(nat)
                }
            };
            Ok((w, ch))
        })
        .collect::<Result<Vec<_>, NoiseError>>()?;
    Ok(NoiseChannel::Ensemble(members))
}

/// Functional composition in list order.
pub fn compose(channels: Vec<NoiseChannel>) -> Result<NoiseChannel, NoiseError> {
    let mut register: Option<usize> = None;
    let mut max_qubit: Option<usize> = None;
    for ch in &channels {
        if let Some(n) = ch.fixed_qubits() {
            if let Some(prev) = register {
                if prev != n {
                    return Err(NoiseError::DimensionMismatch {
                        expected: 1 << prev,
                        found: 1 << n,
                    });
                }
            }
            register = Some(n);
        }
        if let Some(q) = ch.max_local_qubit() {
            max_qubit = Some(max_qubit.map_or(q, |m: usize| m.max(q)));
        }
    }
    if let (Some(n), Some(q)) = (register, max_qubit) {
        check_qubit(q, n)?;
    }
    Ok(NoiseChannel::Composed(channels))
}

impl NoiseChannel {
    /// Register size this channel is tied to, if any.
    pub fn fixed_qubits(&self) -> Option<usize> {
        match self {
            NoiseChannel::Natural(n) => Some(n.n_carbons),
            NoiseChannel::Unitary(u) => Some(u.n_qubits()),
            NoiseChannel::Ensemble(m) => m.iter().find_map(|(_, ch)| ch.fixed_qubits()),
            NoiseChannel::Composed(v) => v.iter().find_map(|ch| ch.fixed_qubits()),
            _ => None,
        }
    }

    fn max_local_qubit(&self) -> Option<usize> {
        match self {
            NoiseChannel::CoherentZ { qubit, .. }
            | NoiseChannel::Dephasing { qubit, .. }
            | NoiseChannel::Depolarizing { qubit, .. } => Some(*qubit),
            NoiseChannel::Ensemble(m) => m.iter().filter_map(|(_, ch)| ch.max_local_qubit()).max(),
            NoiseChannel::Composed(v) => v.iter().filter_map(|ch| ch.max_local_qubit()).max(),
            _ => None,
        }
    }

    pub fn apply(&self, rho: &OperatorMatrix) -> Result<OperatorMatrix, NoiseError> {
        let n = rho.n_qubits();
        match self {
            NoiseChannel::Identity => Ok(rho.clone()),
            NoiseChannel::CoherentZ { theta, qubit } => {
                check_qubit(*qubit, n)?;
                let z = local_pauli(n, *qubit, Pauli::Z);
                let u = &OperatorMatrix::identity(rho.dim()).scale((theta / 2.0).cos())
                    + &z.scale_complex(c(0.0, -(theta / 2.0).sin()));
                Ok(u.conjugate(rho))
            }
            NoiseChannel::Dephasing { theta, qubit } => {
                check_qubit(*qubit, n)?;
                let z = local_pauli(n, *qubit, Pauli::Z);
                let (cs, sn) = (theta.cos().powi(2), theta.sin().powi(2));
                Ok(&rho.scale(cs) + &z.conjugate(rho).scale(sn))
            }
            NoiseChannel::Depolarizing { strength, qubit } => {
                check_qubit(*qubit, n)?;
                let mut out = rho.scale(1.0 - strength);
                for p in [Pauli::X, Pauli::Y, Pauli::Z] {
                    out = &out + &local_pauli(n, *qubit, p).conjugate(rho).scale(strength / 3.0);
                }
                Ok(out)
            }
            NoiseChannel::Natural(nat) => {
                if n != nat.n_carbons {
                    return Err(NoiseError::DimensionMismatch {
                        expected: 1 << nat.n_carbons,
                        found: rho.dim(),
                    });
                }
                Ok(nat.apply(rho))
            }
            NoiseChannel::Unitary(u) => {
                if u.dim() != rho.dim() {
                    return Err(NoiseError::DimensionMismatch {
                        expected: u.dim(),
                        found: rho.dim(),
                    });
                }
                Ok(u.conjugate(rho))
            }
            NoiseChannel::Ensemble(members) => {
                let mut acc = OperatorMatrix::zeros(rho.dim());
                for (w, ch) in members {
                    acc = &acc + &ch.apply(rho)?.scale(*w);
                }
                Ok(acc)
            }
            NoiseChannel::Composed(chain) => {
                let mut cur = rho.clone();
                for ch in chain {
                    cur = ch.apply(&cur)?;
                }
                Ok(cur)
            }
        }
    }
}

/// Declarative channel description, turned into a concrete channel per delay.
#[derive(Debug, Clone)]
pub enum ChannelSpec {
    Identity,
    /// The same channel regardless of the delay.
    Fixed(NoiseChannel),
    /// `theta = rate * delay` on each listed qubit.
    CoherentZ { rate_rad_per_ms: f64, qubits: Vec<usize> },
    /// Independent dephasing with coherence `exp(-delay / t2)` on each listed qubit.
    Dephasing { t2_ms: f64, qubits: Vec<usize> },
    Natural {
        system: SpinSystem,
        decoupling_scale: f64,
        dispersion: Option<DispersionModel>,
        frame: Frame,
    },
}

impl ChannelSpec {
    pub fn build(&self, delay_ms: f64) -> Result<NoiseChannel, NoiseError> {
        if !(delay_ms.is_finite() && delay_ms >= 0.0) {
            return Err(NoiseError::InvalidParameter(format!("delay must be non-negative, got {delay_ms}")));
        }
        match self {
            ChannelSpec::Identity => Ok(NoiseChannel::Identity),
            ChannelSpec::Fixed(ch) => Ok(ch.clone()),
            ChannelSpec::CoherentZ { rate_rad_per_ms, qubits } => compose(
                qubits
                    .iter()
                    .map(|&q| coherent_z(rate_rad_per_ms * delay_ms, q))
                    .collect(),
            ),
            ChannelSpec::Dephasing { t2_ms, qubits } => {
                if !(t2_ms.is_finite() && *t2_ms > 0.0) {
                    return Err(NoiseError::InvalidParameter(format!("T2 must be positive, got {t2_ms}")));
                }
                // cos(2 theta) is the surviving coherence
                let theta = 0.5 * (-delay_ms / t2_ms).exp().acos();
                compose(qubits.iter().map(|&q| dephasing(theta, q)).collect())
            }
            ChannelSpec::Natural {
                system,
                decoupling_scale,
                dispersion,
                frame,
            } => {
                let base = natural_evolution_in_frame(system, delay_ms, *decoupling_scale, *frame)?;
                match dispersion {
                    Some(model) => dispersion_average(&base, model),
                    None => Ok(base),
                }
            }
        }
    }
}

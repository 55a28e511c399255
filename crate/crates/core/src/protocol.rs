//! Experiment orchestration: labelled pseudopure-state preparation with a
//! triple-quantum filter, one- and two-round error-correction sequences, and
//! the survival-fraction / entanglement-fidelity readout.

use std::f64::consts::PI;

use thiserror::Error;

use crate::code::{embed_data, syndrome_intensities, AncillaOrder, CodeCircuit, CodeError, DATA_QUBIT, DIM};
use crate::linalg::{c, kronecker, partial_trace, LinalgError, OperatorMatrix};
use crate::noise::{compose, depolarizing, ChannelSpec, NoiseChannel, NoiseError};
use crate::spin::{collective_z_rotation, pauli, pauli_operator, Pauli, PauliString};

/// Deviation matrices must be traceless to this tolerance.
pub const TRACE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("deviation matrix has trace {0:e}, expected zero")]
    NotTraceless(f64),
    #[error("{n_steps} phase steps alias coherence orders (need more than {min})")]
    Aliasing { n_steps: usize, min: usize },
    #[error("input label must be X, Y or Z")]
    BadInput,
    #[error("invalid interval split: {0}")]
    BadSplit(String),
    #[error("gate error must lie in [0, 1], got {0}")]
    BadGateError(f64),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Traceless part of an ensemble density matrix, with its polarization scale
/// carried separately.
#[derive(Debug, Clone)]
pub struct DeviationState {
    pub matrix: OperatorMatrix,
    pub scale: f64,
}

impl DeviationState {
    pub fn new(matrix: OperatorMatrix, scale: f64) -> Result<Self, ProtocolError> {
        let tr = matrix.trace().norm();
        if tr > TRACE_TOL {
            return Err(ProtocolError::NotTraceless(tr));
        }
        Ok(Self { matrix, scale })
    }

    /// Thermal deviation `Z1 + Z2 + Z3` of three like spins.
    pub fn thermal() -> Self {
        let m = &(&pauli("ZII").unwrap() + &pauli("IZI").unwrap()) + &pauli("IIZ").unwrap();
        Self { matrix: m, scale: 1.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.max_abs() < 1e-14
    }
}

/// Labelled pseudopure deviation `(I+Z)(I+Z)X / 8` on (ancilla, ancilla, data).
pub fn pps_target() -> OperatorMatrix {
    let terms = ["IIX", "ZIX", "IZX", "ZZX"];
    terms
        .iter()
        .fold(OperatorMatrix::zeros(DIM), |acc, s| &acc + &pauli(s).unwrap())
        .scale(1.0 / 8.0)
}

/// Keeps the coherence orders `+-order` by cycling a collective Z phase.
///
/// `rho_f = (2/N) sum_k cos(order phi_k) R(phi_k) rho R(phi_k)^dagger`,
/// `phi_k = 2 pi k / N`. For `order = 0` the prefactor is `1/N`.
pub fn phase_cycle_filter(rho: &OperatorMatrix, order: i32, n_steps: usize) -> Result<OperatorMatrix, ProtocolError> {
    let n = rho.n_qubits();
    let min = n + order.unsigned_abs() as usize;
    if n_steps <= min {
        return Err(ProtocolError::Aliasing { n_steps, min });
    }
    let prefactor = if order == 0 { 1.0 } else { 2.0 } / n_steps as f64;
    let mut acc = OperatorMatrix::zeros(rho.dim());
    for k in 0..n_steps {
        let phi = 2.0 * PI * k as f64 / n_steps as f64;
        let r = collective_z_rotation(n, phi);
        acc = &acc + &r.conjugate(rho).scale(prefactor * (order as f64 * phi).cos());
    }
    Ok(acc)
}

/// Phase steps used by the triple-quantum filter.
pub const TQC_STEPS: usize = 8;

fn permutation(swap_a: usize, swap_b: usize) -> OperatorMatrix {
    OperatorMatrix::from_fn(DIM, |row, col| {
        let image = if col == swap_a {
            swap_b
        } else if col == swap_b {
            swap_a
        } else {
            col
        };
        if image == row {
            c(1., 0.)
        } else {
            c(0., 0.)
        }
    })
    .expect("dim 8")
}

/// Rotation of the data qubit by `angle` about `axis`, `exp(-i angle P / 2)`.
fn data_rotation(axis: Pauli, angle: f64) -> OperatorMatrix {
    let p = pauli_operator(&PauliString::single(3, DATA_QUBIT, axis));
    &OperatorMatrix::identity(DIM).scale((angle / 2.0).cos()) + &p.scale_complex(c(0.0, -(angle / 2.0).sin()))
}

/// Input-preparation unitary `U_p` taking the data `X` of the pseudopure state to `input`.
pub fn input_unitary(input: Pauli) -> Result<OperatorMatrix, ProtocolError> {
    match input {
        Pauli::X => Ok(OperatorMatrix::identity(DIM)),
        Pauli::Y => Ok(data_rotation(Pauli::Z, PI / 2.0)),
        Pauli::Z => Ok(data_rotation(Pauli::Y, -PI / 2.0)),
        Pauli::I => Err(ProtocolError::BadInput),
    }
}

/// Pseudopure-state preparation: pre-rotation, then the triple-quantum filter
/// conjugated by `U_pps`.
///
/// `U_pps` swaps `|001>` and `|111>`, carrying `|000><001| + h.c.` (the labelled
/// PPS) onto the triple-quantum coherence `|000><111| + h.c.`.
#[derive(Debug, Clone)]
pub struct PpsPreparation {
    pub u_pps: OperatorMatrix,
    /// Turns thermal Z polarization of the data spin into transverse magnetization.
    pub pre_rotation: OperatorMatrix,
}

impl Default for PpsPreparation {
    fn default() -> Self {
        Self {
            u_pps: permutation(0b001, 0b111),
            pre_rotation: data_rotation(Pauli::Y, PI / 2.0),
        }
    }
}

impl PpsPreparation {
    /// Projection stage only: `U_pps^dagger . 3QCF . U_pps`.
    pub fn project(&self, rho: &OperatorMatrix) -> Result<OperatorMatrix, ProtocolError> {
        let into = self.u_pps.conjugate(rho);
        let filtered = phase_cycle_filter(&into, 3, TQC_STEPS)?;
        Ok(self.u_pps.adjoint().conjugate(&filtered))
    }

    /// Full preparation from a thermal deviation. A zero result means the input
    /// had no overlap with the filtered coherence.
    pub fn prepare(&self, thermal: &DeviationState) -> Result<DeviationState, ProtocolError> {
        let rotated = self.pre_rotation.conjugate(&thermal.matrix);
        Ok(DeviationState {
            matrix: self.project(&rotated)?,
            scale: thermal.scale,
        })
    }
}

pub fn prepare_pps(thermal: &DeviationState) -> Result<DeviationState, ProtocolError> {
    PpsPreparation::default().prepare(thermal)
}

/// `(1 + f_x + f_y + f_z) / 4`.
pub fn entanglement_fidelity(f_x: f64, f_y: f64, f_z: f64) -> f64 {
    (1.0 + f_x + f_y + f_z) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// No encoding: the data spin sits next to idle ancillae.
    Unencoded,
    /// Encode and decode, no correction step.
    Decoded,
    /// Encode, decode and correct.
    Corrected,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Unencoded => "unencoded",
            Mode::Decoded => "decoded",
            Mode::Corrected => "corrected",
        }
    }
}

pub const INPUTS: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

/// One pass through prep -> (encode) -> channel -> (decode [+ correct]).
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub code: CodeCircuit,
    pub mode: Mode,
    pub channel: NoiseChannel,
    /// Depolarizing strength applied to every qubit after each encode/decode block.
    pub gate_error: f64,
}

impl Pipeline {
    pub fn new(mode: Mode, channel: NoiseChannel) -> Self {
        Self {
            code: CodeCircuit::default(),
            mode,
            channel,
            gate_error: 0.0,
        }
    }

    fn gate_noise(&self, rho: &OperatorMatrix) -> Result<OperatorMatrix, ProtocolError> {
        apply_gate_noise(self.gate_error, rho)
    }

    /// Runs the pipeline on a 3-qubit deviation already in the ancilla-`|00>` block.
    pub fn run(&self, rho: &OperatorMatrix) -> Result<OperatorMatrix, ProtocolError> {
        match self.mode {
            Mode::Unencoded => Ok(self.channel.apply(rho)?),
            Mode::Decoded | Mode::Corrected => {
                let enc = self.gate_noise(&self.code.encode(rho)?)?;
                let noisy = self.channel.apply(&enc)?;
                let out = self.code.decode_and_correct(&noisy, self.mode == Mode::Corrected)?;
                self.gate_noise(&out)
            }
        }
    }
}

fn apply_gate_noise(strength: f64, rho: &OperatorMatrix) -> Result<OperatorMatrix, ProtocolError> {
    if strength == 0.0 {
        return Ok(rho.clone());
    }
    if !(0.0..=1.0).contains(&strength) {
        return Err(ProtocolError::BadGateError(strength));
    }
    let n = rho.n_qubits();
    let ch = compose((0..n).map(|q| depolarizing(strength, q)).collect::<Result<Vec<_>, _>>()?)?;
    Ok(ch.apply(rho)?)
}

/// Prepared input deviation for one Pauli label: `U_p . PPS . U_p^dagger`.
pub fn prepared_input(input: Pauli) -> Result<OperatorMatrix, ProtocolError> {
    let pps = prepare_pps(&DeviationState::thermal())?;
    Ok(input_unitary(input)?.conjugate(&pps.matrix))
}

/// `Tr[P_data rho_data]` with ancillae traced out.
pub fn data_signal(rho: &OperatorMatrix, input: Pauli) -> f64 {
    let data = partial_trace(rho, &[DATA_QUBIT], &[2, 2, 2]).expect("3-qubit operator");
    input.matrix().inner(&data).re
}

/// Fraction of the input signal surviving on the data qubit.
pub fn survival_fraction(pipeline: &Pipeline, input: Pauli) -> Result<f64, ProtocolError> {
    let rho = prepared_input(input)?;
    let out = pipeline.run(&rho)?;
    Ok(data_signal(&out, input) / data_signal(&rho, input))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub f_x: f64,
    pub f_y: f64,
    pub f_z: f64,
    pub entanglement_fidelity: f64,
    /// Per input (X, Y, Z): `[s00, s10, s01, s11]`. Absent for unencoded runs.
    pub syndromes: Option<[[f64; 4]; 3]>,
    /// Pipeline executions per input label.
    pub executions: [usize; 3],
}

impl RoundResult {
    fn from_parts(f: [f64; 3], syndromes: Option<[[f64; 4]; 3]>, executions: [usize; 3]) -> Self {
        Self {
            f_x: f[0],
            f_y: f[1],
            f_z: f[2],
            entanglement_fidelity: entanglement_fidelity(f[0], f[1], f[2]),
            syndromes,
            executions,
        }
    }

    /// Syndrome intensities averaged over the three inputs.
    pub fn mean_syndromes(&self) -> Option<[f64; 4]> {
        self.syndromes.map(|s| {
            let mut out = [0.0; 4];
            for row in &s {
                for k in 0..4 {
                    out[k] += row[k] / 3.0;
                }
            }
            out
        })
    }
}

#[derive(Debug, Clone)]
pub struct RoundConfig {
    pub mode: Mode,
    pub channel: ChannelSpec,
    pub delay_ms: f64,
    pub gate_error: f64,
    pub ancilla_order: AncillaOrder,
}

impl RoundConfig {
    pub fn new(mode: Mode, channel: ChannelSpec, delay_ms: f64) -> Self {
        Self {
            mode,
            channel,
            delay_ms,
            gate_error: 0.0,
            ancilla_order: AncillaOrder::Standard,
        }
    }
}

fn normalised_syndromes(out: &OperatorMatrix, input: Pauli, reference: f64) -> [f64; 4] {
    // syndrome_intensities assumes a unit |00><00| (x) P input
    syndrome_intensities(out, input).map(|s| s * 2.0 / reference)
}

pub fn run_one_round(cfg: &RoundConfig) -> Result<RoundResult, ProtocolError> {
    let pipeline = Pipeline {
        code: CodeCircuit::new(cfg.ancilla_order),
        mode: cfg.mode,
        channel: cfg.channel.build(cfg.delay_ms)?,
        gate_error: cfg.gate_error,
    };
    let mut f = [0.0; 3];
    let mut syn = [[0.0; 4]; 3];
    for (k, &input) in INPUTS.iter().enumerate() {
        let rho = prepared_input(input)?;
        let reference = data_signal(&rho, input);
        let out = pipeline.run(&rho)?;
        f[k] = data_signal(&out, input) / reference;
        syn[k] = normalised_syndromes(&out, input, reference);
    }
    let syndromes = (cfg.mode != Mode::Unencoded).then_some(syn);
    Ok(RoundResult::from_parts(f, syndromes, [1; 3]))
}

#[derive(Debug, Clone)]
pub struct TwoRoundConfig {
    pub channel: ChannelSpec,
    /// Total interaction interval; each round sees half of it.
    pub total_delay_ms: f64,
    /// Replace block projection by a literal reset of the ancillae to `|00>`.
    pub ideal_ancillae: bool,
    pub gate_error: f64,
    pub ancilla_order: AncillaOrder,
}

impl TwoRoundConfig {
    pub fn new(channel: ChannelSpec, total_delay_ms: f64) -> Self {
        Self {
            channel,
            total_delay_ms,
            ideal_ancillae: false,
            gate_error: 0.0,
            ancilla_order: AncillaOrder::Standard,
        }
    }
}

/// Syndrome-toggling unitaries on the ancillae: `II, XI, IX, XX`.
pub fn syndrome_toggles() -> [OperatorMatrix; 4] {
    ["III", "XII", "IXI", "XXI"].map(|s| pauli(s).unwrap())
}

/// Signal accounting for the two-round projection step of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchBudget {
    /// `Tr[(I (x) P) rho]` after round one.
    pub round_one_signal: f64,
    /// `Tr[(|00><00| (x) P) U_s rho U_s^dagger]` for each toggle, before projection.
    pub block_signals: [f64; 4],
}

struct TwoRoundRun {
    output: OperatorMatrix,
    reference: f64,
    budget: BranchBudget,
    executions: usize,
}

fn run_two_round_input(cfg: &TwoRoundConfig, input: Pauli) -> Result<TwoRoundRun, ProtocolError> {
    if !(cfg.total_delay_ms.is_finite() && cfg.total_delay_ms >= 0.0) {
        return Err(ProtocolError::BadSplit(format!(
            "total interval must be non-negative, got {}",
            cfg.total_delay_ms
        )));
    }
    let half = cfg.total_delay_ms / 2.0;
    let round = Pipeline {
        code: CodeCircuit::new(cfg.ancilla_order),
        mode: Mode::Corrected,
        channel: cfg.channel.build(half)?,
        gate_error: cfg.gate_error,
    };
    let rho = prepared_input(input)?;
    let reference = data_signal(&rho, input);
    let after_one = round.run(&rho)?;

    let p_obs = kronecker(&OperatorMatrix::identity(4), &input.matrix());
    let block_obs = crate::code::syndrome_observable(0, 0, input);
    let mut budget = BranchBudget {
        round_one_signal: p_obs.inner(&after_one).re,
        block_signals: [0.0; 4],
    };

    if cfg.ideal_ancillae {
        let data = partial_trace(&after_one, &[DATA_QUBIT], &[2, 2, 2])?;
        let fresh = embed_data(&data);
        budget.block_signals[0] = budget.round_one_signal;
        return Ok(TwoRoundRun {
            output: round.run(&fresh)?,
            reference,
            budget,
            executions: 1,
        });
    }

    let prep = PpsPreparation::default();
    let u_p = input_unitary(input)?;
    let mut total = OperatorMatrix::zeros(DIM);
    let mut executions = 0;
    for (s, toggle) in syndrome_toggles().iter().enumerate() {
        let swapped = toggle.conjugate(&after_one);
        budget.block_signals[s] = block_obs.inner(&swapped).re;
        // project onto the ancilla-|00> block through the same filter used for preparation
        let aligned = u_p.adjoint().conjugate(&swapped);
        let projected = u_p.conjugate(&prep.project(&aligned)?);
        let projected = apply_gate_noise(cfg.gate_error, &projected)?;
        total = &total + &round.run(&projected)?;
        executions += 1;
    }
    Ok(TwoRoundRun {
        output: total,
        reference,
        budget,
        executions,
    })
}

pub fn run_two_rounds(cfg: &TwoRoundConfig) -> Result<RoundResult, ProtocolError> {
    let mut f = [0.0; 3];
    let mut syn = [[0.0; 4]; 3];
    let mut executions = [0; 3];
    for (k, &input) in INPUTS.iter().enumerate() {
        let run = run_two_round_input(cfg, input)?;
        f[k] = data_signal(&run.output, input) / run.reference;
        syn[k] = normalised_syndromes(&run.output, input, run.reference);
        executions[k] = run.executions;
    }
    Ok(RoundResult::from_parts(f, Some(syn), executions))
}

/// Signal accounting of the projection step, per input label.
pub fn two_round_budget(cfg: &TwoRoundConfig, input: Pauli) -> Result<BranchBudget, ProtocolError> {
    Ok(run_two_round_input(cfg, input)?.budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{coherent_z, dephasing_with_flip};
    use crate::spin::coherence_decompose;

    fn fixed(ch: NoiseChannel) -> ChannelSpec {
        ChannelSpec::Fixed(ch)
    }

    fn independent_dephasing(q: f64) -> NoiseChannel {
        compose((0..3).map(|k| dephasing_with_flip(q, k).unwrap()).collect()).unwrap()
    }

    #[test]
    fn fidelity_formula_examples() {
        assert_eq!(entanglement_fidelity(1.0, 1.0, 1.0), 1.0);
        assert_eq!(entanglement_fidelity(0.0, 0.0, 1.0), 0.5);
        assert_eq!(entanglement_fidelity(-1.0, -1.0, 1.0), 0.0);
    }

    #[test]
    fn deviation_state_must_be_traceless() {
        assert!(matches!(
            DeviationState::new(OperatorMatrix::identity(8), 1.0),
            Err(ProtocolError::NotTraceless(_))
        ));
        assert!(DeviationState::new(pps_target(), 1e-5).is_ok());
    }

    #[test]
    fn filter_examples() {
        let tqc = &OperatorMatrix::basis_outer(8, 0, 7) + &OperatorMatrix::basis_outer(8, 7, 0);
        let out = phase_cycle_filter(&tqc, 3, 8).unwrap();
        assert!(out.max_abs_diff(&tqc) < 1e-12);
        let diag = OperatorMatrix::diagonal(&[1., -2., 3., 0.5, 0., 1., -1., 4.]).unwrap();
        assert!(phase_cycle_filter(&diag, 3, 8).unwrap().max_abs() < 1e-12);
        assert_eq!(
            phase_cycle_filter(&diag, 3, 6).unwrap_err(),
            ProtocolError::Aliasing { n_steps: 6, min: 6 }
        );
    }

    #[test]
    fn filter_matches_coherence_projector() {
        let rho = OperatorMatrix::from_fn(8, |i, j| c(((i * 7 + j * 3) % 5) as f64 - 2.0, (i as f64 - j as f64) * 0.1))
            .unwrap()
            .hermitian_part();
        let parts = coherence_decompose(&rho);
        let want = &parts[&3] + &parts[&-3];
        assert!(phase_cycle_filter(&rho, 3, 8).unwrap().max_abs_diff(&want) < 1e-10);
        let want1 = &parts[&1] + &parts[&-1];
        assert!(phase_cycle_filter(&rho, 1, 5).unwrap().max_abs_diff(&want1) < 1e-10);
        assert!(phase_cycle_filter(&rho, 0, 4).unwrap().max_abs_diff(&parts[&0]) < 1e-10);
    }

    #[test]
    fn pps_from_thermal() {
        let out = prepare_pps(&DeviationState::thermal()).unwrap();
        let target = pps_target();
        // (I+Z)(I+Z)X/4 = 2 * target
        assert!(out.matrix.max_abs_diff(&target.scale(2.0)) < 1e-12);
    }

    #[test]
    fn pps_rejects_orthogonal_input() {
        let m = &pauli("ZII").unwrap() - &pauli("IZI").unwrap();
        let out = prepare_pps(&DeviationState::new(m, 1.0).unwrap()).unwrap();
        assert!(out.is_zero());
    }

    #[test]
    fn pps_projection_is_idempotent() {
        let prep = PpsPreparation::default();
        let target = pps_target();
        assert!(prep.project(&target).unwrap().max_abs_diff(&target) < 1e-12);
        let once = prep.prepare(&DeviationState::thermal()).unwrap().matrix;
        let twice = prep.project(&once).unwrap();
        assert!(once.max_abs_diff(&twice) < 1e-12);
    }

    #[test]
    fn input_unitaries_map_x() {
        let x = pauli("IIX").unwrap();
        for (p, s) in [(Pauli::X, "IIX"), (Pauli::Y, "IIY"), (Pauli::Z, "IIZ")] {
            let u = input_unitary(p).unwrap();
            assert!(u.conjugate(&x).max_abs_diff(&pauli(s).unwrap()) < 1e-12, "{s}");
        }
        assert_eq!(input_unitary(Pauli::I).unwrap_err(), ProtocolError::BadInput);
    }

    #[test]
    fn survival_examples() {
        for mode in [Mode::Unencoded, Mode::Decoded, Mode::Corrected] {
            let p = Pipeline::new(mode, NoiseChannel::Identity);
            for input in INPUTS {
                assert!((survival_fraction(&p, input).unwrap() - 1.0).abs() < 1e-12);
            }
        }
        let p = Pipeline::new(Mode::Unencoded, dephasing_with_flip(0.5, DATA_QUBIT).unwrap());
        assert!(survival_fraction(&p, Pauli::X).unwrap().abs() < 1e-12);
        assert!((survival_fraction(&p, Pauli::Z).unwrap() - 1.0).abs() < 1e-12);

        for q in [0.1, 0.37, 0.9] {
            for qubit in 0..3 {
                let p = Pipeline::new(Mode::Corrected, dephasing_with_flip(q, qubit).unwrap());
                for input in INPUTS {
                    assert!((survival_fraction(&p, input).unwrap() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn one_round_coherent_error() {
        for theta in [0.3, 1.1, 2.9] {
            let r = run_one_round(&RoundConfig::new(Mode::Corrected, fixed(coherent_z(theta, 0)), 0.0)).unwrap();
            assert!((r.entanglement_fidelity - 1.0).abs() < 1e-12);
            let s = r.mean_syndromes().unwrap();
            let c2 = (theta / 2.0).cos().powi(2);
            assert!((s[0] - c2).abs() < 1e-12 && (s[1] - (1.0 - c2)).abs() < 1e-12);
            assert!(s[2].abs() < 1e-12 && s[3].abs() < 1e-12);
        }
    }

    #[test]
    fn one_round_dephasing_laws() {
        let q: f64 = 0.1;
        let r = run_one_round(&RoundConfig::new(Mode::Corrected, fixed(independent_dephasing(q)), 0.0)).unwrap();
        assert!((r.entanglement_fidelity - 0.972).abs() < 1e-12);
        let r = run_one_round(&RoundConfig::new(
            Mode::Unencoded,
            fixed(dephasing_with_flip(q, DATA_QUBIT).unwrap()),
            0.0,
        ))
        .unwrap();
        assert!((r.entanglement_fidelity - 0.9).abs() < 1e-12);
        assert!(r.syndromes.is_none());
    }

    #[test]
    fn two_rounds_zero_delay_is_perfect() {
        let spec = ChannelSpec::Dephasing {
            t2_ms: 1.0,
            qubits: vec![0, 1, 2],
        };
        for ideal in [false, true] {
            let mut cfg = TwoRoundConfig::new(spec.clone(), 0.0);
            cfg.ideal_ancillae = ideal;
            let r = run_two_rounds(&cfg).unwrap();
            assert!((r.entanglement_fidelity - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_rounds_dephasing_law() {
        let q: f64 = 0.2;
        let ql = 3.0 * q * q * (1.0 - q) + q.powi(3);
        let want = 1.0 - 2.0 * ql * (1.0 - ql);
        assert!((want - 0.813632).abs() < 1e-12);
        for ideal in [true, false] {
            let mut cfg = TwoRoundConfig::new(fixed(independent_dephasing(q)), 1.0);
            cfg.ideal_ancillae = ideal;
            let r = run_two_rounds(&cfg).unwrap();
            assert!((r.entanglement_fidelity - want).abs() < 1e-10, "ideal={ideal}");
        }
    }

    #[test]
    fn two_rounds_count_branches() {
        let cfg = TwoRoundConfig::new(fixed(independent_dephasing(0.1)), 1.0);
        assert_eq!(run_two_rounds(&cfg).unwrap().executions, [4, 4, 4]);
    }

    #[test]
    fn two_rounds_reject_negative_interval() {
        let cfg = TwoRoundConfig::new(ChannelSpec::Identity, -1.0);
        assert!(matches!(run_two_rounds(&cfg), Err(ProtocolError::BadSplit(_))));
    }

    #[test]
    fn branch_budget_conserves_signal() {
        let cfg = TwoRoundConfig::new(fixed(compose(vec![independent_dephasing(0.15), coherent_z(0.4, 2)]).unwrap()), 1.0);
        for input in INPUTS {
            let b = two_round_budget(&cfg, input).unwrap();
            let sum: f64 = b.block_signals.iter().sum();
            assert!((sum - b.round_one_signal).abs() < 1e-10);
        }
    }
}

//! GRAPE pulse design for the collective carbon RF channel.
//!
//! A pulse is a train of piecewise-constant slices with `(u_x, u_y)`
//! amplitudes in kHz. Slice `k` evolves under
//! `H_drift(offset) + rf_scale * (pi u_x SX + pi u_y SY)` where `SX`, `SY` are
//! the collective Pauli sums, so an amplitude of 1 kHz nutates every spin at
//! 1 kHz. Gradients are exact: each slice generator is diagonalised and the
//! Frechet derivative of its exponential is taken in the eigenbasis.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::code::CodeCircuit;
use crate::config::{GrapeConfig, GrapeTarget};
use crate::linalg::{HermitianEigen, LinalgError, OperatorMatrix};
use crate::noise::{Distribution, DispersionModel};
use crate::spin::{build_hamiltonian, collective, Pauli, SpinError, SpinSystem};

#[derive(Debug, Error)]
pub enum GrapeError {
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("dimension mismatch: target is {target}x{target}, system has dimension {system}")]
    DimensionMismatch { target: usize, system: usize },
    #[error("pulse file line {line}: {message}")]
    PulseFile { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Mat = DMatrix<Complex64>;

/// Piecewise-constant control amplitudes (kHz) on the collective x/y drive.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPulse {
    pub dt_ms: f64,
    pub amplitudes: Vec<[f64; 2]>,
    /// Optional bound on `|u_x|` and `|u_y|`, enforced by clipping.
    pub max_amplitude_khz: Option<f64>,
}

impl ControlPulse {
    pub fn new(dt_ms: f64, amplitudes: Vec<[f64; 2]>) -> Result<Self, GrapeError> {
        let pulse = Self {
            dt_ms,
            amplitudes,
            max_amplitude_khz: None,
        };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn zeros(n_slices: usize, dt_ms: f64) -> Result<Self, GrapeError> {
        Self::new(dt_ms, vec![[0.0; 2]; n_slices])
    }

    /// A smooth, deterministic starting guess: a few incommensurate
    /// sinusoids per quadrature with peak amplitude near `scale_khz`.
    pub fn smooth_guess(n_slices: usize, duration_ms: f64, scale_khz: f64) -> Result<Self, GrapeError> {
        let dt = duration_ms / n_slices.max(1) as f64;
        let amps = (0..n_slices)
            .map(|k| {
                let t = (k as f64 + 0.5) / n_slices as f64;
                let x = (2.0 * PI * 1.0 * t).sin() + 0.6 * (2.0 * PI * 3.3 * t + 0.4).sin()
                    - 0.3 * (2.0 * PI * 7.1 * t).cos();
                let y = (2.0 * PI * 2.2 * t + 1.1).sin() - 0.5 * (2.0 * PI * 4.7 * t).cos()
                    + 0.25 * (2.0 * PI * 9.4 * t + 0.3).sin();
                [scale_khz * x / 1.9, scale_khz * y / 1.75]
            })
            .collect();
        Self::new(dt, amps)
    }

    pub fn with_max_amplitude(mut self, bound_khz: f64) -> Result<Self, GrapeError> {
        if !(bound_khz.is_finite() && bound_khz > 0.0) {
            return Err(GrapeError::InvalidPulse(format!("amplitude bound must be positive, got {bound_khz}")));
        }
        self.max_amplitude_khz = Some(bound_khz);
        self.clip();
        Ok(self)
    }

    pub fn n_slices(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn duration_ms(&self) -> f64 {
        self.dt_ms * self.n_slices() as f64
    }

    pub fn validate(&self) -> Result<(), GrapeError> {
        if !(self.dt_ms.is_finite() && self.dt_ms > 0.0) {
            return Err(GrapeError::InvalidPulse(format!("slice length must be positive, got {}", self.dt_ms)));
        }
        if let Some(k) = self.amplitudes.iter().position(|a| !(a[0].is_finite() && a[1].is_finite())) {
            return Err(GrapeError::InvalidPulse(format!("non-finite amplitude in slice {k}")));
        }
        if let Some(b) = self.max_amplitude_khz {
            if self.amplitudes.iter().flatten().any(|a| a.abs() > b * (1.0 + 1e-12)) {
                return Err(GrapeError::InvalidPulse(format!("amplitude exceeds the bound {b} kHz")));
            }
        }
        Ok(())
    }

    fn clip(&mut self) {
        if let Some(b) = self.max_amplitude_khz {
            for a in self.amplitudes.iter_mut().flatten() {
                *a = a.clamp(-b, b);
            }
        }
    }

    /// Splits every slice into `factor` equal sub-slices with the same
    /// amplitudes. The propagator is unchanged.
    pub fn refine(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        Self {
            dt_ms: self.dt_ms / factor as f64,
            amplitudes: self
                .amplitudes
                .iter()
                .flat_map(|a| std::iter::repeat_n(*a, factor))
                .collect(),
            max_amplitude_khz: self.max_amplitude_khz,
        }
    }

    /// Writes the plain-text pulse format: two header comments, then one
    /// `u_x_khz u_y_khz` line per slice.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), GrapeError> {
        writeln!(w, "# n_slices={}", self.n_slices())?;
        writeln!(w, "# dt_ms={}", self.dt_ms)?;
        for [x, y] in &self.amplitudes {
            writeln!(w, "{x} {y}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, GrapeError> {
        let mut n_slices: Option<usize> = None;
        let mut dt: Option<f64> = None;
        let mut amps = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let err = |message: String| GrapeError::PulseFile { line: lineno, message };
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some((key, value)) = comment.split_once('=') {
                    match key.trim() {
                        "n_slices" => {
                            n_slices = Some(value.trim().parse().map_err(|e| err(format!("n_slices: {e}")))?)
                        }
                        "dt_ms" => dt = Some(value.trim().parse().map_err(|e| err(format!("dt_ms: {e}")))?),
                        _ => {}
                    }
                }
                continue;
            }
            let cols: Vec<&str> = trimmed.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(err(format!("expected 2 columns, found {}", cols.len())));
            }
            let parse = |s: &str| f64::from_str(s).map_err(|e| err(format!("'{s}': {e}")));
            amps.push([parse(cols[0])?, parse(cols[1])?]);
        }
        let dt = dt.ok_or_else(|| GrapeError::PulseFile {
            line: 0,
            message: "missing '# dt_ms=' header".into(),
        })?;
        if let Some(n) = n_slices {
            if n != amps.len() {
                return Err(GrapeError::PulseFile {
                    line: 0,
                    message: format!("header declares {n} slices, file has {}", amps.len()),
                });
            }
        }
        Self::new(dt, amps)
    }
}

/// One point of the robustness ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleMember {
    pub shift_offset_khz: f64,
    pub rf_scale: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessEnsemble {
    members: Vec<EnsembleMember>,
}

/// RF scales of the default ensemble.
pub const DEFAULT_RF_SCALES: [f64; 3] = [0.95, 1.0, 1.05];

impl RobustnessEnsemble {
    /// Builds an ensemble from `(offset, rf_scale, weight)` triples; weights
    /// are normalised to sum to one.
    pub fn new(members: Vec<EnsembleMember>) -> Result<Self, GrapeError> {
        if members.is_empty() {
            return Err(GrapeError::InvalidEnsemble("no members".into()));
        }
        for m in &members {
            if !(m.rf_scale.is_finite() && m.rf_scale > 0.0) {
                return Err(GrapeError::InvalidEnsemble(format!("rf scale must be positive, got {}", m.rf_scale)));
            }
            if !(m.weight.is_finite() && m.weight >= 0.0) || !m.shift_offset_khz.is_finite() {
                return Err(GrapeError::InvalidEnsemble("weights and offsets must be finite, weights >= 0".into()));
            }
        }
        let total: f64 = members.iter().map(|m| m.weight).sum();
        if total <= 0.0 {
            return Err(GrapeError::InvalidEnsemble("weights sum to zero".into()));
        }
        Ok(Self {
            members: members
                .into_iter()
                .map(|m| EnsembleMember {
                    weight: m.weight / total,
                    ..m
                })
                .collect(),
        })
    }

    pub fn single() -> Self {
        Self {
            members: vec![EnsembleMember {
                shift_offset_khz: 0.0,
                rf_scale: 1.0,
                weight: 1.0,
            }],
        }
    }

    /// Tensor grid of Gauss-Hermite offsets (standard deviation `width_khz`)
    /// and the given RF scales with equal weights.
    pub fn grid(width_khz: f64, n_offsets: usize, rf_scales: &[f64]) -> Result<Self, GrapeError> {
        let model = DispersionModel::new(Distribution::Gaussian, width_khz, n_offsets)
            .map_err(|e| GrapeError::InvalidEnsemble(e.to_string()))?;
        let (offsets, weights) = model.quadrature();
        let mut members = Vec::new();
        for (off, w) in offsets.iter().zip(&weights) {
            for &rf in rf_scales {
                members.push(EnsembleMember {
                    shift_offset_khz: *off,
                    rf_scale: rf,
                    weight: w / rf_scales.len() as f64,
                });
            }
        }
        Self::new(members)
    }

    /// Five offsets over the width calibrated to the default T2* times the
    /// three default RF scales.
    pub fn default_for_t2_star(t2_star_ms: f64) -> Result<Self, GrapeError> {
        let width = 1.0 / (2.0 * PI * t2_star_ms);
        Self::grid(width, 5, &DEFAULT_RF_SCALES)
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Drift and control operators for a carbon spin system.
///
/// Bath spins are ignored: pulses act on the carbons only.
#[derive(Debug, Clone)]
pub struct ControlSystem {
    system: SpinSystem,
    sum_x: Mat,
    sum_y: Mat,
    dim: usize,
}

impl ControlSystem {
    pub fn new(sys: &SpinSystem) -> Result<Self, GrapeError> {
        let system = sys.clone().with_bath(Vec::new());
        system.validate()?;
        let n = system.n_spins();
        Ok(Self {
            sum_x: collective(n, Pauli::X).into_matrix(),
            sum_y: collective(n, Pauli::Y).into_matrix(),
            dim: 1 << n,
            system,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, offset_khz: f64) -> Result<Mat, GrapeError> {
        Ok(build_hamiltonian(&self.system, offset_khz)?.into_matrix())
    }

    fn slice_generator(&self, drift: &Mat, rf: f64, amp: [f64; 2]) -> Mat {
        let mut h = drift.clone();
        h += &self.sum_x * Complex64::new(PI * rf * amp[0], 0.0);
        h += &self.sum_y * Complex64::new(PI * rf * amp[1], 0.0);
        h
    }
}

/// Time-ordered propagator of `pulse` for one ensemble member.
pub fn propagate(
    pulse: &ControlPulse,
    ctrl: &ControlSystem,
    member: &EnsembleMember,
) -> Result<OperatorMatrix, GrapeError> {
    pulse.validate()?;
    let drift = ctrl.drift(member.shift_offset_khz)?;
    let mut u = Mat::identity(ctrl.dim, ctrl.dim);
    for amp in &pulse.amplitudes {
        let h = ctrl.slice_generator(&drift, member.rf_scale, *amp);
        let eig = HermitianEigen::new_unchecked(&h);
        u = eig.propagator(pulse.dt_ms) * u;
    }
    Ok(OperatorMatrix::from_matrix(u)?)
}

/// `|Tr(target^dagger u)|^2 / d^2`.
pub fn gate_fidelity(u: &OperatorMatrix, target: &OperatorMatrix) -> Result<f64, GrapeError> {
    if u.dim() != target.dim() {
        return Err(GrapeError::DimensionMismatch {
            target: target.dim(),
            system: u.dim(),
        });
    }
    let d = u.dim() as f64;
    Ok(target.inner(u).norm_sqr() / (d * d))
}

/// Fidelity and gradient of one member, weights not yet applied.
fn member_fidelity_gradient(
    pulse: &ControlPulse,
    ctrl: &ControlSystem,
    member: &EnsembleMember,
    target_adj: &Mat,
    want_gradient: bool,
) -> Result<(f64, Vec<[f64; 2]>), GrapeError> {
    let n = pulse.n_slices();
    let d = ctrl.dim;
    let dt = pulse.dt_ms;
    let drift = ctrl.drift(member.shift_offset_khz)?;
    let mut eigs = Vec::with_capacity(n);
    // forward[k] = U_k ... U_1 (forward[0] = I)
    let mut forward = Vec::with_capacity(n + 1);
    forward.push(Mat::identity(d, d));
    for amp in &pulse.amplitudes {
        let h = ctrl.slice_generator(&drift, member.rf_scale, *amp);
        let eig = HermitianEigen::new_unchecked(&h);
        let uk = eig.propagator(dt);
        let next = &uk * forward.last().expect("non-empty");
        forward.push(next);
        eigs.push(eig);
    }
    let g = (target_adj * &forward[n]).trace();
    let fid = g.norm_sqr() / (d * d) as f64;
    if !want_gradient {
        return Ok((fid, Vec::new()));
    }

    let mut grad = vec![[0.0; 2]; n];
    let cx = &ctrl.sum_x * Complex64::new(PI * member.rf_scale, 0.0);
    let cy = &ctrl.sum_y * Complex64::new(PI * member.rf_scale, 0.0);
    // back = T^dagger U_N ... U_{k+1}
    let mut back = target_adj.clone();
    for k in (0..n).rev() {
        let eig = &eigs[k];
        let v = &eig.vectors;
        let v_adj = v.adjoint();
        let phases: Vec<Complex64> = eig.values.iter().map(|&l| Complex64::new(0.0, -l * dt).exp()).collect();
        // Daleckii-Krein kernel of exp(-i dt H)
        let gamma = Mat::from_fn(d, d, |j, l| {
            let diff = eig.values[j] - eig.values[l];
            if diff.abs() < 1e-9 {
                Complex64::new(0.0, -dt) * phases[j]
            } else {
                (phases[j] - phases[l]) / diff
            }
        });
        let a = &v_adj * &forward[k] * &back * v;
        let mx = &v_adj * &cx * v;
        let my = &v_adj * &cy * v;
        let mut dgx = Complex64::new(0.0, 0.0);
        let mut dgy = Complex64::new(0.0, 0.0);
        for j in 0..d {
            for l in 0..d {
                let w = a[(l, j)] * gamma[(j, l)];
                dgx += w * mx[(j, l)];
                dgy += w * my[(j, l)];
            }
        }
        let scale = 2.0 / (d * d) as f64;
        grad[k] = [scale * (g.conj() * dgx).re, scale * (g.conj() * dgy).re];
        // U_k = V diag(phases) V^dagger
        let uk = v * Mat::from_diagonal(&nalgebra::DVector::from_vec(phases)) * &v_adj;
        back *= uk;
    }
    Ok((fid, grad))
}

fn check_target(ctrl: &ControlSystem, target: &OperatorMatrix) -> Result<(), GrapeError> {
    if target.dim() != ctrl.dim {
        return Err(GrapeError::DimensionMismatch {
            target: target.dim(),
            system: ctrl.dim,
        });
    }
    Ok(())
}

fn ensemble_eval(
    pulse: &ControlPulse,
    ctrl: &ControlSystem,
    target: &OperatorMatrix,
    ensemble: &RobustnessEnsemble,
    want_gradient: bool,
) -> Result<(f64, Vec<[f64; 2]>), GrapeError> {
    pulse.validate()?;
    check_target(ctrl, target)?;
    let target_adj = target.matrix().adjoint();
    let parts = ensemble
        .members()
        .par_iter()
        .map(|m| member_fidelity_gradient(pulse, ctrl, m, &target_adj, want_gradient).map(|r| (m.weight, r)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut fid = 0.0;
    let mut grad = if want_gradient {
        vec![[0.0; 2]; pulse.n_slices()]
    } else {
        Vec::new()
    };
    for (w, (f, g)) in parts {
        fid += w * f;
        for (acc, gk) in grad.iter_mut().zip(&g) {
            acc[0] += w * gk[0];
            acc[1] += w * gk[1];
        }
    }
    Ok((fid, grad))
}

/// Ensemble-averaged fidelity `sum_m w_m Phi_m`.
pub fn ensemble_fidelity(
    pulse: &ControlPulse,
    ctrl: &ControlSystem,
    target: &OperatorMatrix,
    ensemble: &RobustnessEnsemble,
) -> Result<f64, GrapeError> {
    ensemble_eval(pulse, ctrl, target, ensemble, false).map(|(f, _)| f)
}

/// Exact gradient of the ensemble-averaged fidelity with respect to every
/// slice amplitude (per kHz).
pub fn gradient(
    pulse: &ControlPulse,
    ctrl: &ControlSystem,
    target: &OperatorMatrix,
    ensemble: &RobustnessEnsemble,
) -> Result<Vec<[f64; 2]>, GrapeError> {
    ensemble_eval(pulse, ctrl, target, ensemble, true).map(|(_, g)| g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrapeSettings {
    pub max_iterations: usize,
    /// Stop once the ensemble fidelity reaches this value.
    pub target_fidelity: f64,
    /// Stop once the gradient norm falls below this value.
    pub gradient_tolerance: f64,
    /// Wall-clock budget; `None` for unlimited.
    pub time_limit: Option<Duration>,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    /// Step shrink factor during backtracking.
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Step doublings tried after an immediately accepted step.
    pub max_expansions: usize,
    pub initial_step: f64,
    pub direction: AscentDirection,
}

impl Default for GrapeSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            target_fidelity: 1.0 - 1e-10,
            gradient_tolerance: 1e-10,
            time_limit: None,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            max_expansions: 4,
            initial_step: 1.0,
            direction: AscentDirection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrapeStatus {
    ReachedTarget,
    GradientConverged,
    MaxIterations,
    TimeLimit,
    /// Backtracking could not find an ascent step.
    Stalled,
}

impl fmt::Display for GrapeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GrapeStatus::ReachedTarget => "reached target",
            GrapeStatus::GradientConverged => "gradient converged",
            GrapeStatus::MaxIterations => "iteration limit",
            GrapeStatus::TimeLimit => "time limit",
            GrapeStatus::Stalled => "line search stalled",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct GrapeResult {
    pub pulse: ControlPulse,
    pub fidelity: f64,
    /// Ensemble fidelity after each accepted iteration; entry 0 is the start.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub status: GrapeStatus,
}

type Amplitudes = Vec<[f64; 2]>;

fn dot(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x[0] * y[0] + x[1] * y[1]).sum()
}

/// Search direction of each ascent step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AscentDirection {
    /// Plain gradient, trial step from the Barzilai-Borwein estimate.
    Gradient,
    /// Polak-Ribiere conjugate gradient, restarted whenever it stops being an
    /// ascent direction.
    #[default]
    ConjugateGradient,
}

/// Gradient-based ascent with a backtracking (Armijo) line search.
///
/// Only steps that increase the ensemble fidelity are accepted, so the trace
/// is monotone. When the first trial step is accepted the search also tries
/// doubling it while that keeps improving.
pub fn optimize(
    initial: &ControlPulse,
    ctrl: &ControlSystem,
    target: &OperatorMatrix,
    ensemble: &RobustnessEnsemble,
    settings: &GrapeSettings,
) -> Result<GrapeResult, GrapeError> {
    let start = Instant::now();
    let mut pulse = initial.clone();
    pulse.clip();
    let (mut fid, mut grad) = ensemble_eval(&pulse, ctrl, target, ensemble, true)?;
    let mut trace = vec![fid];
    let mut step = settings.initial_step;
    // previous (position, gradient, direction, slope along direction)
    let mut prev: Option<(Amplitudes, Amplitudes, Amplitudes, f64)> = None;
    let mut status = GrapeStatus::MaxIterations;
    let mut iterations = 0;
    let limits = (1e-8 * settings.initial_step, 1e8 * settings.initial_step);

    let trial_at = |pulse: &ControlPulse, dir: &[[f64; 2]], alpha: f64| {
        let mut trial = pulse.clone();
        for (a, d) in trial.amplitudes.iter_mut().zip(dir) {
            a[0] += alpha * d[0];
            a[1] += alpha * d[1];
        }
        trial.clip();
        trial
    };

    for it in 0..settings.max_iterations {
        if fid >= settings.target_fidelity {
            status = GrapeStatus::ReachedTarget;
            break;
        }
        if dot(&grad, &grad).sqrt() < settings.gradient_tolerance {
            status = GrapeStatus::GradientConverged;
            break;
        }
        if settings.time_limit.is_some_and(|limit| start.elapsed() >= limit) {
            status = GrapeStatus::TimeLimit;
            break;
        }

        let mut dir = grad.clone();
        if let Some((x_prev, g_prev, d_prev, slope_prev)) = &prev {
            match settings.direction {
                AscentDirection::Gradient => {
                    let s: Vec<[f64; 2]> =
                        pulse.amplitudes.iter().zip(x_prev).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect();
                    let y: Vec<[f64; 2]> = grad.iter().zip(g_prev).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect();
                    let sy = dot(&s, &y);
                    // ascent: curvature is negative along the step
                    if sy < 0.0 {
                        step = (-dot(&s, &s) / sy).clamp(limits.0, limits.1);
                    }
                }
                AscentDirection::ConjugateGradient => {
                    let y: Vec<[f64; 2]> = grad.iter().zip(g_prev).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect();
                    let beta = (dot(&grad, &y) / dot(g_prev, g_prev)).max(0.0);
                    for (d, dp) in dir.iter_mut().zip(d_prev) {
                        d[0] += beta * dp[0];
                        d[1] += beta * dp[1];
                    }
                    let slope = dot(&dir, &grad);
                    if slope <= 0.0 {
                        dir = grad.clone();
                    }
                    // keep the predicted first-order gain of the last step
                    step = (step * slope_prev / dot(&dir, &grad)).clamp(limits.0, limits.1);
                }
            }
        }
        let slope = dot(&dir, &grad);

        let mut accepted: Option<(ControlPulse, f64, f64)> = None;
        let mut alpha = step;
        for attempt in 0..=settings.max_backtracks {
            let trial = trial_at(&pulse, &dir, alpha);
            let f_trial = ensemble_eval(&trial, ctrl, target, ensemble, false)?.0;
            let moved: f64 = trial
                .amplitudes
                .iter()
                .zip(&pulse.amplitudes)
                .zip(&grad)
                .map(|((t, p), g)| (t[0] - p[0]) * g[0] + (t[1] - p[1]) * g[1])
                .sum();
            if f_trial > fid && f_trial - fid >= settings.armijo * moved {
                accepted = Some((trial, f_trial, alpha));
                if attempt == 0 {
                    // the first guess was short enough; see whether longer is better
                    for _ in 0..settings.max_expansions {
                        let longer = trial_at(&pulse, &dir, 2.0 * alpha);
                        let f_longer = ensemble_eval(&longer, ctrl, target, ensemble, false)?.0;
                        let best = accepted.as_ref().map_or(fid, |a| a.1);
                        if f_longer <= best {
                            break;
                        }
                        alpha *= 2.0;
                        accepted = Some((longer, f_longer, alpha));
                    }
                }
                break;
            }
            alpha *= settings.backtrack;
        }
        let Some((mut trial, mut f_trial, mut alpha)) = accepted else {
            status = GrapeStatus::Stalled;
            break;
        };
        // conjugate directions need a near-exact line search: try the peak of
        // the parabola through f(0), f'(0) and f(alpha)
        let curvature = (f_trial - fid - slope * alpha) / (alpha * alpha);
        if curvature < 0.0 {
            let peak = (-slope / (2.0 * curvature)).clamp(limits.0, limits.1);
            if (peak / alpha - 1.0).abs() > 0.1 {
                let candidate = trial_at(&pulse, &dir, peak);
                let f_candidate = ensemble_eval(&candidate, ctrl, target, ensemble, false)?.0;
                if f_candidate > f_trial {
                    (trial, f_trial, alpha) = (candidate, f_candidate, peak);
                }
            }
        }
        step = alpha;
        let old_pulse = std::mem::replace(&mut pulse, trial);
        let (f_new, g_new) = ensemble_eval(&pulse, ctrl, target, ensemble, true)?;
        debug_assert!((f_new - f_trial).abs() < 1e-12);
        let g_old = std::mem::replace(&mut grad, g_new);
        prev = Some((old_pulse.amplitudes, g_old, dir, slope));
        fid = f_new;
        trace.push(fid);
        iterations = it + 1;
    }
    if iterations == settings.max_iterations && fid >= settings.target_fidelity {
        status = GrapeStatus::ReachedTarget;
    }
    Ok(GrapeResult {
        pulse,
        fidelity: fid,
        trace,
        iterations,
        status,
    })
}

/// Runs [`optimize`] on successively refined copies of the pulse. Each stage
/// splits every slice by the given factor (which leaves the propagator
/// unchanged) and continues from there, so the fidelity trace stays monotone
/// across stages.
pub fn optimize_multiresolution(
    initial: &ControlPulse,
    ctrl: &ControlSystem,
    target: &OperatorMatrix,
    ensemble: &RobustnessEnsemble,
    refinements: &[usize],
    settings: &GrapeSettings,
) -> Result<GrapeResult, GrapeError> {
    let start = Instant::now();
    let mut result = optimize(initial, ctrl, target, ensemble, settings)?;
    for &factor in refinements {
        let mut stage = settings.clone();
        if let Some(limit) = settings.time_limit {
            stage.time_limit = Some(limit.saturating_sub(start.elapsed()));
        }
        let refined = result.pulse.refine(factor);
        let next = optimize(&refined, ctrl, target, ensemble, &stage)?;
        let mut trace = result.trace;
        trace.extend_from_slice(&next.trace[1..]);
        result = GrapeResult {
            trace,
            iterations: result.iterations + next.iterations,
            ..next
        };
    }
    Ok(result)
}

/// Target unitary named by a configuration.
pub fn target_unitary(target: GrapeTarget, dim: usize) -> OperatorMatrix {
    match target {
        GrapeTarget::Encode => CodeCircuit::default().u_encode.clone(),
        GrapeTarget::Decode => CodeCircuit::default().u_decode.clone(),
        GrapeTarget::Identity => OperatorMatrix::identity(dim),
    }
}

/// Runs the staged optimisation described by a `[grape]` configuration.
pub fn design(cfg: &GrapeConfig, system: &SpinSystem) -> Result<GrapeResult, GrapeError> {
    let ctrl = ControlSystem::new(system)?;
    let target = target_unitary(cfg.target, ctrl.dim());
    check_target(&ctrl, &target)?;
    let ensemble = RobustnessEnsemble::grid(cfg.dispersion_width_khz, cfg.offsets, &cfg.rf_scales)?;
    let mut initial = match &cfg.initial_pulse {
        Some(path) => ControlPulse::read_from(std::io::BufReader::new(std::fs::File::open(path)?))?,
        None => ControlPulse::smooth_guess(cfg.stages[0], cfg.duration_ms, cfg.initial_amplitude_khz)?,
    };
    if let Some(b) = cfg.max_amplitude_khz {
        initial = initial.with_max_amplitude(b)?;
    }
    let factors: Vec<usize> = cfg.stages.windows(2).map(|w| w[1] / w[0]).collect();
    let factors = if cfg.initial_pulse.is_some() { Vec::new() } else { factors };
    optimize_multiresolution(&initial, &ctrl, &target, &ensemble, &factors, &cfg.settings)
}

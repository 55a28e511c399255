//! Acceptance criteria, one line per criterion.
//!
//! Runs without the libtest harness so every verdict is printed even when all
//! of them pass. Exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nmr_qec::code::{embed_data, error_operator, CodeCircuit};
use nmr_qec::config::{parse_config, SweepMode};
use nmr_qec::grape::{
    ensemble_fidelity, gradient, optimize_multiresolution, ControlPulse, ControlSystem, GrapeSettings,
    RobustnessEnsemble,
};
use nmr_qec::linalg::{partial_trace, OperatorMatrix};
use nmr_qec::noise::{
    coherent_z, compose, dephasing, dephasing_with_flip, natural_evolution, unitary, ChannelSpec,
    NoiseChannel, DEFAULT_T2_STAR_MS,
};
use nmr_qec::protocol::{
    phase_cycle_filter, pps_target, prepare_pps, run_one_round, run_two_rounds, DeviationState, Mode, Pipeline,
    RoundConfig, TwoRoundConfig,
};
use nmr_qec::spin::{coherence_decompose, BathCoupling, SpinSystem};
use nmr_qec::sweep::{dominant_error_syndrome, run_sweep, to_csv};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MALONIC_BATH: &str = include_str!("../../../configs/malonic_bath.conf");

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Verdict;

fn fixed(ch: NoiseChannel) -> ChannelSpec {
    ChannelSpec::Fixed(ch)
}

fn independent_dephasing(q: f64) -> NoiseChannel {
    compose((0..3).map(|k| dephasing_with_flip(q, k).unwrap()).collect()).unwrap()
}

fn syndrome_truth_table() -> Verdict {
    let mut worst: f64 = 0.0;
    for (slot, label) in ["III", "ZII", "IZI", "IIZ"].iter().enumerate() {
        let ch = unitary(error_operator(label)).unwrap();
        let r = run_one_round(&RoundConfig::new(Mode::Corrected, fixed(ch), 0.0)).unwrap();
        for per_input in r.syndromes.unwrap() {
            for (k, s) in per_input.iter().enumerate() {
                let want = if k == slot { 1.0 } else { 0.0 };
                worst = worst.max((s - want).abs());
            }
        }
    }
    verdict(worst <= 1e-9, format!("max syndrome deviation {worst:.1e}"))
}

fn random_data_state(rng: &mut ChaCha8Rng) -> OperatorMatrix {
    // traceless data deviation with a random Bloch direction
    let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let c = |re: f64, im: f64| Complex64::new(re, im);
    OperatorMatrix::from_rows(2, &[c(v[2], 0.0), c(v[0], -v[1]), c(v[0], v[1]), c(-v[2], 0.0)]).unwrap()
}

fn exact_correctability() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let states: Vec<OperatorMatrix> = (0..100).map(|_| random_data_state(&mut rng)).collect();
    let mut worst_f: f64 = 0.0;
    let mut worst_state: f64 = 0.0;
    for theta in [0.1, 0.5, 1.0, 2.0, PI] {
        for qubit in 0..3 {
            for ch in [coherent_z(theta, qubit), dephasing(theta, qubit)] {
                let r = run_one_round(&RoundConfig::new(Mode::Corrected, fixed(ch.clone()), 0.0)).unwrap();
                worst_f = worst_f.max((r.entanglement_fidelity - 1.0).abs());
                let pipeline = Pipeline::new(Mode::Corrected, ch);
                for data in &states {
                    let out = pipeline.run(&embed_data(data)).unwrap();
                    let back = partial_trace(&out, &[2], &[2, 2, 2]).unwrap();
                    worst_state = worst_state.max(back.max_abs_diff(data));
                }
            }
        }
    }
    verdict(
        worst_f <= 1e-9 && worst_state <= 1e-9,
        format!("max |F_e - 1| {worst_f:.1e}, max data-state error {worst_state:.1e} over 100 states"),
    )
}

/// Probability that independent flips with probability `q` on `n` qubits
/// produce a pattern accepted by `ok`.
fn enumerate_flips(n: usize, q: f64, ok: impl Fn(u32) -> bool) -> f64 {
    (0..1u32 << n)
        .filter(|&pattern| ok(pattern))
        .map(|pattern| {
            let w = pattern.count_ones() as i32;
            q.powi(w) * (1.0 - q).powi(n as i32 - w)
        })
        .sum()
}

fn analytic_laws() -> Verdict {
    let mut worst = [0.0f64; 3];
    for k in 0..=10 {
        let q = 0.05 * k as f64;
        let ch = independent_dephasing(q);

        let un = run_one_round(&RoundConfig::new(Mode::Unencoded, fixed(ch.clone()), 0.0)).unwrap();
        let oracle_un = enumerate_flips(1, q, |p| p == 0);
        let law_un = 1.0 - q;
        worst[0] = worst[0].max((un.entanglement_fidelity - oracle_un).abs()).max((oracle_un - law_un).abs());

        let one = run_one_round(&RoundConfig::new(Mode::Corrected, fixed(ch.clone()), 0.0)).unwrap();
        let oracle_one = enumerate_flips(3, q, |p| p.count_ones() <= 1);
        let law_one = (1.0 - q).powi(3) + 3.0 * q * (1.0 - q).powi(2);
        worst[1] = worst[1].max((one.entanglement_fidelity - oracle_one).abs()).max((oracle_one - law_one).abs());

        let two = run_two_rounds(&TwoRoundConfig {
            ideal_ancillae: true,
            ..TwoRoundConfig::new(fixed(ch), 0.0)
        })
        .unwrap();
        // six flips over two rounds; success when the logical flips cancel
        let oracle_two = enumerate_flips(6, q, |p| {
            let logical = |bits: u32| (bits.count_ones() >= 2) as u32;
            (logical(p & 7) + logical(p >> 3)) % 2 == 0
        });
        let q_l = 3.0 * q * q * (1.0 - q) + q.powi(3);
        let law_two = 1.0 - 2.0 * q_l * (1.0 - q_l);
        worst[2] = worst[2].max((two.entanglement_fidelity - oracle_two).abs()).max((oracle_two - law_two).abs());
    }
    verdict(
        worst[0] <= 1e-9 && worst[1] <= 1e-9 && worst[2] <= 1e-8,
        format!(
            "max deviations: unencoded {:.1e}, one round {:.1e}, two rounds {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn curve_ordering() -> Verdict {
    let cfg = parse_config(MALONIC_BATH).unwrap();
    let rows = run_sweep(&cfg).unwrap();
    let at = |delay: f64, mode: Mode| {
        rows.iter()
            .find(|r| r.delay_ms == delay && r.mode == SweepMode::OneRound(mode))
            .map(|r| r.f_e)
            .unwrap()
    };
    let mut violations = Vec::new();
    let mut min_gap = f64::INFINITY;
    for &d in cfg.delays_ms.iter().filter(|&&d| d > 0.2 + 1e-9) {
        let (u, dec, cor) = (at(d, Mode::Unencoded), at(d, Mode::Decoded), at(d, Mode::Corrected));
        min_gap = min_gap.min(cor - dec).min(dec - u);
        if !(cor >= dec - 1e-12 && dec >= u - 1e-12) {
            violations.push(d);
        }
    }
    let dominant = dominant_error_syndrome(&rows, SweepMode::OneRound(Mode::Corrected));
    let names = ["s00", "s10", "s01", "s11"];
    verdict(
        violations.is_empty() && dominant == Some(3),
        format!(
            "{} delays out of order {:?}, smallest gap {min_gap:.2e}; dominant syndrome {}",
            violations.len(),
            violations,
            dominant.map_or("none", |k| names[k])
        ),
    )
}

fn revival_scaling() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for d in [0.5, 1.0, 2.0] {
        let sys = SpinSystem::uncoupled(&["C1", "C2", "Cm"], &[0.0, 0.0, 0.0])
            .with_bath(vec![BathCoupling { carbon: 2, coupling_khz: d }]);
        let signal = |tau: f64| {
            let ch = natural_evolution(&sys, tau, 1.0).unwrap();
            run_one_round(&RoundConfig::new(Mode::Unencoded, fixed(ch), 0.0)).unwrap().f_x
        };
        // first return to the initial value after the initial decay
        let period = 1.0 / d;
        let n = 2000;
        let (best_tau, best) = (0..=n)
            .map(|k| {
                let tau = period * (0.5 + k as f64 / n as f64);
                (tau, signal(tau))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let dip = signal(0.5 * period);
        let ok = (best_tau * d - 1.0).abs() <= 0.01 && (best - 1.0).abs() <= 1e-6 && dip < 0.5;
        pass &= ok;
        details.push(format!("d={d}: revival at {best_tau:.4} ms (<X>={best:.6})"));
    }
    verdict(pass, details.join(", "))
}

/// Logical Pauli weights `[I, X, Y, Z]` of one ideal-ancilla round: gate
/// depolarizing `p` on every qubit after encoding, dephasing `q` on every
/// qubit, perfect correction, gate depolarizing `p` on the data afterwards.
fn round_logical_channel(p: f64, q: f64) -> [f64; 4] {
    // per-qubit Pauli weights after encode noise then dephasing, as (x, z) bits
    let gate = [1.0 - p, p / 3.0, p / 3.0, p / 3.0]; // I, X, Y, Z
    let mut per_qubit = [0.0; 4]; // index = 2 * x + z
    for (g, &wg) in gate.iter().enumerate() {
        let (gx, gz) = [(0, 0), (1, 0), (1, 1), (0, 1)][g];
        for (dz, wd) in [(0, 1.0 - q), (1, q)] {
            per_qubit[2 * gx + (gz ^ dz)] += wg * wd;
        }
    }
    let mut logical = [0.0; 4];
    for pattern in 0..64usize {
        let cells: Vec<usize> = (0..3).map(|k| (pattern >> (2 * k)) & 3).collect();
        let weight: f64 = cells.iter().map(|&c| per_qubit[c]).product();
        let z_weight = cells.iter().filter(|&&c| c & 1 == 1).count();
        let x_parity = cells.iter().filter(|&&c| c & 2 == 2).count() % 2;
        let lx = (z_weight >= 2) as usize;
        logical[2 * x_parity + lx] += weight;
    }
    let as_ixyz = |m: [f64; 4]| [m[0], m[1], m[3], m[2]];
    compose_pauli(as_ixyz(logical), gate)
}

/// Composition of two single-qubit Pauli channels, weights in `[I, X, Y, Z]`.
fn compose_pauli(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        for j in 0..4 {
            // Paulis multiply as XOR of (x, z) bit pairs
            let bits = |k: usize| [(0, 0), (1, 0), (1, 1), (0, 1)][k];
            let (xi, zi) = bits(i);
            let (xj, zj) = bits(j);
            let k = match (xi ^ xj, zi ^ zj) {
                (0, 0) => 0,
                (1, 0) => 1,
                (1, 1) => 2,
                _ => 3,
            };
            out[k] += a[i] * b[j];
        }
    }
    out
}

fn first_crossover(one: &[f64], two: &[f64]) -> Option<usize> {
    (0..one.len()).find(|&k| two[k] > one[k] && (k..one.len()).all(|j| two[j] >= one[j]))
}

fn two_round_advantage() -> Verdict {
    let t2 = 1.0;
    let p = 0.01;
    let spec = ChannelSpec::Dephasing {
        t2_ms: t2,
        qubits: vec![0, 1, 2],
    };
    let delays: Vec<f64> = (0..=75).map(|k| 0.02 * k as f64).collect();
    let mut sim = (Vec::new(), Vec::new());
    let mut oracle = (Vec::new(), Vec::new());
    let mut worst: f64 = 0.0;
    for &tau in &delays {
        let one = run_one_round(&RoundConfig {
            gate_error: p,
            ..RoundConfig::new(Mode::Corrected, spec.clone(), tau)
        })
        .unwrap();
        let two = run_two_rounds(&TwoRoundConfig {
            ideal_ancillae: true,
            gate_error: p,
            ..TwoRoundConfig::new(spec.clone(), tau)
        })
        .unwrap();
        let q_full = 0.5 * (1.0 - (-tau / t2).exp());
        let q_half = 0.5 * (1.0 - (-tau / (2.0 * t2)).exp());
        let o1 = round_logical_channel(p, q_full)[0];
        let half = round_logical_channel(p, q_half);
        let o2 = compose_pauli(half, half)[0];
        worst = worst.max((one.entanglement_fidelity - o1).abs()).max((two.entanglement_fidelity - o2).abs());
        sim.0.push(one.entanglement_fidelity);
        sim.1.push(two.entanglement_fidelity);
        oracle.0.push(o1);
        oracle.1.push(o2);
    }
    let found = first_crossover(&sim.0, &sim.1);
    let expected = first_crossover(&oracle.0, &oracle.1);
    let pass = match (found, expected) {
        (Some(a), Some(b)) => a.abs_diff(b) <= 1 && a > 0,
        _ => false,
    };
    let show = |k: Option<usize>| k.map_or("none".to_string(), |k| format!("{:.2} ms", delays[k]));
    verdict(
        pass,
        format!(
            "crossover at {} (oracle {}), gate error {p}, T2 {t2} ms; max |F_e - oracle| {worst:.1e}",
            show(found),
            show(expected)
        ),
    )
}

fn experiment_count() -> Verdict {
    let r = run_two_rounds(&TwoRoundConfig::new(fixed(independent_dephasing(0.1)), 1.0)).unwrap();
    verdict(r.executions == [4, 4, 4], format!("branches per input (X, Y, Z): {:?}", r.executions))
}

fn fd_error(ctrl: &ControlSystem, target: &OperatorMatrix, pulse: &ControlPulse, ens: &RobustnessEnsemble) -> f64 {
    let g = gradient(pulse, ctrl, target, ens).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let scale = g.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    for k in 0..pulse.n_slices() {
        for c in 0..2 {
            let mut plus = pulse.clone();
            plus.amplitudes[k][c] += h;
            let mut minus = pulse.clone();
            minus.amplitudes[k][c] -= h;
            let fd = (ensemble_fidelity(&plus, ctrl, target, ens).unwrap()
                - ensemble_fidelity(&minus, ctrl, target, ens).unwrap())
                / (2.0 * h);
            worst = worst.max((fd - g[k][c]).abs() / scale);
        }
    }
    worst
}

fn random_pulse(rng: &mut ChaCha8Rng, n: usize, dt: f64, amp: f64) -> ControlPulse {
    let a = (0..n).map(|_| [rng.gen_range(-amp..amp), rng.gen_range(-amp..amp)]).collect();
    ControlPulse::new(dt, a).unwrap()
}

fn grape() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let encoder = CodeCircuit::default().u_encode.clone();

    let spin = ControlSystem::new(&SpinSystem::uncoupled(&["a"], &[1.3])).unwrap();
    let half_pi = OperatorMatrix::from_rows(
        2,
        &[
            Complex64::new(0.5f64.sqrt(), 0.0),
            Complex64::new(0.0, -(0.5f64.sqrt())),
            Complex64::new(0.0, -(0.5f64.sqrt())),
            Complex64::new(0.5f64.sqrt(), 0.0),
        ],
    )
    .unwrap();
    let fd2 = fd_error(&spin, &half_pi, &random_pulse(&mut rng, 20, 0.05, 5.0), &RobustnessEnsemble::single());
    let malonic = ControlSystem::new(&SpinSystem::malonic()).unwrap();
    let small = RobustnessEnsemble::grid(0.1, 2, &[0.97, 1.02]).unwrap();
    let fd8 = fd_error(&malonic, &encoder, &random_pulse(&mut rng, 20, 0.05, 5.0), &small);

    let ensemble = RobustnessEnsemble::default_for_t2_star(DEFAULT_T2_STAR_MS).unwrap();
    let settings = GrapeSettings {
        max_iterations: 20_000,
        target_fidelity: 0.998,
        time_limit: Some(Duration::from_secs(14 * 60)),
        ..GrapeSettings::default()
    };
    let initial = ControlPulse::smooth_guess(100, 1.0, 5.0).unwrap();
    let res = optimize_multiresolution(&initial, &malonic, &encoder, &ensemble, &[10], &settings).unwrap();
    let monotone = res.trace.windows(2).all(|w| w[1] >= w[0]);
    let reached = res.fidelity >= 0.998;
    let pass = fd2 <= 1e-5 && fd8 <= 1e-5 && monotone && res.pulse.n_slices() == 1000 && res.fidelity >= 0.99;
    let outcome = if reached {
        "target 0.998 reached".to_string()
    } else {
        "target 0.998 NOT reached within budget; floor 0.99 applies".to_string()
    };
    verdict(
        pass,
        format!(
            "gradient vs finite differences {fd2:.1e} (d=2), {fd8:.1e} (d=8); best ensemble fidelity {:.6} on {} slices after {} iterations ({}); {outcome}",
            res.fidelity,
            res.pulse.n_slices(),
            res.iterations,
            res.status
        ),
    )
}

fn frobenius_angle(a: &OperatorMatrix, b: &OperatorMatrix) -> f64 {
    // sine of the angle from the component of `a` orthogonal to `b`
    let along = b.inner(a) / b.inner(b);
    let orthogonal = a - &b.scale_complex(along);
    (orthogonal.frobenius_norm() / a.frobenius_norm()).asin()
}

fn pps_projector() -> Verdict {
    let out = prepare_pps(&DeviationState::thermal()).unwrap();
    let angle = frobenius_angle(&out.matrix, &pps_target());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let entries: Vec<Complex64> =
            (0..64).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let rho = OperatorMatrix::from_rows(8, &entries).unwrap().hermitian_part();
        let parts = coherence_decompose(&rho);
        let direct = &parts[&3] + &parts[&-3];
        worst = worst.max(phase_cycle_filter(&rho, 3, 8).unwrap().max_abs_diff(&direct));
    }
    verdict(
        angle <= 1e-8 && worst <= 1e-10,
        format!("PPS angle {angle:.1e} rad; filter vs projector {worst:.1e} on 100 states"),
    )
}

fn determinism() -> Verdict {
    let exe = env!("CARGO_BIN_EXE_nmr-qec");
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("malonic.conf");
    // outputs other than the CSV are not needed here
    let text: String = MALONIC_BATH
        .lines()
        .filter(|l| !l.starts_with("gnuplot") && !l.starts_with("fits") && !l.starts_with("csv"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&config, text).unwrap();
    let mut outputs = Vec::new();
    for (k, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}.csv"));
        let status = std::process::Command::new(exe)
            .args(["--threads", threads, "run"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push(std::fs::read(&out).unwrap());
    }
    let library = to_csv(&run_sweep(&parse_config(MALONIC_BATH).unwrap()).unwrap()).into_bytes();
    let same = outputs[0] == outputs[1] && outputs[0] == library;
    verdict(
        same,
        format!("two CLI runs (1 and 3 threads) and a library run: {} bytes each, identical = {same}", outputs[0].len()),
    )
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("syndrome truth table", syndrome_truth_table),
        ("exact correctability", exact_correctability),
        ("analytic fidelity laws", analytic_laws),
        ("curve ordering on malonic acid", curve_ordering),
        ("revival scaling", revival_scaling),
        ("two-round advantage", two_round_advantage),
        ("experiment count", experiment_count),
        ("GRAPE gradient and encoder design", grape),
        ("PPS projector and phase cycling", pps_projector),
        ("determinism", determinism),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    println!();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !only.is_empty() && !only.iter().any(|o| o == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {:<4} {name} [{secs:.1} s]: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.pass {
            failed += 1;
        }
    }
    println!();
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

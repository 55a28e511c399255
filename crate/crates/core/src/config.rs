//! Experiment configuration files.
//!
//! A flat key-value format with `[section]` headers. Keys are written as
//! `key = value` or `key: value`; `#` starts a comment. Every key is checked
//! against its section and every error carries the offending line.
//!
//! ```text
//! [system]
//! builtin: malonic
//! bath.Cm = 0.25
//!
//! [channel]
//! kind = natural
//! lambda = 1
//! dispersion = lorentzian
//! t2_star_ms = 2
//!
//! [sweep]
//! modes = unencoded, decoded, corrected
//! delays = 0:4:0.1
//! ```

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::code::AncillaOrder;
use crate::grape::{GrapeSettings, DEFAULT_RF_SCALES};
use crate::noise::{ChannelSpec, DispersionModel, Distribution, Frame, DEFAULT_SAMPLES, DEFAULT_T2_STAR_MS};
use crate::protocol::Mode;
use crate::spin::{BathCoupling, SpinSystem, MAX_BATH_SPINS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key '{key}' in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: invalid value for '{key}': {message}")]
    Invalid { line: usize, key: String, message: String },
    #[error("missing required key '{key}' in [{section}]")]
    Missing { section: String, key: String },
}

/// What one CSV row group measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    OneRound(Mode),
    TwoRounds,
}

impl SweepMode {
    pub fn name(self) -> &'static str {
        match self {
            SweepMode::OneRound(m) => m.name(),
            SweepMode::TwoRounds => "two_rounds",
        }
    }
}

impl FromStr for SweepMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "unencoded" => Ok(SweepMode::OneRound(Mode::Unencoded)),
            "decoded" => Ok(SweepMode::OneRound(Mode::Decoded)),
            "corrected" => Ok(SweepMode::OneRound(Mode::Corrected)),
            "two_rounds" => Ok(SweepMode::TwoRounds),
            other => Err(format!(
                "unknown mode '{other}' (expected unencoded, decoded, corrected or two_rounds)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoRoundOptions {
    pub ideal_ancillae: bool,
    pub gate_error: f64,
}

impl Default for TwoRoundOptions {
    fn default() -> Self {
        Self {
            ideal_ancillae: false,
            gate_error: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub gnuplot: Option<PathBuf>,
    pub fits: Option<PathBuf>,
}

/// Which unitary a GRAPE run aims for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrapeTarget {
    Encode,
    Decode,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrapeConfig {
    pub target: GrapeTarget,
    pub duration_ms: f64,
    /// Slice counts of the successive stages; the last is the final resolution.
    pub stages: Vec<usize>,
    pub offsets: usize,
    pub dispersion_width_khz: f64,
    pub rf_scales: Vec<f64>,
    pub initial_amplitude_khz: f64,
    pub max_amplitude_khz: Option<f64>,
    pub initial_pulse: Option<PathBuf>,
    pub pulse_out: Option<PathBuf>,
    pub settings: GrapeSettings,
}

impl Default for GrapeConfig {
    fn default() -> Self {
        Self {
            target: GrapeTarget::Encode,
            duration_ms: 1.0,
            stages: vec![100, 1000],
            offsets: 5,
            dispersion_width_khz: 1.0 / (2.0 * std::f64::consts::PI * DEFAULT_T2_STAR_MS),
            rf_scales: DEFAULT_RF_SCALES.to_vec(),
            initial_amplitude_khz: 5.0,
            max_amplitude_khz: None,
            initial_pulse: None,
            pulse_out: None,
            settings: GrapeSettings {
                max_iterations: 20_000,
                target_fidelity: 0.999,
                ..GrapeSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: SpinSystem,
    pub channel: ChannelSpec,
    pub modes: Vec<SweepMode>,
    pub delays_ms: Vec<f64>,
    /// Gate-error knob for the one-round modes.
    pub gate_error: f64,
    pub ancilla_order: AncillaOrder,
    pub two_rounds: TwoRoundOptions,
    pub output: OutputPaths,
    pub grape: Option<GrapeConfig>,
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

/// Entries of one section, keyed by name.
struct Section {
    name: String,
    line: usize,
    entries: Vec<(String, Entry)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.iter_mut().find(|(k, _)| k == key).map(|(_, e)| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<(usize, T)>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(|x| Some((line, x))).map_err(|e| ConfigError::Invalid {
                line,
                key: key.to_string(),
                message: e.to_string(),
            }),
        }
    }

    fn number(&mut self, key: &str) -> Result<Option<(usize, f64)>, ConfigError> {
        let out = self.parse::<f64>(key)?;
        if let Some((line, x)) = out {
            if !x.is_finite() {
                return Err(invalid(line, key, "must be finite"));
            }
        }
        Ok(out)
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(Some(true)),
                "false" | "no" | "off" | "0" => Ok(Some(false)),
                _ => Err(invalid(line, key, "expected true or false")),
            },
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().find(|(_, e)| !e.used) {
            Some((key, e)) => Err(ConfigError::UnknownKey {
                line: e.line,
                section: self.name,
                key,
            }),
            None => Ok(()),
        }
    }
}

fn invalid(line: usize, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn in_range(line: usize, key: &str, x: f64, lo: f64, hi: f64) -> Result<f64, ConfigError> {
    if (lo..=hi).contains(&x) {
        Ok(x)
    } else {
        Err(invalid(line, key, format!("{x} is outside [{lo}, {hi}]")))
    }
}

fn positive(line: usize, key: &str, x: f64) -> Result<f64, ConfigError> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(line, key, format!("must be positive, got {x}")))
    }
}

fn list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| invalid(line, key, format!("'{s}': {e}"))))
        .collect()
}

const SECTIONS: [&str; 6] = ["system", "channel", "sweep", "two_rounds", "output", "grape"];

fn split_sections(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: format!("unterminated section header '{content}'"),
                })?
                .trim()
                .to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(ConfigError::UnknownSection { line, section: name });
            }
            if seen.insert(name.clone(), line).is_some() {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("section [{name}] appears twice"),
                });
            }
            sections.push(Section {
                name,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let split = match (content.find('='), content.find(':')) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let Some(pos) = split else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("expected 'key = value', found '{content}'"),
            });
        };
        let key = content[..pos].trim().to_string();
        let value = content[pos + 1..].trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "empty key".into(),
            });
        }
        let Some(section) = sections.last_mut() else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("key '{key}' appears before any [section] header"),
            });
        };
        if section.entries.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::Duplicate { line, key });
        }
        section.entries.push((
            key,
            Entry {
                line,
                value,
                used: false,
            },
        ));
    }
    Ok(sections)
}

fn parse_system(sec: &mut Section) -> Result<SpinSystem, ConfigError> {
    let mut sys = match sec.take("builtin") {
        Some((line, v)) => match v.as_str() {
            "malonic" => SpinSystem::malonic(),
            other => return Err(invalid(line, "builtin", format!("unknown builtin '{other}'"))),
        },
        None => {
            let (line, labels) = sec.take("labels").ok_or_else(|| ConfigError::Missing {
                section: "system".into(),
                key: "labels (or builtin)".into(),
            })?;
            let labels: Vec<String> = list(line, "labels", &labels)?;
            if labels.is_empty() || labels.len() > 3 {
                return Err(invalid(line, "labels", "expected one to three spin labels"));
            }
            for label in &labels {
                let key = format!("shift.{label}");
                if !sec.entries.iter().any(|(k, _)| *k == key) {
                    return Err(ConfigError::Missing {
                        section: "system".into(),
                        key,
                    });
                }
            }
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            SpinSystem::uncoupled(&refs, &vec![0.0; labels.len()])
        }
    };
    // builtin or labels must come first; everything else refers to labels
    let keys: Vec<String> = sec
        .entries
        .iter()
        .filter(|(_, e)| !e.used)
        .map(|(k, _)| k.clone())
        .collect();
    let mut bath = Vec::new();
    for key in keys {
        let parts: Vec<&str> = key.split('.').collect();
        let index = |line: usize, label: &str| {
            sys.label_index(label)
                .ok_or_else(|| invalid(line, &key, format!("unknown spin label '{label}'")))
        };
        match parts.as_slice() {
            ["shift", a] => {
                let (line, v) = sec.number(&key)?.expect("key present");
                let i = index(line, a)?;
                sys.shifts_khz[i] = v;
            }
            [table @ ("dipolar" | "j"), a, b] => {
                let (line, v) = sec.number(&key)?.expect("key present");
                let (i, j) = (index(line, a)?, index(line, b)?);
                if i >= j {
                    return Err(invalid(
                        line,
                        &key,
                        format!("coupling tables are upper-triangular: list '{b}' before '{a}'"),
                    ));
                }
                if *table == "dipolar" {
                    sys.dipolar_khz[i][j] = v;
                } else {
                    sys.j_khz[i][j] = v;
                }
            }
            ["bath", a] => {
                let (line, value) = sec.take(&key).expect("key present");
                let carbon = index(line, a)?;
                for d in list::<f64>(line, &key, &value)? {
                    if !d.is_finite() {
                        return Err(invalid(line, &key, "must be finite"));
                    }
                    bath.push((line, BathCoupling { carbon, coupling_khz: d }));
                }
            }
            _ => {
                let line = sec.take(&key).expect("key present").0;
                return Err(ConfigError::UnknownKey {
                    line,
                    section: "system".into(),
                    key,
                });
            }
        }
    }
    if bath.len() > MAX_BATH_SPINS {
        let line = bath[MAX_BATH_SPINS].0;
        return Err(invalid(line, "bath", format!("at most {MAX_BATH_SPINS} bath spins are supported")));
    }
    sys.bath = bath.into_iter().map(|(_, b)| b).collect();
    sys.validate().map_err(|e| invalid(sec.line, "system", e.to_string()))?;
    Ok(sys)
}

fn parse_qubits(sec: &mut Section, n: usize) -> Result<Vec<usize>, ConfigError> {
    match sec.take("qubits") {
        None => Ok((0..n).collect()),
        Some((line, v)) => list::<usize>(line, "qubits", &v)?
            .into_iter()
            .map(|q| {
                if (1..=n).contains(&q) {
                    Ok(q - 1)
                } else {
                    Err(invalid(line, "qubits", format!("qubit {q} outside 1..={n}")))
                }
            })
            .collect(),
    }
}

fn parse_channel(sec: Option<&mut Section>, system: &SpinSystem) -> Result<ChannelSpec, ConfigError> {
    let Some(sec) = sec else {
        return Ok(ChannelSpec::Identity);
    };
    let (kind_line, kind) = sec.take("kind").unwrap_or((sec.line, "natural".into()));
    let n = system.n_spins();
    match kind.as_str() {
        "identity" => Ok(ChannelSpec::Identity),
        "coherent_z" => {
            let (_, rate) = sec.number("rate_rad_per_ms")?.ok_or_else(|| ConfigError::Missing {
                section: "channel".into(),
                key: "rate_rad_per_ms".into(),
            })?;
            Ok(ChannelSpec::CoherentZ {
                rate_rad_per_ms: rate,
                qubits: parse_qubits(sec, n)?,
            })
        }
        "dephasing" => {
            let (line, t2) = sec.number("t2_ms")?.ok_or_else(|| ConfigError::Missing {
                section: "channel".into(),
                key: "t2_ms".into(),
            })?;
            Ok(ChannelSpec::Dephasing {
                t2_ms: positive(line, "t2_ms", t2)?,
                qubits: parse_qubits(sec, n)?,
            })
        }
        "natural" => {
            let lambda = match sec.number("lambda")? {
                Some((line, x)) => in_range(line, "lambda", x, 0.0, 1.0)?,
                None => 1.0,
            };
            let frame = match sec.take("frame") {
                Some((line, v)) => v.parse::<Frame>().map_err(|e| invalid(line, "frame", e.to_string()))?,
                None => Frame::default(),
            };
            let samples = match sec.parse::<usize>("samples")? {
                Some((line, 0)) => return Err(invalid(line, "samples", "need at least one sample")),
                Some((_, s)) => s,
                None => DEFAULT_SAMPLES,
            };
            let t2_star = sec.number("t2_star_ms")?;
            let width = sec.number("width_khz")?;
            let dispersion = match sec.take("dispersion") {
                None => {
                    if let Some((line, _)) = t2_star.or(width) {
                        return Err(invalid(line, "dispersion", "width given but no dispersion model selected"));
                    }
                    None
                }
                Some((line, v)) => {
                    let distribution = match v.as_str() {
                        "none" => None,
                        "gaussian" => Some(Distribution::Gaussian),
                        "lorentzian" => Some(Distribution::Lorentzian),
                        other => return Err(invalid(line, "dispersion", format!("unknown model '{other}'"))),
                    };
                    match (distribution, t2_star, width) {
                        (None, _, _) => None,
                        (Some(_), Some(_), Some((l, _))) => {
                            return Err(invalid(l, "width_khz", "give either t2_star_ms or width_khz, not both"))
                        }
                        (Some(dist), t2, w) => {
                            let width = match (t2, w) {
                                (_, Some((l, w))) => {
                                    if w < 0.0 {
                                        return Err(invalid(l, "width_khz", "must be non-negative"));
                                    }
                                    w
                                }
                                (Some((l, t)), None) => calibrated_width(dist, positive(l, "t2_star_ms", t)?),
                                (None, None) => calibrated_width(dist, DEFAULT_T2_STAR_MS),
                            };
                            Some(
                                DispersionModel::new(dist, width, samples)
                                    .map_err(|e| invalid(line, "dispersion", e.to_string()))?,
                            )
                        }
                    }
                }
            };
            Ok(ChannelSpec::Natural {
                system: system.clone(),
                decoupling_scale: lambda,
                dispersion,
                frame,
            })
        }
        other => Err(invalid(
            kind_line,
            "kind",
            format!("unknown channel kind '{other}' (expected identity, coherent_z, dephasing or natural)"),
        )),
    }
}

/// Width whose single-quantum decay `chi(2 pi t)` has dropped to `1/e` at `t2_star`.
fn calibrated_width(dist: Distribution, t2_star_ms: f64) -> f64 {
    let s = 2.0 * std::f64::consts::PI * t2_star_ms;
    match dist {
        Distribution::Lorentzian => 1.0 / s,
        Distribution::Gaussian => std::f64::consts::SQRT_2 / s,
    }
}

/// `a, b, c` or `start:stop:step` (inclusive of `stop` within rounding).
fn parse_delays(line: usize, value: &str) -> Result<Vec<f64>, ConfigError> {
    let key = "delays";
    let delays = if value.contains(':') {
        let parts: Vec<f64> = value
            .split(':')
            .map(|s| s.trim().parse::<f64>().map_err(|e| invalid(line, key, format!("'{s}': {e}"))))
            .collect::<Result<_, _>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(invalid(line, key, "range form is start:stop:step"));
        };
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid(line, key, "range step must be positive"));
        }
        let n = ((stop - start) / step + 1e-9).floor();
        if !(0.0..1e6).contains(&n) {
            return Err(invalid(line, key, "empty or oversized range"));
        }
        (0..=n as usize).map(|k| start + k as f64 * step).collect()
    } else {
        list::<f64>(line, key, value)?
    };
    if delays.is_empty() {
        return Err(invalid(line, key, "no delays given"));
    }
    if let Some(d) = delays.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(invalid(line, key, format!("delays must be non-negative, got {d}")));
    }
    if delays.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(line, key, "delays must be strictly increasing"));
    }
    Ok(delays)
}

fn parse_grape(sec: &mut Section) -> Result<GrapeConfig, ConfigError> {
    let mut g = GrapeConfig::default();
    if let Some((line, v)) = sec.take("target") {
        g.target = match v.as_str() {
            "encode" => GrapeTarget::Encode,
            "decode" => GrapeTarget::Decode,
            "identity" => GrapeTarget::Identity,
            other => return Err(invalid(line, "target", format!("unknown target '{other}'"))),
        };
    }
    if let Some((line, x)) = sec.number("duration_ms")? {
        g.duration_ms = positive(line, "duration_ms", x)?;
    }
    if let Some((line, v)) = sec.take("stages") {
        let stages: Vec<usize> = list(line, "stages", &v)?;
        if stages.is_empty() || stages[0] == 0 || stages.windows(2).any(|w| w[1] % w[0] != 0 || w[1] <= w[0]) {
            return Err(invalid(
                line,
                "stages",
                "slice counts must be positive and each must be a larger multiple of the previous",
            ));
        }
        g.stages = stages;
    }
    if let Some((line, n)) = sec.parse::<usize>("offsets")? {
        if n == 0 {
            return Err(invalid(line, "offsets", "need at least one offset"));
        }
        g.offsets = n;
    }
    if let Some((line, x)) = sec.number("dispersion_width_khz")? {
        g.dispersion_width_khz = in_range(line, "dispersion_width_khz", x, 0.0, f64::MAX)?;
    }
    if let Some((line, v)) = sec.take("rf_scales") {
        let scales: Vec<f64> = list(line, "rf_scales", &v)?;
        if scales.is_empty() || scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid(line, "rf_scales", "need positive scales"));
        }
        g.rf_scales = scales;
    }
    if let Some((line, x)) = sec.number("initial_amplitude_khz")? {
        g.initial_amplitude_khz = in_range(line, "initial_amplitude_khz", x, 0.0, f64::MAX)?;
    }
    if let Some((line, x)) = sec.number("max_amplitude_khz")? {
        g.max_amplitude_khz = Some(positive(line, "max_amplitude_khz", x)?);
    }
    g.initial_pulse = sec.take("initial_pulse").map(|(_, v)| PathBuf::from(v));
    g.pulse_out = sec.take("pulse").map(|(_, v)| PathBuf::from(v));
    if let Some((_, n)) = sec.parse::<usize>("max_iterations")? {
        g.settings.max_iterations = n;
    }
    if let Some((line, x)) = sec.number("target_fidelity")? {
        g.settings.target_fidelity = in_range(line, "target_fidelity", x, 0.0, 1.0)?;
    }
    if let Some((line, x)) = sec.number("time_limit_s")? {
        g.settings.time_limit = Some(Duration::from_secs_f64(positive(line, "time_limit_s", x)?));
    }
    Ok(g)
}

type SweepParts = (Vec<SweepMode>, Vec<f64>, f64, AncillaOrder);

fn parse_sweep(mut sweep: Section) -> Result<SweepParts, ConfigError> {
    let modes = match sweep.take("modes") {
        Some((line, v)) => {
            let modes: Vec<SweepMode> = list(line, "modes", &v)?;
            if modes.is_empty() {
                return Err(invalid(line, "modes", "mode list is empty"));
            }
            if (1..modes.len()).any(|i| modes[..i].contains(&modes[i])) {
                return Err(invalid(line, "modes", "mode listed twice"));
            }
            modes
        }
        None => vec![
            SweepMode::OneRound(Mode::Unencoded),
            SweepMode::OneRound(Mode::Decoded),
            SweepMode::OneRound(Mode::Corrected),
        ],
    };
    let (line, delays) = sweep.take("delays").ok_or_else(|| ConfigError::Missing {
        section: "sweep".into(),
        key: "delays".into(),
    })?;
    let delays_ms = parse_delays(line, &delays)?;
    let gate_error = match sweep.number("gate_error")? {
        Some((line, x)) => in_range(line, "gate_error", x, 0.0, 1.0)?,
        None => 0.0,
    };
    let ancilla_order = match sweep.take("ancilla_order") {
        None => AncillaOrder::Standard,
        Some((line, v)) => match v.as_str() {
            "standard" => AncillaOrder::Standard,
            "swapped" => AncillaOrder::Swapped,
            other => return Err(invalid(line, "ancilla_order", format!("unknown order '{other}'"))),
        },
    };
    sweep.finish()?;
    Ok((modes, delays_ms, gate_error, ancilla_order))
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut sections = split_sections(text)?;
    // a pulse-design file may leave the sweep out entirely
    let has_grape = sections.iter().any(|s| s.name == "grape");
    let mut get = |name: &str| sections.iter().position(|s| s.name == name).map(|i| sections.remove(i));

    let mut system_sec = get("system").ok_or_else(|| ConfigError::Missing {
        section: "system".into(),
        key: "builtin or labels".into(),
    })?;
    let system = parse_system(&mut system_sec)?;
    system_sec.finish()?;

    let mut channel_sec = get("channel");
    let channel = parse_channel(channel_sec.as_mut(), &system)?;
    if let Some(sec) = channel_sec {
        sec.finish()?;
    }

    let (modes, delays_ms, gate_error, ancilla_order) = match get("sweep") {
        Some(sweep) => parse_sweep(sweep)?,
        None if has_grape => (Vec::new(), Vec::new(), 0.0, AncillaOrder::Standard),
        None => {
            return Err(ConfigError::Missing {
                section: "sweep".into(),
                key: "delays".into(),
            })
        }
    };

    let mut two_rounds = TwoRoundOptions::default();
    if let Some(mut sec) = get("two_rounds") {
        if let Some(b) = sec.bool("ideal_ancillae")? {
            two_rounds.ideal_ancillae = b;
        }
        if let Some((line, x)) = sec.number("gate_error")? {
            two_rounds.gate_error = in_range(line, "gate_error", x, 0.0, 1.0)?;
        }
        sec.finish()?;
    }

    let mut output = OutputPaths::default();
    if let Some(mut sec) = get("output") {
        output.csv = sec.take("csv").map(|(_, v)| PathBuf::from(v));
        output.gnuplot = sec.take("gnuplot").map(|(_, v)| PathBuf::from(v));
        output.fits = sec.take("fits").map(|(_, v)| PathBuf::from(v));
        sec.finish()?;
    }

    let grape = match get("grape") {
        Some(mut sec) => {
            let g = parse_grape(&mut sec)?;
            sec.finish()?;
            Some(g)
        }
        None => None,
    };

    if system.n_spins() != 3 {
        if let Some(m) = modes.iter().find(|m| !matches!(m, SweepMode::OneRound(Mode::Unencoded))) {
            return Err(ConfigError::Missing {
                section: "system".into(),
                key: format!("three spins (mode '{}' runs the three-qubit code)", m.name()),
            });
        }
    }

    Ok(ExperimentConfig {
        system,
        channel,
        modes,
        delays_ms,
        gate_error,
        ancilla_order,
        two_rounds,
        output,
        grape,
    })
}

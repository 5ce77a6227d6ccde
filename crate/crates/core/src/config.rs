//! Run configuration: strict TOML with unit-suffixed quantities.
//!
//! Every physical quantity is a string `"<number> <unit>"`. Two unit systems
//! are supported. `dot` uses meV, nm, fs, K and electron masses. `natural`
//! sets ħ = 1 and uses the abstract units `E` (energy), `L` (length),
//! `T` (time) and `M` (mass). Energies may also be given in `kT`, and
//! inverse energies in `1/kT`, once the temperature is known.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::Axis;
use crate::metadynamics::{GridSpec, WellTempered};
use crate::model::{SymmetryChannel, SystemSpec, Topology};
use crate::potentials::{DotParams, PotentialSpec, DEFAULT_SOFTENING_FRACTION};
use crate::sampler::{IntegratorSpec, Walls};
use crate::units::{beta_from_kelvin, ELECTRON_MASS, HBAR};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitSystem {
    Natural,
    Dot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Free,
    Harmonic,
    QuantumDot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Energy,
    PairDistribution,
    Density,
    SHistogram,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFormat {
    #[default]
    Binary,
    Text,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub system: RawSystem,
    pub sampler: RawSampler,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadynamics: Option<RawMetadynamics>,
    #[serde(default)]
    pub estimators: RawEstimators,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSystem {
    pub units: UnitSystem,
    pub potential: PotentialKind,
    pub dim: usize,
    pub beads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<String>,
    /// Particle mass; the dot takes it from `m_star`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar_omega: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dot: Option<RawDot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDot {
    pub m_star: f64,
    pub hbar_omega0: String,
    pub eta: f64,
    pub epsilon_r: f64,
    /// Exactly one of `gamma_c` and `wigner` must be given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wigner: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub softening: Option<String>,
}

fn default_sample_stride() -> u64 {
    5
}
fn default_seeds() -> usize {
    1
}
fn default_checkpoint_every() -> u64 {
    100_000
}
fn default_topology() -> Topology {
    Topology::Distinguishable
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSampler {
    pub timestep: String,
    pub steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default = "default_sample_stride")]
    pub sample_stride: u64,
    pub seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction: Option<String>,
    #[serde(default = "default_topology")]
    pub topology: Topology,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bead_mass: Option<String>,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMetadynamics {
    pub enabled: bool,
    pub initial_height: String,
    pub width: String,
    pub bias_factor: f64,
    pub stride: u64,
    pub build_steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_min: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_max: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_min: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_max: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_k: Option<String>,
    /// Hills file of an earlier build phase to sample under; needs `build_steps = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hills: Option<String>,
}

fn default_channels() -> Vec<SymmetryChannel> {
    vec![SymmetryChannel::Boson, SymmetryChannel::Fermion]
}
fn default_observables() -> Vec<Observable> {
    vec![Observable::Energy]
}
fn default_max_blocks() -> usize {
    crate::estimators::DEFAULT_MAX_BLOCKS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEstimators {
    #[serde(default = "default_channels")]
    pub channels: Vec<SymmetryChannel>,
    #[serde(default = "default_observables")]
    pub observables: Vec<Observable>,
    #[serde(default = "default_max_blocks")]
    pub max_blocks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_distribution: Option<RawAxis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<RawDensity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_histogram: Option<RawAxis>,
}

impl Default for RawEstimators {
    fn default() -> Self {
        RawEstimators {
            channels: default_channels(),
            observables: default_observables(),
            max_blocks: default_max_blocks(),
            pair_distribution: None,
            density: None,
            s_histogram: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAxis {
    pub min: String,
    pub max: String,
    pub bins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDensity {
    pub x: RawAxis,
    pub y: RawAxis,
}

fn default_directory() -> String {
    "out".into()
}
fn default_snapshot_every() -> u64 {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default)]
    pub format: SampleFormat,
    /// Keep bead positions on every n-th sample.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: u64,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput {
            directory: default_directory(),
            format: SampleFormat::Binary,
            snapshot_every: default_snapshot_every(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dimension {
    Energy,
    InverseEnergy,
    Temperature,
    Time,
    InverseTime,
    Length,
    Mass,
}

/// Splits `"5.1 meV"` into value and unit.
fn split_quantity(text: &str) -> std::result::Result<(f64, &str), String> {
    let t = text.trim();
    let cut = t.find(|c: char| c.is_whitespace()).ok_or_else(|| format!("`{t}` has no unit"))?;
    let (num, unit) = t.split_at(cut);
    let v: f64 = num.parse().map_err(|_| format!("`{num}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{num}` is not finite"));
    }
    Ok((v, unit.trim()))
}

fn unit_factor(unit: &str, dim: Dimension, system: UnitSystem, kt: Option<f64>) -> std::result::Result<f64, String> {
    use Dimension::*;
    let thermal = |k: Option<f64>| k.ok_or_else(|| "`kT` needs the temperature first".to_string());
    let f = match (system, dim, unit) {
        (_, Energy, "kT") => thermal(kt)?,
        (_, InverseEnergy, "1/kT") => 1.0 / thermal(kt)?,
        (UnitSystem::Dot, Energy, "meV") => 1.0,
        (UnitSystem::Dot, Energy, "eV") => 1e3,
        (UnitSystem::Dot, InverseEnergy, "1/meV") => 1.0,
        (UnitSystem::Dot, Temperature, "K") => 1.0,
        (UnitSystem::Dot, Time, "fs") => 1.0,
        (UnitSystem::Dot, Time, "ps") => 1e3,
        (UnitSystem::Dot, InverseTime, "1/fs") => 1.0,
        (UnitSystem::Dot, InverseTime, "1/ps") => 1e-3,
        (UnitSystem::Dot, Length, "nm") => 1.0,
        (UnitSystem::Dot, Mass, "m_e") => ELECTRON_MASS,
        (UnitSystem::Natural, Energy, "E") => 1.0,
        (UnitSystem::Natural, InverseEnergy, "1/E") => 1.0,
        (UnitSystem::Natural, Time, "T") => 1.0,
        (UnitSystem::Natural, InverseTime, "1/T") => 1.0,
        (UnitSystem::Natural, Length, "L") => 1.0,
        (UnitSystem::Natural, Mass, "M") => 1.0,
        _ => {
            return Err(format!(
                "unit `{unit}` is not a valid {} unit in the {} system",
                format!("{dim:?}").to_lowercase(),
                match system {
                    UnitSystem::Dot => "dot",
                    UnitSystem::Natural => "natural",
                }
            ))
        }
    };
    Ok(f)
}

/// Line number of `key` inside `[section]` in the raw text, if found.
fn locate(text: &str, path: &str) -> Option<usize> {
    let (section, key) = path.rsplit_once('.').unwrap_or(("", path));
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if let Some(h) = l.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = h.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    // fall back to the section header
    text.lines().position(|l| l.trim() == format!("[{section}]")).map(|i| i + 1)
}

/// Estimator settings in simulation units.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub channels: Vec<SymmetryChannel>,
    pub observables: Vec<Observable>,
    pub max_blocks: usize,
    pub pair_distribution: Option<Axis>,
    pub density: Option<(Axis, Axis)>,
    pub s_histogram: Option<Axis>,
}

impl EstimatorConfig {
    pub fn wants(&self, o: Observable) -> bool {
        self.observables.contains(&o)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetadynamicsConfig {
    pub params: WellTempered,
    pub grid: GridSpec,
    pub build_steps: u64,
    pub hills: Option<std::path::PathBuf>,
}

/// A validated configuration in simulation units.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub units: UnitSystem,
    pub system: SystemSpec,
    /// `ħω` of the harmonic toy, energy.
    pub hbar_omega: Option<f64>,
    pub integrator: IntegratorSpec,
    pub seeds: usize,
    pub checkpoint_every: u64,
    pub metadynamics: Option<MetadynamicsConfig>,
    pub estimators: EstimatorConfig,
    pub format: SampleFormat,
    pub directory: String,
}

struct Resolver<'a> {
    text: &'a str,
    system: UnitSystem,
    kt: Option<f64>,
}

impl Resolver<'_> {
    fn fail(&self, path: &str, msg: impl std::fmt::Display) -> Error {
        let message = match locate(self.text, path) {
            Some(line) => format!("line {line}: {msg}"),
            None => msg.to_string(),
        };
        Error::config(path, message)
    }

    fn quantity(&self, path: &str, text: &str, dim: Dimension) -> Result<f64> {
        let (v, unit) = split_quantity(text).map_err(|m| self.fail(path, m))?;
        let f = unit_factor(unit, dim, self.system, self.kt).map_err(|m| self.fail(path, m))?;
        Ok(v * f)
    }

    fn positive(&self, path: &str, text: &str, dim: Dimension) -> Result<f64> {
        let v = self.quantity(path, text, dim)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.fail(path, "must be positive"))
        }
    }

    fn axis(&self, path: &str, raw: &RawAxis, dim: Dimension) -> Result<Axis> {
        let lo = self.quantity(&format!("{path}.min"), &raw.min, dim)?;
        let hi = self.quantity(&format!("{path}.max"), &raw.max, dim)?;
        Axis::new(lo, hi, raw.bins).map_err(|e| self.fail(&format!("{path}.bins"), e))
    }
}

impl RunConfig {
    /// Parses and validates configuration text.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let msg = e.message().to_string();
            Error::config(
                "config",
                match line {
                    Some(l) => format!("line {l}: {msg}"),
                    None => msg,
                },
            )
        })?;
        Self::from_raw(raw, text)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Resolves a raw configuration; `text` is only used for line numbers.
    pub fn from_raw(raw: RawConfig, text: &str) -> Result<Self> {
        let sys = &raw.system;
        let mut r = Resolver {
            text,
            system: sys.units,
            kt: None,
        };
        use Dimension::*;

        let hbar = match sys.units {
            UnitSystem::Dot => HBAR,
            UnitSystem::Natural => 1.0,
        };
        let beta = match (&sys.temperature, &sys.beta) {
            (Some(_), Some(_)) => return Err(r.fail("system.beta", "give either temperature or beta, not both")),
            (None, None) => return Err(r.fail("system.beta", "one of temperature or beta is required")),
            (Some(t), None) => {
                if sys.units == UnitSystem::Natural {
                    return Err(r.fail("system.temperature", "the natural system takes beta"));
                }
                beta_from_kelvin(r.positive("system.temperature", t, Temperature)?)
            }
            (None, Some(b)) => r.positive("system.beta", b, InverseEnergy)?,
        };
        r.kt = Some(1.0 / beta);
        if !(1..=3).contains(&sys.dim) {
            return Err(r.fail("system.dim", "must be 1, 2 or 3"));
        }
        if sys.beads < 2 {
            return Err(r.fail("system.beads", "need at least 2 beads"));
        }
        let mut hbar_omega = None;
        let (mass, potential) = match sys.potential {
            PotentialKind::Free | PotentialKind::Harmonic => {
                if sys.dot.is_some() {
                    return Err(r.fail("system.dot", "only valid for the quantum_dot potential"));
                }
                let mass = match &sys.mass {
                    Some(m) => r.positive("system.mass", m, Mass)?,
                    None => return Err(r.fail("system.mass", "required for this potential")),
                };
                if sys.potential == PotentialKind::Free {
                    if sys.hbar_omega.is_some() {
                        return Err(r.fail("system.hbar_omega", "free particles have no frequency"));
                    }
                    (mass, PotentialSpec::FreeParticles)
                } else {
                    let hw = match &sys.hbar_omega {
                        Some(h) => r.positive("system.hbar_omega", h, Energy)?,
                        None => return Err(r.fail("system.hbar_omega", "required for the harmonic potential")),
                    };
                    hbar_omega = Some(hw);
                    (mass, PotentialSpec::IsotropicHarmonic { mass, omega: hw / hbar })
                }
            }
            PotentialKind::QuantumDot => {
                if sys.units != UnitSystem::Dot {
                    return Err(r.fail("system.units", "the quantum dot needs the dot unit system"));
                }
                if sys.dim != 2 {
                    return Err(r.fail("system.dim", "the quantum dot is two-dimensional"));
                }
                if sys.mass.is_some() || sys.hbar_omega.is_some() {
                    return Err(r.fail("system.mass", "the dot takes its mass and frequency from [system.dot]"));
                }
                let d = sys.dot.as_ref().ok_or_else(|| r.fail("system.dot", "missing [system.dot] section"))?;
                let hw0 = r.positive("system.dot.hbar_omega0", &d.hbar_omega0, Energy)?;
                let dot = match (d.gamma_c, d.wigner) {
                    (Some(g), None) => DotParams::from_confinement(d.m_star, hw0, d.eta, d.epsilon_r, g),
                    (None, Some(w)) => DotParams::from_wigner_parameter(d.m_star, hw0, d.eta, d.epsilon_r, w),
                    _ => return Err(r.fail("system.dot.gamma_c", "give exactly one of gamma_c and wigner")),
                }
                .map_err(|e| r.fail("system.dot", e))?;
                let dot = match &d.softening {
                    Some(a) => {
                        let a = r.positive("system.dot.softening", a, Length)?;
                        dot.with_softening(a).map_err(|e| r.fail("system.dot.softening", e))?
                    }
                    None => {
                        let a = DEFAULT_SOFTENING_FRACTION * dot.l0();
                        dot.with_softening(a).map_err(|e| r.fail("system.dot", e))?
                    }
                };
                (dot.mass(), PotentialSpec::QuantumDot(dot))
            }
        };
        let system = SystemSpec::new(mass, beta, hbar, sys.beads, sys.dim, potential)
            .map_err(|e| r.fail("system", e))?;

        let s = &raw.sampler;
        let dt = r.positive("sampler.timestep", &s.timestep, Time)?;
        let mut integ = IntegratorSpec::new(dt, s.steps, s.seed);
        if let Some(b) = s.burn_in {
            if b > s.steps {
                return Err(r.fail("sampler.burn_in", "exceeds the number of steps"));
            }
            integ.burn_in = b;
        }
        if s.sample_stride == 0 {
            return Err(r.fail("sampler.sample_stride", "must be at least 1"));
        }
        integ.sample_stride = s.sample_stride;
        if let Some(f) = &s.friction {
            let f = r.quantity("sampler.friction", f, InverseTime)?;
            if f < 0.0 {
                return Err(r.fail("sampler.friction", "must be non-negative"));
            }
            integ.friction = f;
        }
        integ.topology = s.topology;
        if let Some(m) = &s.bead_mass {
            integ.bead_mass = Some(r.positive("sampler.bead_mass", m, Mass)?);
        }
        if s.seeds == 0 {
            return Err(r.fail("sampler.seeds", "must be at least 1"));
        }
        if s.checkpoint_every == 0 {
            return Err(r.fail("sampler.checkpoint_every", "must be at least 1"));
        }

        let metadynamics = match &raw.metadynamics {
            Some(m) if m.enabled => {
                if s.topology == Topology::Connected {
                    return Err(r.fail("metadynamics.enabled", "the bias acts on the distinguishable topology only"));
                }
                let params = WellTempered {
                    initial_height: r.positive("metadynamics.initial_height", &m.initial_height, Energy)?,
                    width: r.positive("metadynamics.width", &m.width, Energy)?,
                    bias_factor: m.bias_factor,
                    stride: m.stride,
                };
                params.validate().map_err(|e| r.fail("metadynamics", e))?;
                let kt = 1.0 / beta;
                let lo = match &m.grid_min {
                    Some(v) => r.quantity("metadynamics.grid_min", v, Energy)?,
                    None => -60.0 * kt,
                };
                let hi = match &m.grid_max {
                    Some(v) => r.quantity("metadynamics.grid_max", v, Energy)?,
                    None => 60.0 * kt,
                };
                if hi <= lo {
                    return Err(r.fail("metadynamics.grid_max", "must exceed grid_min"));
                }
                let walls = match (&m.wall_min, &m.wall_max, &m.wall_k) {
                    (None, None, None) => None,
                    (lo_w, hi_w, Some(k)) => Some(Walls {
                        s_min: lo_w
                            .as_ref()
                            .map(|v| r.quantity("metadynamics.wall_min", v, Energy))
                            .transpose()?
                            .unwrap_or(f64::NEG_INFINITY),
                        s_max: hi_w
                            .as_ref()
                            .map(|v| r.quantity("metadynamics.wall_max", v, Energy))
                            .transpose()?
                            .unwrap_or(f64::INFINITY),
                        k: r.positive("metadynamics.wall_k", k, InverseEnergy)?,
                    }),
                    _ => return Err(r.fail("metadynamics.wall_k", "walls need a stiffness wall_k")),
                };
                integ.walls = walls;
                if m.hills.is_some() && m.build_steps > 0 {
                    return Err(r.fail("metadynamics.build_steps", "must be 0 when sampling under a stored hills file"));
                }
                Some(MetadynamicsConfig {
                    params,
                    grid: GridSpec {
                        min: lo,
                        max: hi,
                        spacing: params.width / 10.0,
                    },
                    build_steps: m.build_steps,
                    hills: m.hills.as_ref().map(std::path::PathBuf::from),
                })
            }
            _ => None,
        };
        integ.snapshot_stride = 0;

        let e = &raw.estimators;
        if e.channels.is_empty() {
            return Err(r.fail("estimators.channels", "list at least one channel"));
        }
        if e.max_blocks < 2 {
            return Err(r.fail("estimators.max_blocks", "must be at least 2"));
        }
        let l_char = match &system.potential {
            PotentialSpec::IsotropicHarmonic { mass, omega } => Some(1.0 / (mass * omega * beta).sqrt()),
            PotentialSpec::QuantumDot(dot) => Some(dot.l0()),
            PotentialSpec::FreeParticles => None,
        };
        let default_axis = |path: &str, lo: f64, hi: f64, bins: usize| -> Result<Option<Axis>> {
            match l_char {
                Some(l) => Axis::new(lo * l, hi * l, bins).map(Some).map_err(|e| r.fail(path, e)),
                None => Ok(None),
            }
        };
        let pair = match &e.pair_distribution {
            Some(a) => Some(r.axis("estimators.pair_distribution", a, Length)?),
            None if e.observables.contains(&Observable::PairDistribution) => {
                default_axis("estimators.pair_distribution", 0.0, 6.0, 200)?
            }
            None => None,
        };
        let wants_density = e.density.is_some() || e.observables.contains(&Observable::Density);
        if wants_density && sys.dim < 2 {
            return Err(r.fail("estimators.density", "needs at least two dimensions"));
        }
        let density = match &e.density {
            Some(d) => Some((r.axis("estimators.density.x", &d.x, Length)?, r.axis("estimators.density.y", &d.y, Length)?)),
            None if wants_density => {
                let x = default_axis("estimators.density", -4.0, 4.0, 128)?;
                x.map(|x| (x, x))
            }
            None => None,
        };
        let s_hist = match &e.s_histogram {
            Some(a) => Some(r.axis("estimators.s_histogram", a, Energy)?),
            None if e.observables.contains(&Observable::SHistogram) => {
                let kt = 1.0 / beta;
                Some(Axis::new(-60.0 * kt, 60.0 * kt, 240).map_err(|e| r.fail("estimators.s_histogram", e))?)
            }
            None => None,
        };
        for o in &e.observables {
            let missing = match o {
                Observable::PairDistribution => pair.is_none(),
                Observable::Density => density.is_none(),
                Observable::SHistogram => s_hist.is_none(),
                Observable::Energy => false,
            };
            if missing {
                return Err(r.fail("estimators.observables", format!("{o:?} needs an explicit grid for free particles")));
            }
        }
        let estimators = EstimatorConfig {
            channels: e.channels.clone(),
            observables: e.observables.clone(),
            max_blocks: e.max_blocks,
            pair_distribution: pair,
            density,
            s_histogram: s_hist,
        };
        if estimators.wants(Observable::PairDistribution) || estimators.wants(Observable::Density) {
            if raw.output.snapshot_every == 0 {
                return Err(r.fail("output.snapshot_every", "pair and density observables need snapshots"));
            }
            integ.snapshot_stride = raw.output.snapshot_every;
        }
        integ.validate().map_err(|e| r.fail("sampler", e))?;

        Ok(RunConfig {
            units: sys.units,
            system,
            hbar_omega,
            integrator: integ,
            seeds: s.seeds,
            checkpoint_every: s.checkpoint_every,
            metadynamics,
            estimators,
            format: raw.output.format,
            directory: raw.output.directory.clone(),
            raw,
        })
    }

    /// Canonical text form; parsing it gives back the same configuration.
    pub fn canonical_text(&self) -> String {
        toml::to_string(&self.raw).expect("configuration serializes")
    }

    /// Canonical text with the output directory blanked; this is what a run
    /// directory stores and what the hash covers.
    pub fn location_free_text(&self) -> String {
        let mut raw = self.raw.clone();
        raw.output.directory = String::new();
        toml::to_string(&raw).expect("configuration serializes")
    }

    /// SHA-256 of [`location_free_text`](Self::location_free_text), so the
    /// hash identifies the physics and not where results were written.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.location_free_text().as_bytes()))
    }

    /// Applies command-line overrides and re-resolves.
    pub fn with_overrides(&self, seeds: Option<usize>, directory: Option<&str>) -> Result<Self> {
        let mut raw = self.raw.clone();
        if let Some(n) = seeds {
            raw.sampler.seeds = n;
        }
        if let Some(d) = directory {
            raw.output.directory = d.to_string();
        }
        let text = toml::to_string(&raw).expect("configuration serializes");
        Self::from_raw(raw, &text)
    }

    /// Number of steps before sampling starts: the metadynamics build phase
    /// or the burn-in.
    pub fn quiet_steps(&self) -> u64 {
        match &self.metadynamics {
            Some(m) => m.build_steps,
            None => self.integrator.burn_in,
        }
    }

    /// Total steps of one trajectory.
    pub fn total_steps(&self) -> u64 {
        match &self.metadynamics {
            Some(m) => m.build_steps + self.integrator.n_steps,
            None => self.integrator.n_steps,
        }
    }

    /// Seed of the `k`-th independent trajectory.
    pub fn seed(&self, k: usize) -> u64 {
        self.integrator.seed.wrapping_add(k as u64)
    }
}

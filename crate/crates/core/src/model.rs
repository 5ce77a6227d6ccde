//! Ring-polymer representation of two particles: configurations, the two
//! necklace topologies, the exchange collective variable and the quantum
//! symmetry weights.
//!
//! Positions are stored particle-major, `[particle][bead][dim]`, flattened.
//! With that layout the connected (exchange) topology is simply the flat
//! array read as one ring of `2P` beads, closing from `r_2^P` back to `r_1^1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;

/// Physical parameters that fix every energy scale of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub mass: f64,
    pub beta: f64,
    pub hbar: f64,
    pub num_beads: usize,
    pub dim: usize,
    pub potential: PotentialSpec,
}

impl SystemSpec {
    pub fn new(
        mass: f64,
        beta: f64,
        hbar: f64,
        num_beads: usize,
        dim: usize,
        potential: PotentialSpec,
    ) -> Result<Self> {
        let spec = SystemSpec {
            mass,
            beta,
            hbar,
            num_beads,
            dim,
            potential,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mass", self.mass), ("beta", self.beta), ("hbar", self.hbar)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.num_beads < 2 {
            return Err(Error::validation(format!(
                "need at least 2 beads, got {}",
                self.num_beads
            )));
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::validation(format!("dimension must be 1, 2 or 3, got {}", self.dim)));
        }
        self.potential.validate()?;
        if let Some(d) = self.potential.required_dim() {
            if d != self.dim {
                return Err(Error::validation(format!(
                    "potential requires dimension {d}, system has {}",
                    self.dim
                )));
            }
        }
        match &self.potential {
            PotentialSpec::IsotropicHarmonic { mass, .. } => check_mass(*mass, self.mass)?,
            PotentialSpec::QuantumDot(dot) => check_mass(dot.mass(), self.mass)?,
            PotentialSpec::FreeParticles => {}
        }
        let k = self.spring_constant();
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::validation(format!("spring constant {k} is not finite and positive")));
        }
        Ok(())
    }

    /// `k_spring = m P / (2 ħ² β²)`.
    pub fn spring_constant(&self) -> f64 {
        self.mass * self.num_beads as f64 / (2.0 * self.hbar * self.hbar * self.beta * self.beta)
    }

    pub fn kt(&self) -> f64 {
        1.0 / self.beta
    }

    /// Number of scalar coordinates, `2 · P · n_d`.
    pub fn num_coords(&self) -> usize {
        2 * self.num_beads * self.dim
    }
}

fn check_mass(potential_mass: f64, mass: f64) -> Result<()> {
    if (potential_mass / mass - 1.0).abs() > 1e-12 {
        return Err(Error::validation(format!(
            "particle mass {mass} disagrees with the potential's mass {potential_mass}"
        )));
    }
    Ok(())
}

/// Necklace topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Two separate rings of `P` beads.
    Distinguishable,
    /// One ring of `2P` beads joining both particles.
    Connected,
}

/// Quantum statistics used to weight distinguishable-ensemble samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryChannel {
    Boson,
    Fermion,
    Distinguishable,
}

impl SymmetryChannel {
    /// `+1` for bosons, `-1` for fermions, `None` when exchange is ignored.
    pub fn exchange_sign(self) -> Option<f64> {
        match self {
            SymmetryChannel::Boson => Some(1.0),
            SymmetryChannel::Fermion => Some(-1.0),
            SymmetryChannel::Distinguishable => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SymmetryChannel::Boson => "boson",
            SymmetryChannel::Fermion => "fermion",
            SymmetryChannel::Distinguishable => "distinguishable",
        }
    }
}

/// A real number stored as sign and log-magnitude, so that weights like
/// `e^{-βs}` survive `β|s|` far beyond the double-precision exponent range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedLog {
    /// `1.0`, `-1.0`, or `0.0` for an exact zero.
    pub sign: f64,
    pub ln_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0.0,
        ln_abs: f64::NEG_INFINITY,
    };
    pub const ONE: SignedLog = SignedLog { sign: 1.0, ln_abs: 0.0 };

    pub fn from_ln(sign: f64, ln_abs: f64) -> Self {
        if sign == 0.0 || ln_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            SignedLog {
                sign: sign.signum(),
                ln_abs,
            }
        }
    }

    pub fn from_value(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            SignedLog {
                sign: x.signum(),
                ln_abs: x.abs().ln(),
            }
        }
    }

    /// Linear value; may overflow to ±∞ when `ln_abs` exceeds ~709.
    pub fn value(self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0.0
    }

    pub fn mul(self, other: SignedLog) -> SignedLog {
        SignedLog::from_ln(self.sign * other.sign, self.ln_abs + other.ln_abs)
    }
}

/// Positions (and optionally momenta) of 2 particles × `P` beads × `n_d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeadConfiguration {
    num_beads: usize,
    dim: usize,
    positions: Vec<f64>,
    momenta: Option<Vec<f64>>,
}

impl BeadConfiguration {
    pub fn new(num_beads: usize, dim: usize, positions: Vec<f64>) -> Result<Self> {
        if positions.len() != 2 * num_beads * dim {
            return Err(Error::validation(format!(
                "expected {} coordinates for 2 x {num_beads} x {dim}, got {}",
                2 * num_beads * dim,
                positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::validation(format!("non-finite coordinate at index {i}")));
        }
        Ok(BeadConfiguration {
            num_beads,
            dim,
            positions,
            momenta: None,
        })
    }

    pub fn zeros(num_beads: usize, dim: usize) -> Self {
        BeadConfiguration {
            num_beads,
            dim,
            positions: vec![0.0; 2 * num_beads * dim],
            momenta: None,
        }
    }

    /// Builds a configuration from per-particle bead lists `[bead][dim]`.
    pub fn from_beads(particle1: &[Vec<f64>], particle2: &[Vec<f64>]) -> Result<Self> {
        let p = particle1.len();
        let dim = particle1.first().map_or(0, Vec::len);
        if particle2.len() != p || particle1.iter().chain(particle2).any(|b| b.len() != dim) {
            return Err(Error::validation("both particles need the same bead count and dimension"));
        }
        let positions = particle1.iter().chain(particle2).flatten().copied().collect();
        Self::new(p, dim, positions)
    }

    pub fn with_momenta(mut self, momenta: Vec<f64>) -> Result<Self> {
        if momenta.len() != self.positions.len() {
            return Err(Error::validation("momenta shape does not match positions"));
        }
        if momenta.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("non-finite momentum"));
        }
        self.momenta = Some(momenta);
        Ok(self)
    }

    pub fn num_beads(&self) -> usize {
        self.num_beads
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub fn momenta(&self) -> Option<&[f64]> {
        self.momenta.as_deref()
    }

    pub fn momenta_mut(&mut self) -> Option<&mut [f64]> {
        self.momenta.as_deref_mut()
    }

    pub fn take_momenta(&mut self) -> Option<Vec<f64>> {
        self.momenta.take()
    }

    /// Flat offset of bead `bead` (0-based) of particle `particle` (0 or 1).
    #[inline]
    pub fn offset(&self, particle: usize, bead: usize) -> usize {
        (particle * self.num_beads + bead) * self.dim
    }

    #[inline]
    pub fn bead(&self, particle: usize, bead: usize) -> &[f64] {
        let o = self.offset(particle, bead);
        &self.positions[o..o + self.dim]
    }

    /// Imaginary-time centroid of one particle.
    pub fn centroid(&self, particle: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for i in 0..self.num_beads {
            for (ck, x) in c.iter_mut().zip(self.bead(particle, i)) {
                *ck += x;
            }
        }
        c.iter_mut().for_each(|x| *x /= self.num_beads as f64);
        c
    }

    pub fn check_shape(&self, spec: &SystemSpec) -> Result<()> {
        if self.num_beads != spec.num_beads || self.dim != spec.dim {
            return Err(Error::validation(format!(
                "configuration is 2 x {} x {}, system expects 2 x {} x {}",
                self.num_beads, self.dim, spec.num_beads, spec.dim
            )));
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        num_beads: usize,
        dim: usize,
        positions: Vec<f64>,
        momenta: Option<Vec<f64>>,
    ) -> Self {
        BeadConfiguration {
            num_beads,
            dim,
            positions,
            momenta,
        }
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared link lengths of a closed ring of `n` beads laid out
/// contiguously in `x`.
#[inline]
pub(crate) fn ring_links(x: &[f64], n: usize, dim: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        let j = if i + 1 == n { 0 } else { i + 1 };
        sum += dist2(&x[i * dim..(i + 1) * dim], &x[j * dim..(j + 1) * dim]);
    }
    sum
}

pub(crate) fn spring_energy_raw(x: &[f64], p: usize, dim: usize, k: f64, topo: Topology) -> f64 {
    match topo {
        Topology::Distinguishable => {
            let half = p * dim;
            k * (ring_links(&x[..half], p, dim) + ring_links(&x[half..], p, dim))
        }
        Topology::Connected => k * ring_links(x, 2 * p, dim),
    }
}

/// Harmonic spring energy of the necklaces in the given topology, without
/// the physical potential.
pub fn spring_energy(config: &BeadConfiguration, spec: &SystemSpec, topo: Topology) -> Result<f64> {
    config.check_shape(spec)?;
    Ok(spring_energy_raw(
        &config.positions,
        spec.num_beads,
        spec.dim,
        spec.spring_constant(),
        topo,
    ))
}

/// `(1/P) Σ_i V(r_1^i, r_2^i)`, the same for both topologies.
pub fn potential_energy(config: &BeadConfiguration, spec: &SystemSpec) -> Result<f64> {
    config.check_shape(spec)?;
    let p = spec.num_beads;
    let v: f64 = (0..p)
        .map(|i| spec.potential.evaluate(config.bead(0, i), config.bead(1, i)))
        .sum();
    Ok(v / p as f64)
}

pub(crate) fn cv_raw(x: &[f64], p: usize, dim: usize, k: f64) -> f64 {
    let a1 = &x[..dim];
    let b1 = &x[(p - 1) * dim..p * dim];
    let a2 = &x[p * dim..(p + 1) * dim];
    let b2 = &x[(2 * p - 1) * dim..2 * p * dim];
    k * (dist2(a2, b1) + dist2(a1, b2) - dist2(a1, b1) - dist2(a2, b2))
}

/// Exchange collective variable `s = V_O − V_oo`, from the four closure beads.
pub fn collective_variable_s(config: &BeadConfiguration, spec: &SystemSpec) -> Result<f64> {
    config.check_shape(spec)?;
    Ok(cv_raw(&config.positions, spec.num_beads, spec.dim, spec.spring_constant()))
}

/// Adds `scale · ∂s/∂x` into `out`.
pub(crate) fn cv_gradient_add(x: &[f64], p: usize, dim: usize, k: f64, scale: f64, out: &mut [f64]) {
    let (a1, b1, a2, b2) = (0, (p - 1) * dim, p * dim, (2 * p - 1) * dim);
    let c = 2.0 * k * scale;
    for d in 0..dim {
        let (xa1, xb1, xa2, xb2) = (x[a1 + d], x[b1 + d], x[a2 + d], x[b2 + d]);
        out[a1 + d] += c * (xb1 - xb2);
        out[b1 + d] += c * (xa1 - xa2);
        out[a2 + d] += c * (xb2 - xb1);
        out[b2 + d] += c * (xa2 - xa1);
    }
}

/// Gradient of `s` with respect to every bead coordinate, same layout as the
/// positions. Only `r_1^1`, `r_1^P`, `r_2^1`, `r_2^P` carry non-zero entries.
pub fn cv_gradient(config: &BeadConfiguration, spec: &SystemSpec) -> Result<Vec<f64>> {
    config.check_shape(spec)?;
    let mut g = vec![0.0; config.positions.len()];
    cv_gradient_add(&config.positions, spec.num_beads, spec.dim, spec.spring_constant(), 1.0, &mut g);
    Ok(g)
}

/// `W_I(s) = 1 ± e^{−βs}` in sign/log form. The distinguishable channel has
/// weight one.
pub fn symmetry_weight(s: f64, beta: f64, channel: SymmetryChannel) -> SignedLog {
    let x = -beta * s;
    match channel {
        SymmetryChannel::Distinguishable => SignedLog::ONE,
        // ln(1 + e^x)
        SymmetryChannel::Boson => SignedLog::from_ln(1.0, ln_1p_exp(x)),
        SymmetryChannel::Fermion => {
            if x == 0.0 {
                SignedLog::ZERO
            } else if x < 0.0 {
                // 1 − e^x ∈ (0, 1)
                SignedLog::from_ln(1.0, (-x.exp_m1()).ln())
            } else {
                // 1 − e^x = −e^x (1 − e^{−x})
                SignedLog::from_ln(-1.0, x + (-(-x).exp_m1()).ln())
            }
        }
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn ln_1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

//! Langevin path-integral molecular dynamics over either necklace topology.
//!
//! Beads move in plain Cartesian coordinates with the physical mass. Each
//! step is the BAOAB splitting: half kick, half drift, Ornstein–Uhlenbeck
//! thermostat, half drift, half kick. An optional metadynamics bias and
//! harmonic walls act on the exchange variable `s` through the chain rule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metadynamics::{BiasState, Gaussian, GridSpec, WellTempered};
use crate::model::{cv_gradient_add, cv_raw, spring_energy_raw, BeadConfiguration, SystemSpec, Topology};
use crate::potentials::PotentialSpec;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Harmonic walls `½ k (s − bound)²` outside `[s_min, s_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Walls {
    pub s_min: f64,
    pub s_max: f64,
    pub k: f64,
}

impl Walls {
    #[inline]
    pub fn value_and_derivative(&self, s: f64) -> (f64, f64) {
        if s < self.s_min {
            let d = s - self.s_min;
            (0.5 * self.k * d * d, self.k * d)
        } else if s > self.s_max {
            let d = s - self.s_max;
            (0.5 * self.k * d * d, self.k * d)
        } else {
            (0.0, 0.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub timestep: f64,
    pub friction: f64,
    pub n_steps: u64,
    /// Steps discarded at the start of `run_trajectory`.
    pub burn_in: u64,
    pub sample_stride: u64,
    /// Keep bead positions on every `snapshot_stride`-th sample; 0 keeps none.
    pub snapshot_stride: u64,
    pub seed: u64,
    pub topology: Topology,
    pub walls: Option<Walls>,
    /// Fictitious bead mass; the particle mass when absent.
    pub bead_mass: Option<f64>,
}

impl IntegratorSpec {
    /// Defaults: friction `1/(10 dt)`, every step sampled, 10% burn-in,
    /// distinguishable topology.
    pub fn new(timestep: f64, n_steps: u64, seed: u64) -> Self {
        IntegratorSpec {
            timestep,
            friction: 1.0 / (10.0 * timestep),
            n_steps,
            burn_in: n_steps / 10,
            sample_stride: 1,
            snapshot_stride: 0,
            seed,
            topology: Topology::Distinguishable,
            walls: None,
            bead_mass: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timestep.is_finite() && self.timestep > 0.0) {
            return Err(Error::validation(format!("timestep must be positive, got {}", self.timestep)));
        }
        if !(self.friction.is_finite() && self.friction >= 0.0) {
            return Err(Error::validation("friction must be non-negative"));
        }
        if self.sample_stride == 0 {
            return Err(Error::validation("sample stride must be at least 1"));
        }
        if let Some(w) = &self.walls {
            if !(w.k >= 0.0 && w.s_max >= w.s_min) {
                return Err(Error::validation("walls need k >= 0 and s_max >= s_min"));
            }
        }
        if let Some(m) = self.bead_mass {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::validation("bead mass must be positive"));
            }
        }
        Ok(())
    }
}

/// The per-sample record consumed by the estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub step: u64,
    pub s: f64,
    /// Total bias acting on `s` (metadynamics plus walls).
    pub bias_value: f64,
    /// `(1/P) Σ_i V(r_1^i, r_2^i)`.
    pub potential_energy: f64,
    pub spring_energy_oo: f64,
    /// `(1/2P) Σ_{i,n} (r_n^i − r̄_n)·∂V/∂r_n^i`.
    pub virial_direct: f64,
    /// `(1/2P) Σ_{i,n} (r_n^i − r̄)·∂V/∂r_n^i` with `r̄` the two-particle centroid.
    pub virial_exchange: f64,
    pub kinetic_energy: f64,
    /// Bead positions, particle-major, when retained.
    pub snapshot: Option<Vec<f64>>,
}

/// Read-only view of the dynamical state handed to sample sinks.
#[derive(Clone, Copy, Debug)]
pub struct StateView<'a> {
    pub step: u64,
    pub positions: &'a [f64],
    pub momenta: &'a [f64],
    pub num_beads: usize,
    pub dim: usize,
}

/// One Langevin BAOAB integrator for a flat coordinate vector with uniform mass.
#[derive(Clone, Copy, Debug)]
pub struct Baoab {
    pub dt: f64,
    pub mass: f64,
    c1: f64,
    c2: f64,
    kt: f64,
}

impl Baoab {
    pub fn new(dt: f64, friction: f64, kt: f64, mass: f64) -> Self {
        let c1 = (-friction * dt).exp();
        Baoab {
            dt,
            mass,
            c1,
            c2: (1.0 - c1 * c1).max(0.0).sqrt(),
            kt,
        }
    }

    /// Advances one step. `forces` must hold the force at `x` on entry and
    /// holds the new force on exit; `force_fn` writes forces and returns the
    /// potential energy.
    pub fn step<R, F>(
        &self,
        x: &mut [f64],
        p: &mut [f64],
        forces: &mut [f64],
        rng: &mut R,
        mut force_fn: F,
    ) -> f64
    where
        R: rand::Rng + ?Sized,
        F: FnMut(&[f64], &mut [f64]) -> f64,
    {
        let half = 0.5 * self.dt;
        let inv_m = 1.0 / self.mass;
        for ((xi, pi), fi) in x.iter_mut().zip(p.iter_mut()).zip(forces.iter()) {
            *pi += half * fi;
            *xi += half * *pi * inv_m;
        }
        if self.c1 < 1.0 {
            let sigma = self.c2 * (self.mass * self.kt).sqrt();
            for pi in p.iter_mut() {
                let xi: f64 = StandardNormal.sample(rng);
                *pi = self.c1 * *pi + sigma * xi;
            }
        }
        for (xi, pi) in x.iter_mut().zip(p.iter()) {
            *xi += half * *pi * inv_m;
        }
        let u = force_fn(x, forces);
        for (pi, fi) in p.iter_mut().zip(forces.iter()) {
            *pi += half * fi;
        }
        u
    }
}

/// Writes the total force into `f` and returns the total potential energy
/// (springs, physical potential, bias and walls).
pub(crate) fn compute_forces(
    spec: &SystemSpec,
    topo: Topology,
    bias: Option<&BiasState>,
    walls: Option<&Walls>,
    x: &[f64],
    f: &mut [f64],
) -> f64 {
    let p = spec.num_beads;
    let d = spec.dim;
    let k = spec.spring_constant();
    f.fill(0.0);
    let mut u = 0.0;

    let mut ring = |start: usize, n: usize, f: &mut [f64]| {
        for i in 0..n {
            let j = if i + 1 == n { 0 } else { i + 1 };
            let (oi, oj) = ((start + i) * d, (start + j) * d);
            for c in 0..d {
                let dx = x[oj + c] - x[oi + c];
                u += k * dx * dx;
                let g = 2.0 * k * dx;
                f[oj + c] -= g;
                f[oi + c] += g;
            }
        }
    };
    match topo {
        Topology::Distinguishable => {
            ring(0, p, f);
            ring(p, p, f);
        }
        Topology::Connected => ring(0, 2 * p, f),
    }

    let inv_p = 1.0 / p as f64;
    if !matches!(spec.potential, PotentialSpec::FreeParticles) {
        let mut g1 = [0.0; 3];
        let mut g2 = [0.0; 3];
        for i in 0..p {
            let (o1, o2) = (i * d, (p + i) * d);
            let (r1, r2) = (&x[o1..o1 + d], &x[o2..o2 + d]);
            u += inv_p * spec.potential.evaluate(r1, r2);
            spec.potential.gradient_into(r1, r2, &mut g1[..d], &mut g2[..d]);
            for c in 0..d {
                f[o1 + c] -= inv_p * g1[c];
                f[o2 + c] -= inv_p * g2[c];
            }
        }
    }

    if bias.is_some() || walls.is_some() {
        let s = cv_raw(x, p, d, k);
        let (mut v, mut dv) = bias.map_or((0.0, 0.0), |b| b.value_and_derivative(s));
        if let Some(w) = walls {
            let (wv, wd) = w.value_and_derivative(s);
            v += wv;
            dv += wd;
        }
        u += v;
        if dv != 0.0 {
            cv_gradient_add(x, p, d, k, -dv, f);
        }
    }
    u
}

fn check_bias_topology(topo: Topology, bias: Option<&BiasState>) -> Result<()> {
    if bias.is_some() && topo == Topology::Connected {
        return Err(Error::validation(
            "a metadynamics bias is defined on the distinguishable ensemble; use topology = distinguishable",
        ));
    }
    Ok(())
}

/// Total force `−∇(springs + potential + bias + walls)` in the bead layout.
pub fn total_force(
    config: &BeadConfiguration,
    spec: &SystemSpec,
    topo: Topology,
    bias: Option<&BiasState>,
    walls: Option<&Walls>,
) -> Result<Vec<f64>> {
    config.check_shape(spec)?;
    check_bias_topology(topo, bias)?;
    let mut f = vec![0.0; spec.num_coords()];
    compute_forces(spec, topo, bias, walls, config.positions(), &mut f);
    Ok(f)
}

/// Total potential energy whose negative gradient is [`total_force`].
pub fn total_potential(
    config: &BeadConfiguration,
    spec: &SystemSpec,
    topo: Topology,
    bias: Option<&BiasState>,
    walls: Option<&Walls>,
) -> Result<f64> {
    config.check_shape(spec)?;
    check_bias_topology(topo, bias)?;
    let mut f = vec![0.0; spec.num_coords()];
    Ok(compute_forces(spec, topo, bias, walls, config.positions(), &mut f))
}

/// Random starting configuration: Gaussian beads around the potential
/// minima, width `1/sqrt(mωβ)` for the harmonic well and `l_0/2` for the
/// dot (electrons placed `±l_0/2` apart along the soft axis).
pub fn initial_configuration<R: rand::Rng + ?Sized>(spec: &SystemSpec, rng: &mut R) -> BeadConfiguration {
    let (p, d) = (spec.num_beads, spec.dim);
    let (width, centers): (f64, [[f64; 3]; 2]) = match &spec.potential {
        PotentialSpec::IsotropicHarmonic { mass, omega } => {
            ((1.0 / (mass * omega * spec.beta)).sqrt(), [[0.0; 3]; 2])
        }
        PotentialSpec::QuantumDot(dot) => {
            let l0 = dot.l0();
            let axis = if dot.omega_x <= dot.omega_y { 0 } else { 1 };
            let mut c = [[0.0; 3]; 2];
            c[0][axis] = 0.5 * l0;
            c[1][axis] = -0.5 * l0;
            (0.5 * l0, c)
        }
        PotentialSpec::FreeParticles => ((spec.beta / spec.mass).sqrt() * spec.hbar, [[0.0; 3]; 2]),
    };
    let mut x = vec![0.0; 2 * p * d];
    for n in 0..2 {
        for i in 0..p {
            for c in 0..d {
                let z: f64 = StandardNormal.sample(rng);
                x[(n * p + i) * d + c] = centers[n][c] + width * z;
            }
        }
    }
    BeadConfiguration::from_parts(p, d, x, None)
}

/// Serializable ChaCha8 stream position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = |m: &str| Error::Format {
            path: "checkpoint".into(),
            message: m.into(),
        };
        let bytes = hex::decode(&self.seed).map_err(|_| bad("bad RNG seed"))?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| bad("RNG seed must be 32 bytes"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad("bad RNG word position"))?);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasRecord {
    pub params: WellTempered,
    pub grid: Option<GridSpec>,
    pub gaussians: Vec<Gaussian>,
    pub frozen: bool,
}

impl BiasRecord {
    pub fn capture(b: &BiasState) -> Self {
        BiasRecord {
            params: *b.params(),
            grid: b.grid_spec(),
            gaussians: b.gaussians().to_vec(),
            frozen: b.is_frozen(),
        }
    }

    pub fn restore(&self) -> Result<BiasState> {
        BiasState::from_gaussians(self.params, self.grid, &self.gaussians, self.frozen)
    }
}

/// Everything needed to continue a trajectory bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub step: u64,
    pub num_beads: usize,
    pub dim: usize,
    pub positions: Vec<f64>,
    pub momenta: Vec<f64>,
    pub rng: RngState,
    pub bias: Option<BiasRecord>,
}

/// Which work a stretch of steps performs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Phase {
    /// Emit samples every `sample_stride` steps.
    pub emit_samples: bool,
}

impl Phase {
    pub const QUIET: Phase = Phase { emit_samples: false };
    pub const SAMPLING: Phase = Phase { emit_samples: true };
}

/// A ring-polymer trajectory in progress.
pub struct Engine {
    spec: SystemSpec,
    integ: IntegratorSpec,
    baoab: Baoab,
    x: Vec<f64>,
    p: Vec<f64>,
    f: Vec<f64>,
    potential: f64,
    bias: Option<BiasState>,
    rng: ChaCha8Rng,
    step: u64,
}

impl Engine {
    /// Starts a trajectory. Missing momenta are drawn from Maxwell–Boltzmann.
    pub fn new(
        spec: &SystemSpec,
        integ: &IntegratorSpec,
        init: BeadConfiguration,
        bias: Option<BiasState>,
    ) -> Result<Self> {
        spec.validate()?;
        integ.validate()?;
        init.check_shape(spec)?;
        check_bias_topology(integ.topology, bias.as_ref())?;
        let mut rng = ChaCha8Rng::seed_from_u64(integ.seed);
        let mass = integ.bead_mass.unwrap_or(spec.mass);
        let mut init = init;
        let p = match init.take_momenta() {
            Some(p) => p,
            None => {
                let sd = (mass * spec.kt()).sqrt();
                (0..spec.num_coords())
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sd * z
                    })
                    .collect()
            }
        };
        let x = init.positions().to_vec();
        Self::assemble(spec, integ, x, p, bias, rng, 0)
    }

    fn assemble(
        spec: &SystemSpec,
        integ: &IntegratorSpec,
        x: Vec<f64>,
        p: Vec<f64>,
        bias: Option<BiasState>,
        rng: ChaCha8Rng,
        step: u64,
    ) -> Result<Self> {
        let mass = integ.bead_mass.unwrap_or(spec.mass);
        let baoab = Baoab::new(integ.timestep, integ.friction, spec.kt(), mass);
        let mut engine = Engine {
            spec: spec.clone(),
            integ: integ.clone(),
            baoab,
            f: vec![0.0; x.len()],
            x,
            p,
            potential: 0.0,
            bias,
            rng,
            step,
        };
        engine.refresh_forces();
        if !engine.potential.is_finite() {
            return Err(engine.numerical_error("non-finite energy in the starting configuration"));
        }
        Ok(engine)
    }

    /// Resumes from a checkpoint taken with the same system and integrator.
    pub fn from_checkpoint(spec: &SystemSpec, integ: &IntegratorSpec, ckpt: &Checkpoint) -> Result<Self> {
        spec.validate()?;
        integ.validate()?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                path: "checkpoint".into(),
                message: format!("unsupported checkpoint version {}", ckpt.format_version),
            });
        }
        let config = BeadConfiguration::new(ckpt.num_beads, ckpt.dim, ckpt.positions.clone())?
            .with_momenta(ckpt.momenta.clone())?;
        config.check_shape(spec)?;
        let bias = ckpt.bias.as_ref().map(BiasRecord::restore).transpose()?;
        check_bias_topology(integ.topology, bias.as_ref())?;
        Self::assemble(
            spec,
            integ,
            ckpt.positions.clone(),
            ckpt.momenta.clone(),
            bias,
            ckpt.rng.restore()?,
            ckpt.step,
        )
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            step: self.step,
            num_beads: self.spec.num_beads,
            dim: self.spec.dim,
            positions: self.x.clone(),
            momenta: self.p.clone(),
            rng: RngState::capture(&self.rng),
            bias: self.bias.as_ref().map(BiasRecord::capture),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn bias(&self) -> Option<&BiasState> {
        self.bias.as_ref()
    }

    pub fn bias_mut(&mut self) -> Option<&mut BiasState> {
        self.bias.as_mut()
    }

    pub fn take_bias(&mut self) -> Option<BiasState> {
        let b = self.bias.take();
        self.refresh_forces();
        b
    }

    /// Freezes the bias so that subsequent steps deposit nothing.
    pub fn freeze_bias(&mut self) {
        if let Some(b) = &mut self.bias {
            b.freeze();
        }
    }

    pub fn configuration(&self) -> BeadConfiguration {
        BeadConfiguration::from_parts(self.spec.num_beads, self.spec.dim, self.x.clone(), Some(self.p.clone()))
    }

    pub fn view(&self) -> StateView<'_> {
        StateView {
            step: self.step,
            positions: &self.x,
            momenta: &self.p,
            num_beads: self.spec.num_beads,
            dim: self.spec.dim,
        }
    }

    /// Current total energy (kinetic plus total potential).
    pub fn hamiltonian(&self) -> f64 {
        self.kinetic_energy() + self.potential
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 / self.baoab.mass * self.p.iter().map(|p| p * p).sum::<f64>()
    }

    fn refresh_forces(&mut self) {
        self.potential = compute_forces(
            &self.spec,
            self.integ.topology,
            self.bias.as_ref(),
            self.integ.walls.as_ref(),
            &self.x,
            &mut self.f,
        );
    }

    fn numerical_error(&self, message: &str) -> Error {
        let d = self.spec.dim;
        let bad = self
            .x
            .iter()
            .zip(&self.p)
            .zip(&self.f)
            .position(|((x, p), f)| !(x.is_finite() && p.is_finite() && f.is_finite()))
            .map_or(0, |i| i / d);
        Error::Numerical {
            step: self.step,
            bead: bad,
            message: message.to_string(),
        }
    }

    /// Advances `n_steps`, depositing Gaussians on schedule when an unfrozen
    /// bias is attached and emitting samples when the phase asks for them.
    pub fn advance<F>(&mut self, n_steps: u64, phase: Phase, sink: &mut F) -> Result<()>
    where
        F: FnMut(&TrajectorySample, StateView<'_>),
    {
        let spec = &self.spec;
        let topo = self.integ.topology;
        let walls = self.integ.walls;
        for _ in 0..n_steps {
            let bias = self.bias.as_ref();
            self.potential = self.baoab.step(&mut self.x, &mut self.p, &mut self.f, &mut self.rng, |x, f| {
                compute_forces(spec, topo, bias, walls.as_ref(), x, f)
            });
            self.step += 1;
            if !self.potential.is_finite() || self.p.iter().any(|v| !v.is_finite()) {
                return Err(self.numerical_error("non-finite energy or coordinate"));
            }
            if let Some(b) = self.bias.as_mut() {
                let stride = b.params().stride;
                if !b.is_frozen() && self.step % stride == 0 {
                    let s = cv_raw(&self.x, spec.num_beads, spec.dim, spec.spring_constant());
                    b.deposit(s, spec.beta)?;
                    self.potential = compute_forces(spec, topo, self.bias.as_ref(), walls.as_ref(), &self.x, &mut self.f);
                }
            }
            if phase.emit_samples && self.step % self.integ.sample_stride == 0 {
                let keep = self.integ.snapshot_stride > 0
                    && (self.step / self.integ.sample_stride) % self.integ.snapshot_stride == 0;
                let sample = self.sample(keep);
                sink(&sample, self.view());
            }
        }
        Ok(())
    }

    /// Builds the sample record for the current configuration.
    pub fn sample(&self, keep_snapshot: bool) -> TrajectorySample {
        let spec = &self.spec;
        let (p, d) = (spec.num_beads, spec.dim);
        let k = spec.spring_constant();
        let x = &self.x;
        let s = cv_raw(x, p, d, k);
        let mut bias_value = self.bias.as_ref().map_or(0.0, |b| b.value(s));
        if let Some(w) = &self.integ.walls {
            bias_value += w.value_and_derivative(s).0;
        }
        let (potential_energy, virial_direct, virial_exchange) = virial_terms(spec, x);
        TrajectorySample {
            step: self.step,
            s,
            bias_value,
            potential_energy,
            spring_energy_oo: spring_energy_raw(x, p, d, k, Topology::Distinguishable),
            virial_direct,
            virial_exchange,
            kinetic_energy: self.kinetic_energy(),
            snapshot: keep_snapshot.then(|| x.clone()),
        }
    }
}

/// Returns `(V/P summed over beads, direct virial, exchange virial)`.
pub(crate) fn virial_terms(spec: &SystemSpec, x: &[f64]) -> (f64, f64, f64) {
    let (p, d) = (spec.num_beads, spec.dim);
    let mut c1 = [0.0; 3];
    let mut c2 = [0.0; 3];
    for i in 0..p {
        for c in 0..d {
            c1[c] += x[i * d + c];
            c2[c] += x[(p + i) * d + c];
        }
    }
    let mut cm = [0.0; 3];
    for c in 0..d {
        c1[c] /= p as f64;
        c2[c] /= p as f64;
        cm[c] = 0.5 * (c1[c] + c2[c]);
    }
    let mut v = 0.0;
    let mut direct = 0.0;
    let mut exchange = 0.0;
    let mut g1 = [0.0; 3];
    let mut g2 = [0.0; 3];
    for i in 0..p {
        let (o1, o2) = (i * d, (p + i) * d);
        let (r1, r2) = (&x[o1..o1 + d], &x[o2..o2 + d]);
        v += spec.potential.evaluate(r1, r2);
        spec.potential.gradient_into(r1, r2, &mut g1[..d], &mut g2[..d]);
        for c in 0..d {
            direct += (r1[c] - c1[c]) * g1[c] + (r2[c] - c2[c]) * g2[c];
            exchange += (r1[c] - cm[c]) * g1[c] + (r2[c] - cm[c]) * g2[c];
        }
    }
    let inv_p = 1.0 / p as f64;
    (v * inv_p, 0.5 * inv_p * direct, 0.5 * inv_p * exchange)
}

/// Result of a finished trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryOutcome {
    pub final_config: BeadConfiguration,
    pub checkpoint: Checkpoint,
    pub bias: Option<BiasState>,
}

/// Runs `integ.n_steps` steps, discarding the first `integ.burn_in`, and
/// streams samples into `sink`. An unfrozen bias keeps depositing.
pub fn run_trajectory<F>(
    spec: &SystemSpec,
    integ: &IntegratorSpec,
    init: BeadConfiguration,
    bias: Option<BiasState>,
    mut sink: F,
) -> Result<TrajectoryOutcome>
where
    F: FnMut(&TrajectorySample, StateView<'_>),
{
    let mut engine = Engine::new(spec, integ, init, bias)?;
    let burn = integ.burn_in.min(integ.n_steps);
    engine.advance(burn, Phase::QUIET, &mut sink)?;
    engine.advance(integ.n_steps - burn, Phase::SAMPLING, &mut sink)?;
    Ok(TrajectoryOutcome {
        final_config: engine.configuration(),
        checkpoint: engine.checkpoint(),
        bias: engine.bias.clone(),
    })
}

/// Two-phase metadynamics protocol: `build_steps` of deposition with no
/// samples, then the bias is frozen and `sample_steps` are streamed for
/// static reweighting. Returns the frozen bias.
pub fn equilibrate_then_sample<F>(
    spec: &SystemSpec,
    integ: &IntegratorSpec,
    init: BeadConfiguration,
    bias: BiasState,
    build_steps: u64,
    sample_steps: u64,
    mut sink: F,
) -> Result<(BiasState, TrajectoryOutcome)>
where
    F: FnMut(&TrajectorySample, StateView<'_>),
{
    if bias.is_frozen() {
        return Err(Error::validation("the build phase needs an unfrozen bias"));
    }
    let mut engine = Engine::new(spec, integ, init, Some(bias))?;
    engine.advance(build_steps, Phase::QUIET, &mut sink)?;
    engine.freeze_bias();
    engine.advance(sample_steps, Phase::SAMPLING, &mut sink)?;
    let frozen = engine.bias.clone().expect("bias attached");
    Ok((
        frozen.clone(),
        TrajectoryOutcome {
            final_config: engine.configuration(),
            checkpoint: engine.checkpoint(),
            bias: Some(frozen),
        },
    ))
}

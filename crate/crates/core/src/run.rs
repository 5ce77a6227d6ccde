//! Run orchestration behind the command-line front end: trajectories with
//! checkpoint/restart, analysis of stored samples, oracle tables and the
//! Bennett ratio between two runs.
//!
//! A run directory holds `config.toml` (canonical form), `summary.json`,
//! the estimator tables and one `seed_<n>` directory per trajectory with
//! `samples.dat`, optionally `snapshots.dat` and `hills.txt`, and
//! `checkpoint.json`.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Observable, RunConfig, UnitSystem, ARTIFACT_VERSION};
use crate::error::{Error, Result};
use crate::estimators::{
    bennett_ratio, check_sign, fermion_energy_with_error, AverageAccumulator, Axis, BennettLeg, BennettResult,
    DensityAccumulator, Estimate, HistogramAccumulator, PairDistributionAccumulator, Reweight, VirialAccumulator,
};
use crate::io::{
    density_table, histogram_table, read_json, write_atomic, write_json, Provenance, SampleHeader, SampleReader,
    SampleWriter, Table, SAMPLE_FILE, SNAPSHOT_FILE,
};
use crate::metadynamics::BiasState;
use crate::model::{SymmetryChannel, Topology};
use crate::oracle::{
    dot_connected_ratio, dot_exact_diagonalize_converged, dot_thermal_energy, harmonic_pair_distribution,
    harmonic_pair_distribution_discrete, harmonic_partition, harmonic_partition_discrete, EdBasis, SpinState,
    CONVERGENCE_TOLERANCE,
};
use crate::potentials::PotentialSpec;
use crate::sampler::{initial_configuration, Checkpoint, Engine, Phase, TrajectorySample};
use crate::units::beta_from_kelvin;

/// Environment variable overriding the number of worker threads.
pub const THREADS_ENV: &str = "XPIMD_THREADS";
pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HILLS_FILE: &str = "hills.txt";
const RUN_CHECKPOINT_KIND: &str = "xpimd-run-checkpoint";

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Validation(_) | Error::Format { .. } | Error::Io(_) => 2,
        Error::Numerical { .. } | Error::NonPositiveFermion { .. } | Error::NotConverged { .. } => 3,
        Error::SignCollapse { .. } => 4,
        Error::NoOverlap { .. } => 5,
    }
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

fn worker_count(jobs: usize) -> usize {
    let requested = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok());
    let n = requested
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    n.clamp(1, jobs.max(1))
}

/// Runs `job(k)` for `k in 0..jobs` on a small pool; results keep index order.
fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(jobs: usize, job: F) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<T>>> = Mutex::new((0..jobs).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..worker_count(jobs) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= jobs {
                    break;
                }
                let r = job(k);
                out.lock().expect("result slot")[k] = Some(r);
            });
        }
    });
    out.into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

fn provenance(config: &RunConfig, seeds: Vec<u64>) -> Provenance {
    Provenance {
        version: ARTIFACT_VERSION.to_string(),
        config_hash: config.hash(),
        seeds,
    }
}

fn all_seeds(config: &RunConfig) -> Vec<u64> {
    (0..config.seeds).map(|k| config.seed(k)).collect()
}

/// Trajectory state saved alongside the engine checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunCheckpoint {
    pub kind: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Length of the sample file at this step.
    pub sample_bytes: u64,
    pub snapshot_bytes: Option<u64>,
    pub engine: Checkpoint,
}

impl RunCheckpoint {
    pub fn read(path: &Path) -> Result<Self> {
        let c: RunCheckpoint = read_json(path)?;
        if c.kind != RUN_CHECKPOINT_KIND {
            return Err(Error::Format {
                path: path.display().to_string(),
                message: format!("not a run checkpoint (kind `{}`)", c.kind),
            });
        }
        Ok(c)
    }
}

/// How `cmd_run` ended.
#[derive(Clone, Debug, PartialEq)]
pub enum RunOutcome {
    Completed(Summary),
    /// Stopped early on request after writing checkpoints.
    Stopped { step: u64 },
}

/// Options of `cmd_run` beyond the configuration.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Resume from this checkpoint file or run directory.
    pub restart: Option<PathBuf>,
    /// Stop every trajectory once it reaches this step.
    pub stop_at: Option<u64>,
}

struct Trajectory<'a> {
    config: &'a RunConfig,
    seed: u64,
    dir: PathBuf,
    provenance: Provenance,
}

impl Trajectory<'_> {
    fn sample_header(&self, coords: usize) -> SampleHeader {
        SampleHeader {
            provenance: self.provenance.clone(),
            format: self.config.format,
            coords,
        }
    }

    fn wants_snapshots(&self) -> bool {
        self.config.integrator.snapshot_stride > 0
    }

    fn write_checkpoint(&self, engine: &Engine, samples: &mut SampleWriter, snaps: Option<&mut SampleWriter>) -> Result<()> {
        let sample_bytes = samples.sync()?;
        let snapshot_bytes = snaps.map(|w| w.sync()).transpose()?;
        if let Some(b) = engine.bias() {
            write_atomic(&self.dir.join(HILLS_FILE), b.to_hills(&self.provenance.header_lines()).as_bytes())?;
        }
        write_json(
            &self.dir.join(CHECKPOINT_FILE),
            &RunCheckpoint {
                kind: RUN_CHECKPOINT_KIND.into(),
                version: ARTIFACT_VERSION.into(),
                config_hash: self.provenance.config_hash.clone(),
                seed: self.seed,
                sample_bytes,
                snapshot_bytes,
                engine: engine.checkpoint(),
            },
        )
    }

    fn integrator(&self) -> crate::sampler::IntegratorSpec {
        let mut integ = self.config.integrator.clone();
        integ.seed = self.seed;
        integ
    }

    fn start(&self) -> Result<(Engine, SampleWriter, Option<SampleWriter>)> {
        std::fs::create_dir_all(&self.dir)?;
        let spec = &self.config.system;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let init = initial_configuration(spec, &mut rng);
        let bias = self
            .config
            .metadynamics
            .as_ref()
            .map(|m| match &m.hills {
                Some(path) => BiasState::read_hills(path).map(|mut b| {
                    b.freeze();
                    b
                }),
                None => BiasState::new(m.params, Some(m.grid)),
            })
            .transpose()?;
        let engine = Engine::new(spec, &self.integrator(), init, bias)?;
        let samples = SampleWriter::create(&self.dir.join(SAMPLE_FILE), self.sample_header(0))?;
        let snaps = self
            .wants_snapshots()
            .then(|| SampleWriter::create(&self.dir.join(SNAPSHOT_FILE), self.sample_header(spec.num_coords())))
            .transpose()?;
        Ok((engine, samples, snaps))
    }

    fn resume(&self, ckpt: &RunCheckpoint) -> Result<(Engine, SampleWriter, Option<SampleWriter>)> {
        if ckpt.config_hash != self.provenance.config_hash || ckpt.seed != self.seed {
            return Err(Error::config(
                "restart",
                format!(
                    "checkpoint for seed {} and config {} does not match seed {} and config {}",
                    ckpt.seed, ckpt.config_hash, self.seed, self.provenance.config_hash
                ),
            ));
        }
        let spec = &self.config.system;
        let engine = Engine::from_checkpoint(spec, &self.integrator(), &ckpt.engine)?;
        let samples = SampleWriter::resume(&self.dir.join(SAMPLE_FILE), self.sample_header(0), ckpt.sample_bytes)?;
        let snaps = match (self.wants_snapshots(), ckpt.snapshot_bytes) {
            (true, Some(n)) => Some(SampleWriter::resume(
                &self.dir.join(SNAPSHOT_FILE),
                self.sample_header(spec.num_coords()),
                n,
            )?),
            (false, None) => None,
            _ => return Err(Error::config("restart", "checkpoint disagrees with the snapshot setting")),
        };
        Ok((engine, samples, snaps))
    }

    /// Advances to the end (or to `stop_at`), checkpointing on schedule.
    fn run(&self, resume: Option<&RunCheckpoint>, stop_at: Option<u64>) -> Result<u64> {
        let (mut engine, mut samples, mut snaps) = match resume {
            Some(c) => self.resume(c)?,
            None => self.start()?,
        };
        let quiet = self.config.quiet_steps();
        let total = self.config.total_steps();
        let end = stop_at.map_or(total, |s| s.min(total));
        let every = self.config.checkpoint_every;
        let freezes = self.config.metadynamics.is_some();
        if engine.step_count() == 0 {
            self.write_checkpoint(&engine, &mut samples, snaps.as_mut())?;
        }
        let mut failure: Option<Error> = None;
        while engine.step_count() < end {
            let step = engine.step_count();
            if freezes && step >= quiet {
                engine.freeze_bias();
            }
            let mut stop = end;
            if step < quiet {
                stop = stop.min(quiet);
            }
            if every > 0 {
                stop = stop.min((step / every + 1) * every);
            }
            let phase = if step < quiet { Phase::QUIET } else { Phase::SAMPLING };
            let mut sink = |s: &TrajectorySample, _: crate::sampler::StateView<'_>| {
                if failure.is_some() {
                    return;
                }
                let r = samples
                    .write(s)
                    .and_then(|_| match (&mut snaps, &s.snapshot) {
                        (Some(w), Some(_)) => w.write(s),
                        _ => Ok(()),
                    });
                if let Err(e) = r {
                    failure = Some(e);
                }
            };
            engine.advance(stop - step, phase, &mut sink)?;
            if let Some(e) = failure.take() {
                return Err(e);
            }
            if freezes && engine.step_count() >= quiet {
                engine.freeze_bias();
            }
            let now = engine.step_count();
            if now == end || (every > 0 && now % every == 0) {
                self.write_checkpoint(&engine, &mut samples, snaps.as_mut())?;
            }
        }
        Ok(engine.step_count())
    }
}

fn find_restart_root(path: &Path) -> Result<PathBuf> {
    let root = if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .ok_or_else(|| Error::config("restart", format!("{} is not inside a run directory", path.display())))?
    };
    if !root.join(CONFIG_FILE).is_file() {
        return Err(Error::config(
            "restart",
            format!("{} has no {CONFIG_FILE}", root.display()),
        ));
    }
    Ok(root)
}

/// Runs (or resumes) every seed of `config`, then analyzes the run.
pub fn cmd_run(config: &RunConfig, options: &RunOptions) -> Result<RunOutcome> {
    let (config, root) = match &options.restart {
        None => (config.clone(), PathBuf::from(&config.directory)),
        Some(path) => {
            let root = find_restart_root(path)?;
            let stored = RunConfig::load(&root.join(CONFIG_FILE))?;
            let config = config.with_overrides(None, Some(&root.display().to_string()))?;
            if stored.hash() != config.hash() {
                return Err(Error::config(
                    "restart",
                    "the configuration differs from the one the run was started with",
                ));
            }
            if path.is_file() {
                let c = RunCheckpoint::read(path)?;
                if !all_seeds(&config).contains(&c.seed) {
                    return Err(Error::config("restart", format!("seed {} is not part of this run", c.seed)));
                }
            }
            (config, root)
        }
    };
    std::fs::create_dir_all(&root)?;
    write_atomic(&root.join(CONFIG_FILE), config.location_free_text().as_bytes())?;
    let seeds = all_seeds(&config);
    let results = parallel_map(seeds.len(), |k| -> Result<u64> {
        let seed = seeds[k];
        let traj = Trajectory {
            config: &config,
            seed,
            dir: seed_dir(&root, seed),
            provenance: provenance(&config, vec![seed]),
        };
        let ckpt_path = traj.dir.join(CHECKPOINT_FILE);
        let resume = match &options.restart {
            Some(_) if ckpt_path.is_file() => Some(RunCheckpoint::read(&ckpt_path)?),
            _ => None,
        };
        traj.run(resume.as_ref(), options.stop_at)
    });
    let mut last = 0;
    for r in results {
        last = last.max(r?);
    }
    if last < config.total_steps() {
        return Ok(RunOutcome::Stopped { step: last });
    }
    analyze_run(&config, &root).map(RunOutcome::Completed)
}

/// Re-analyzes a finished run. `config` may change estimator and output
/// settings, or use fewer seeds, but not the simulated system.
pub fn cmd_analyze(root: &Path, config: Option<&RunConfig>) -> Result<Summary> {
    let stored = RunConfig::load(&root.join(CONFIG_FILE))?;
    let config = match config {
        None => stored,
        Some(c) => {
            let c = c.with_overrides(None, Some(&root.display().to_string()))?;
            let mut sampler = c.raw.sampler.clone();
            sampler.seeds = stored.raw.sampler.seeds;
            if c.raw.system != stored.raw.system
                || sampler != stored.raw.sampler
                || c.raw.metadynamics != stored.raw.metadynamics
            {
                return Err(Error::config(
                    "config",
                    "analysis may only change the seed count and the [estimators] and [output] sections",
                ));
            }
            if c.seeds > stored.seeds {
                return Err(Error::config("sampler.seeds", format!("the run has only {} seeds", stored.seeds)));
            }
            c
        }
    };
    analyze_run(&config, root)
}

/// One line of the summary record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub observable: String,
    pub channel: String,
    /// `ok` or `sign_collapse`.
    pub status: String,
    pub estimate: Option<f64>,
    pub stderr: Option<f64>,
    pub samples: u64,
    pub effective_samples: Option<f64>,
    pub mean_weight: Option<f64>,
    pub mean_weight_stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
}

/// Machine-readable result record of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub topology: Topology,
    pub energy_unit: String,
    pub length_unit: String,
    pub beta: f64,
    pub max_blocks: usize,
    pub samples: u64,
    pub snapshots: u64,
    pub entries: Vec<SummaryEntry>,
}

impl Summary {
    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn entry(&self, observable: &str, channel: SymmetryChannel) -> Option<&SummaryEntry> {
        self.entries
            .iter()
            .find(|e| e.observable == observable && e.channel == channel.name())
    }
}

fn unit_names(config: &RunConfig) -> (&'static str, &'static str) {
    match config.units {
        UnitSystem::Dot => ("meV", "nm"),
        UnitSystem::Natural => ("E", "L"),
    }
}

pub fn reweight_for(config: &RunConfig) -> Reweight {
    let beta = config.system.beta;
    if config.metadynamics.is_some() || config.integrator.walls.is_some() {
        Reweight::frozen_bias(beta)
    } else {
        Reweight::unbiased(beta)
    }
}

fn entry_from(observable: &str, channel: SymmetryChannel, r: Result<Estimate>, acc_count: u64) -> Result<SummaryEntry> {
    match r {
        Ok(e) => Ok(SummaryEntry {
            observable: observable.into(),
            channel: channel.name().into(),
            status: "ok".into(),
            estimate: Some(e.value),
            stderr: Some(e.stderr),
            samples: e.samples,
            effective_samples: Some(e.effective_samples),
            mean_weight: Some(e.mean_weight),
            mean_weight_stderr: Some(e.mean_weight_stderr),
            table: None,
        }),
        Err(Error::SignCollapse { mean, stderr }) => Ok(collapsed(observable, channel, mean, stderr, acc_count)),
        Err(e) => Err(e),
    }
}

fn collapsed(observable: &str, channel: SymmetryChannel, mean: f64, stderr: f64, samples: u64) -> SummaryEntry {
    SummaryEntry {
        observable: observable.into(),
        channel: channel.name().into(),
        status: "sign_collapse".into(),
        estimate: None,
        stderr: None,
        samples,
        effective_samples: None,
        mean_weight: Some(mean),
        mean_weight_stderr: Some(stderr),
        table: None,
    }
}

/// Per-seed accumulators; merged across seeds in seed order.
struct SeedAccumulators {
    energy: Vec<VirialAccumulator>,
    s_mean: AverageAccumulator,
    pair: Vec<PairDistributionAccumulator>,
    density: Vec<DensityAccumulator>,
    s_sampled: Option<HistogramAccumulator>,
    s_reweighted: Option<HistogramAccumulator>,
    samples: u64,
    snapshots: u64,
}

fn histogram_push(h: &mut HistogramAccumulator, s: &TrajectorySample, reweight: Reweight) {
    let (w, base) = reweight.weight(s, SymmetryChannel::Distinguishable);
    let slot = h.slot_1d(s.s);
    h.push(w, base, &[(slot, 1.0)]);
}

fn accumulate_seed(config: &RunConfig, dir: &Path, energy_channels: &[SymmetryChannel], hash: &str) -> Result<SeedAccumulators> {
    let est = &config.estimators;
    let rw = reweight_for(config);
    let spec = &config.system;
    let blocks = est.max_blocks;
    let connected = config.integrator.topology == Topology::Connected;
    let mut acc = SeedAccumulators {
        energy: energy_channels
            .iter()
            .map(|&c| match connected {
                true => VirialAccumulator::connected(rw.beta, spec.dim, blocks),
                false => VirialAccumulator::with_blocks(c, rw, spec.dim, blocks),
            })
            .collect(),
        s_mean: AverageAccumulator::with_blocks(SymmetryChannel::Distinguishable, rw, blocks),
        pair: Vec::new(),
        density: Vec::new(),
        s_sampled: est.s_histogram.filter(|_| est.wants(Observable::SHistogram)).map(|a| HistogramAccumulator::new(a, None, 1.0)),
        s_reweighted: None,
        samples: 0,
        snapshots: 0,
    };
    if rw.static_bias {
        acc.s_reweighted = acc.s_sampled.clone();
    }
    if !connected {
        if let (true, Some(axis)) = (est.wants(Observable::PairDistribution), est.pair_distribution) {
            acc.pair = est.channels.iter().map(|&c| PairDistributionAccumulator::new(c, rw, spec, axis)).collect();
        }
        if let (true, Some((x, y))) = (est.wants(Observable::Density), est.density) {
            acc.density = est
                .channels
                .iter()
                .map(|&c| DensityAccumulator::new(c, rw, spec, x, y))
                .collect::<Result<_>>()?;
        }
    }
    let check = |r: &SampleReader, path: &Path| -> Result<()> {
        if r.header.provenance.config_hash != hash {
            return Err(Error::Format {
                path: path.display().to_string(),
                message: "samples were produced by a different configuration".into(),
            });
        }
        Ok(())
    };
    let path = dir.join(SAMPLE_FILE);
    let reader = SampleReader::open(&path)?;
    check(&reader, &path)?;
    reader.for_each(|s| {
        acc.samples += 1;
        for e in &mut acc.energy {
            e.push(s);
        }
        acc.s_mean.push(s, s.s);
        if let Some(h) = &mut acc.s_sampled {
            histogram_push(h, s, Reweight::unbiased(rw.beta));
        }
        if let Some(h) = &mut acc.s_reweighted {
            histogram_push(h, s, rw);
        }
        Ok(())
    })?;
    if !acc.pair.is_empty() || !acc.density.is_empty() {
        let path = dir.join(SNAPSHOT_FILE);
        let reader = SampleReader::open(&path)?;
        check(&reader, &path)?;
        reader.for_each(|s| {
            acc.snapshots += 1;
            for p in &mut acc.pair {
                p.push(s);
            }
            for d in &mut acc.density {
                d.push(s);
            }
            Ok(())
        })?;
    }
    Ok(acc)
}

fn merge_seeds(mut all: Vec<SeedAccumulators>) -> Result<SeedAccumulators> {
    let mut first = all.remove(0);
    for other in &all {
        for (a, b) in first.energy.iter_mut().zip(&other.energy) {
            a.merge(b);
        }
        first.s_mean.merge(&other.s_mean);
        for (a, b) in first.pair.iter_mut().zip(&other.pair) {
            a.merge(b)?;
        }
        for (a, b) in first.density.iter_mut().zip(&other.density) {
            a.merge(b)?;
        }
        if let (Some(a), Some(b)) = (&mut first.s_sampled, &other.s_sampled) {
            a.merge(b)?;
        }
        if let (Some(a), Some(b)) = (&mut first.s_reweighted, &other.s_reweighted) {
            a.merge(b)?;
        }
        first.samples += other.samples;
        first.snapshots += other.snapshots;
    }
    Ok(first)
}

/// Computes every requested estimator from the stored samples of a run and
/// writes `summary.json` and the tables into `root`. A sign collapse in a
/// requested channel is recorded in the summary and then reported as an
/// error.
pub fn analyze_run(config: &RunConfig, root: &Path) -> Result<Summary> {
    let stored = RunConfig::load(&root.join(CONFIG_FILE))?;
    let run_hash = stored.hash();
    let seeds = all_seeds(config);
    let prov = provenance(config, seeds.clone());
    let est = &config.estimators;
    let connected = config.integrator.topology == Topology::Connected;
    let energy_channels: Vec<SymmetryChannel> = match (est.wants(Observable::Energy), connected) {
        (false, _) => Vec::new(),
        (true, true) => vec![SymmetryChannel::Distinguishable],
        (true, false) => est.channels.clone(),
    };
    let per_seed = parallel_map(seeds.len(), |k| {
        accumulate_seed(config, &seed_dir(root, seeds[k]), &energy_channels, &run_hash)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let acc = merge_seeds(per_seed)?;

    let mut entries = Vec::new();
    let mut collapse: Option<Error> = None;
    let note = |e: &SummaryEntry, collapse: &mut Option<Error>| {
        if e.status == "sign_collapse" && collapse.is_none() {
            *collapse = Some(Error::SignCollapse {
                mean: e.mean_weight.unwrap_or(f64::NAN),
                stderr: e.mean_weight_stderr.unwrap_or(f64::NAN),
            });
        }
    };
    for (c, a) in energy_channels.iter().zip(&acc.energy) {
        let e = entry_from("energy", *c, a.finish(), a.accumulator().count())?;
        note(&e, &mut collapse);
        entries.push(e);
    }
    entries.push(entry_from("s_mean", SymmetryChannel::Distinguishable, acc.s_mean.finish(), acc.samples)?);

    for (c, p) in est.channels.iter().zip(&acc.pair) {
        let name = format!("pair_{}.tsv", c.name());
        let e = grid_entry("pair_distribution", *c, p.finish(), acc.snapshots, &name, |g| {
            histogram_table(&prov, g, "r").write(&root.join(&name))
        })?;
        note(&e, &mut collapse);
        entries.push(e);
    }
    for (c, d) in est.channels.iter().zip(&acc.density) {
        let name = format!("density_{}.tsv", c.name());
        let e = grid_entry("density", *c, d.finish(), acc.snapshots, &name, |g| {
            density_table(&prov, g).write(&root.join(&name))
        })?;
        note(&e, &mut collapse);
        entries.push(e);
    }
    for (label, h) in [("s_histogram", &acc.s_sampled), ("s_histogram_reweighted", &acc.s_reweighted)] {
        if let Some(h) = h {
            let name = format!("{label}.tsv");
            if h.accumulator().count() > 0 {
                histogram_table(&prov, &h.finish(), "s").write(&root.join(&name))?;
            }
            let mw = h.accumulator().mean_weight();
            entries.push(SummaryEntry {
                observable: label.into(),
                channel: SymmetryChannel::Distinguishable.name().into(),
                status: "ok".into(),
                estimate: None,
                stderr: None,
                samples: h.accumulator().count(),
                effective_samples: Some(h.accumulator().effective_samples()),
                mean_weight: Some(mw.value),
                mean_weight_stderr: Some(mw.stderr),
                table: Some(name),
            });
        }
    }

    let (energy_unit, length_unit) = unit_names(config);
    let summary = Summary {
        version: ARTIFACT_VERSION.into(),
        config_hash: prov.config_hash.clone(),
        seeds,
        topology: config.integrator.topology,
        energy_unit: energy_unit.into(),
        length_unit: length_unit.into(),
        beta: config.system.beta,
        max_blocks: est.max_blocks,
        samples: acc.samples,
        snapshots: acc.snapshots,
        entries,
    };
    write_json(&root.join(SUMMARY_FILE), &summary)?;
    match collapse {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

fn grid_entry<F>(
    observable: &str,
    channel: SymmetryChannel,
    grid: Result<crate::estimators::HistogramGrid>,
    snapshots: u64,
    table: &str,
    write: F,
) -> Result<SummaryEntry>
where
    F: FnOnce(&crate::estimators::HistogramGrid) -> Result<()>,
{
    match grid {
        Ok(g) => {
            write(&g)?;
            Ok(SummaryEntry {
                observable: observable.into(),
                channel: channel.name().into(),
                status: "ok".into(),
                estimate: Some(g.integral()),
                stderr: None,
                samples: snapshots,
                effective_samples: Some(g.effective_samples.iter().sum()),
                mean_weight: None,
                mean_weight_stderr: None,
                table: Some(table.into()),
            })
        }
        Err(Error::SignCollapse { mean, stderr }) => Ok(collapsed(observable, channel, mean, stderr, snapshots)),
        Err(e) => Err(e),
    }
}

/// Reads the `s` values of a run as one Bennett leg, reweighted by the
/// run's frozen bias when it had one.
pub fn bennett_leg(root: &Path) -> Result<(RunConfig, BennettLeg)> {
    let config = RunConfig::load(&root.join(CONFIG_FILE))?;
    let rw = reweight_for(&config);
    let mut s = Vec::new();
    let mut lw = Vec::new();
    for seed in all_seeds(&config) {
        SampleReader::open(&seed_dir(root, seed).join(SAMPLE_FILE))?.for_each(|x| {
            s.push(x.s);
            lw.push(rw.log_factor(x));
            Ok(())
        })?;
    }
    let leg = BennettLeg {
        s,
        log_weights: rw.static_bias.then_some(lw),
    };
    Ok((config, leg))
}

/// Report of `cmd_bennett`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BennettReport {
    pub version: String,
    pub config_hash_oo: String,
    pub config_hash_connected: String,
    pub seeds_oo: Vec<u64>,
    pub seeds_connected: Vec<u64>,
    pub energy_unit: String,
    pub beta: f64,
    pub bennett: BennettResult,
    pub boson_energy: f64,
    pub boson_energy_stderr: f64,
    pub fermion_energy: f64,
    pub fermion_energy_stderr: f64,
}

/// Bennett ratio `Z_O/Z_oo` between a distinguishable run and a connected
/// run, and the fermion energy through the free-energy route.
pub fn cmd_bennett(oo_root: &Path, connected_root: &Path, out: &Path) -> Result<BennettReport> {
    let (oo_config, oo_leg) = bennett_leg(oo_root)?;
    let (o_config, o_leg) = bennett_leg(connected_root)?;
    if oo_config.integrator.topology != Topology::Distinguishable || o_config.integrator.topology != Topology::Connected {
        return Err(Error::config(
            "bennett",
            "the first run must use topology = distinguishable and the second topology = connected",
        ));
    }
    if oo_config.system != o_config.system {
        return Err(Error::config("bennett", "the two runs simulate different systems"));
    }
    let beta = oo_config.system.beta;
    let result = bennett_ratio(&oo_leg, &o_leg, beta)?;

    let rw = reweight_for(&oo_config);
    let mut energy = VirialAccumulator::with_blocks(SymmetryChannel::Boson, rw, oo_config.system.dim, oo_config.estimators.max_blocks);
    for seed in all_seeds(&oo_config) {
        SampleReader::open(&seed_dir(oo_root, seed).join(SAMPLE_FILE))?.for_each(|x| {
            energy.push(x);
            Ok(())
        })?;
    }
    check_sign(energy.accumulator(), SymmetryChannel::Boson)?;
    let eb = energy.finish()?;
    let (ef, ef_err) = fermion_energy_with_error(eb.value, eb.stderr, result.ratio, result.stderr, beta)?;

    let report = BennettReport {
        version: ARTIFACT_VERSION.into(),
        config_hash_oo: oo_config.hash(),
        config_hash_connected: o_config.hash(),
        seeds_oo: all_seeds(&oo_config),
        seeds_connected: all_seeds(&o_config),
        energy_unit: unit_names(&oo_config).0.into(),
        beta,
        bennett: result,
        boson_energy: eb.value,
        boson_energy_stderr: eb.stderr,
        fermion_energy: ef,
        fermion_energy_stderr: ef_err,
    };
    std::fs::create_dir_all(out)?;
    write_json(&out.join("bennett.json"), &report)?;
    let mut prov = provenance(&oo_config, report.seeds_oo.clone());
    prov.config_hash = format!("{} {}", report.config_hash_oo, report.config_hash_connected);
    let mut t = Table::new(&prov, &["shift", "ratio", "stderr"]);
    for &(c, r, e) in &report.bennett.plateau {
        t.push(vec![c, r, e]);
    }
    t.write(&out.join("bennett_plateau.tsv"))?;
    Ok(report)
}

/// Reference values for the configured system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub version: String,
    pub config_hash: String,
    pub energy_unit: String,
    pub beta: f64,
    pub num_beads: usize,
    pub boson_energy: f64,
    pub fermion_energy: f64,
    pub distinguishable_energy: Option<f64>,
    /// `Z_O/Z_oo`.
    pub connected_ratio: f64,
    /// The same quantities for the `P`-bead discretization (harmonic only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrete: Option<DiscreteReference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteReference {
    pub boson_energy: f64,
    pub fermion_energy: f64,
    pub distinguishable_energy: f64,
    pub connected_ratio: f64,
}

/// Largest cutoff tried when converging the dot spectrum.
pub const ORACLE_MAX_CUTOFF: usize = 64;
pub const ORACLE_START_CUTOFF: usize = 16;

/// Writes analytic or exact-diagonalization references for `config` into `out`.
pub fn cmd_oracle(config: &RunConfig, out: &Path) -> Result<OracleReport> {
    std::fs::create_dir_all(out)?;
    let spec = &config.system;
    let prov = provenance(config, all_seeds(config));
    let beta = spec.beta;
    let (energy_unit, _) = unit_names(config);
    let report = match &spec.potential {
        PotentialSpec::IsotropicHarmonic { mass, omega } => {
            let hw = spec.hbar * omega;
            let length2 = spec.hbar / (mass * omega);
            let cont = harmonic_partition(beta, hw, spec.dim)?;
            let disc = harmonic_partition_discrete(beta, hw, spec.dim, spec.num_beads)?;
            let g = harmonic_pair_distribution(beta, hw, spec.dim, length2)?;
            let gd = harmonic_pair_distribution_discrete(beta, hw, spec.dim, length2, spec.num_beads)?;
            let axis = match config.estimators.pair_distribution {
                Some(a) => a,
                None => Axis::new(0.0, 5.0 * g.sigma_direct, 50)?,
            };
            let channels = [SymmetryChannel::Boson, SymmetryChannel::Fermion, SymmetryChannel::Distinguishable];
            let mut cols = vec!["r_lo".to_string(), "r_hi".to_string()];
            for c in channels {
                cols.push(c.name().to_string());
            }
            for c in channels {
                cols.push(format!("{}_beads", c.name()));
            }
            let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
            let mut t = Table::new(&prov, &col_refs);
            for i in 0..axis.bins {
                let (lo, hi) = axis.edges(i);
                let mut row = vec![lo, hi];
                row.extend(channels.iter().map(|&c| g.bin_average(lo, hi, c)));
                row.extend(channels.iter().map(|&c| gd.bin_average(lo, hi, c)));
                t.push(row);
            }
            t.write(&out.join("pair_reference.tsv"))?;
            OracleReport {
                version: ARTIFACT_VERSION.into(),
                config_hash: prov.config_hash.clone(),
                energy_unit: energy_unit.into(),
                beta,
                num_beads: spec.num_beads,
                boson_energy: cont.e_boson,
                fermion_energy: cont.e_fermion,
                distinguishable_energy: Some(cont.e_distinguishable),
                connected_ratio: cont.connected_ratio,
                discrete: Some(DiscreteReference {
                    boson_energy: disc.e_boson,
                    fermion_energy: disc.e_fermion,
                    distinguishable_energy: disc.e_distinguishable,
                    connected_ratio: disc.connected_ratio,
                }),
                convergence_residual: None,
            }
        }
        PotentialSpec::QuantumDot(dot) => {
            let spectrum =
                dot_exact_diagonalize_converged(dot, EdBasis::Polar, ORACLE_START_CUTOFF, ORACLE_MAX_CUTOFF, CONVERGENCE_TOLERANCE)?;
            spectrum.write(&out.join("spectrum.tsv"), &prov.header_lines())?;
            let mut t = Table::new(&prov, &["temperature_k", "beta_per_mev", "singlet_mev", "triplet_mev", "connected_ratio"]);
            for k in 1..=60 {
                let b = beta_from_kelvin(k as f64);
                t.push(vec![
                    k as f64,
                    b,
                    dot_thermal_energy(&spectrum, b, SpinState::Singlet),
                    dot_thermal_energy(&spectrum, b, SpinState::Triplet),
                    dot_connected_ratio(&spectrum, b),
                ]);
            }
            t.write(&out.join("thermal.tsv"))?;
            OracleReport {
                version: ARTIFACT_VERSION.into(),
                config_hash: prov.config_hash.clone(),
                energy_unit: energy_unit.into(),
                beta,
                num_beads: spec.num_beads,
                boson_energy: dot_thermal_energy(&spectrum, beta, SpinState::Singlet),
                fermion_energy: dot_thermal_energy(&spectrum, beta, SpinState::Triplet),
                distinguishable_energy: None,
                connected_ratio: dot_connected_ratio(&spectrum, beta),
                discrete: None,
                convergence_residual: spectrum.residual,
            }
        }
        PotentialSpec::FreeParticles => {
            return Err(Error::config("system.potential", "no reference values exist for free particles"));
        }
    };
    write_json(&out.join("oracle.json"), &report)?;
    Ok(report)
}

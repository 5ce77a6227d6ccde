use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use exchange_pimd::run::{
    cmd_analyze, cmd_bennett, cmd_oracle, cmd_run, exit_code, RunOptions, RunOutcome, Summary, THREADS_ENV,
};
use exchange_pimd::{config::RunConfig, Error, Result};

#[derive(Parser)]
#[command(name = "xpimd", version, about = "Path-integral MD with exchange via free-energy differences")]
#[command(after_help = format!("Set {THREADS_ENV} to limit the number of worker threads."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trajectories of a configuration and analyze them.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Resume from a seed checkpoint or a run directory.
        #[arg(long, value_name = "checkpoint")]
        restart: Option<PathBuf>,
        /// Number of independent seeds.
        #[arg(long, value_name = "N")]
        seeds: Option<usize>,
        #[arg(long, value_name = "dir")]
        out: Option<PathBuf>,
        /// Stop after this many steps, leaving checkpoints to restart from.
        #[arg(long, hide = true)]
        stop_at: Option<u64>,
    },
    /// Write analytic or exact-diagonalization reference values.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_name = "dir")]
        out: Option<PathBuf>,
    },
    /// Recompute estimators from the stored samples of a run.
    Analyze {
        /// Run directory.
        dir: PathBuf,
        /// Alternative estimator settings for the same simulation.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, hide = true)]
        seeds: Option<usize>,
    },
    /// Bennett ratio between a distinguishable run and a connected run.
    Bennett {
        distinguishable: PathBuf,
        connected: PathBuf,
        #[arg(long, value_name = "dir", default_value = "bennett")]
        out: PathBuf,
    },
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn print_summary(root: &Path, s: &Summary) {
    println!("run {} (config {})", root.display(), s.config_hash);
    for e in &s.entries {
        match (e.status.as_str(), e.estimate, e.stderr) {
            ("ok", Some(v), Some(err)) => {
                println!("  {} {}: {v} ± {err} {}", e.observable, e.channel, s.energy_unit)
            }
            ("ok", _, _) => println!("  {} {}: {}", e.observable, e.channel, e.table.as_deref().unwrap_or("ok")),
            (status, _, _) => println!("  {} {}: {status}", e.observable, e.channel),
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            restart,
            seeds,
            out,
            stop_at,
        } => {
            let base = RunConfig::load(&config)?;
            if restart.is_some() && out.is_some() {
                return Err(Error::Config {
                    field: "--out".into(),
                    message: "a restart writes into the run directory of its checkpoint".into(),
                });
            }
            let cfg = base.with_overrides(seeds, out.as_deref().map(path_str).as_deref())?;
            let root = match &restart {
                Some(p) if p.is_file() => p.parent().and_then(Path::parent).map_or_else(PathBuf::new, Path::to_path_buf),
                Some(p) => p.clone(),
                None => PathBuf::from(&cfg.directory),
            };
            match cmd_run(&cfg, &RunOptions { restart, stop_at })? {
                RunOutcome::Completed(summary) => print_summary(&root, &summary),
                RunOutcome::Stopped { step } => println!("stopped at step {step}; checkpoints written"),
            }
        }
        Command::Oracle { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| PathBuf::from(&cfg.directory).join("oracle"));
            let r = cmd_oracle(&cfg, &out)?;
            println!("reference for {} at beta {}", out.display(), r.beta);
            println!("  boson {} {}", r.boson_energy, r.energy_unit);
            println!("  fermion {} {}", r.fermion_energy, r.energy_unit);
            println!("  connected ratio {}", r.connected_ratio);
        }
        Command::Analyze { dir, config, seeds } => {
            let cfg = config.map(|p| RunConfig::load(&p)).transpose()?;
            let cfg = match (cfg, seeds) {
                (Some(c), s) => Some(c.with_overrides(s, None)?),
                (None, Some(s)) => {
                    let stored = RunConfig::load(&dir.join(exchange_pimd::run::CONFIG_FILE))?;
                    Some(stored.with_overrides(Some(s), None)?)
                }
                (None, None) => None,
            };
            let summary = cmd_analyze(&dir, cfg.as_ref())?;
            print_summary(&dir, &summary);
        }
        Command::Bennett {
            distinguishable,
            connected,
            out,
        } => {
            let r = cmd_bennett(&distinguishable, &connected, &out)?;
            println!("Z_O/Z_oo = {} ± {} (C* = {})", r.bennett.ratio, r.bennett.stderr, r.bennett.c_star);
            println!("plateau {}", if r.bennett.plateau_ok { "ok" } else { "not flat" });
            println!("boson energy {} ± {} {}", r.boson_energy, r.boson_energy_stderr, r.energy_unit);
            println!("fermion energy {} ± {} {}", r.fermion_energy, r.fermion_energy_stderr, r.energy_unit);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

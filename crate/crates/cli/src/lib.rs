//! Batch front-end for `llns-core`.
//!
//! Every subcommand merges an optional TOML config with its flags, writes its
//! outputs into `--output-dir` and indexes them in `manifest.json`. Exit status
//! is 0 on success, 2 for configuration errors and 3 for numerical failures.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use llns_core::dynamics::Scheme;

use crate::config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OUTPUT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Output(_) => EXIT_OUTPUT,
        }
    }
}

impl From<llns_core::Error> for CliError {
    fn from(e: llns_core::Error) -> Self {
        use llns_core::Error as E;
        match e {
            E::IntegrationFailure { .. } | E::NotIntegrable(_) | E::InfiniteCost { .. } | E::MissingNoiseLog => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "exponential" | "exponential_euler" => Ok(Scheme::ExponentialEuler),
        "semi-implicit" | "semi_implicit_euler" => Ok(Scheme::SemiImplicitEuler),
        _ => Err(format!("unknown scheme '{s}', expected exponential or semi-implicit")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "llns", version, about = "Galerkin simulations and large-deviation diagnostics for stochastic LLNS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Default, Args)]
struct Common {
    /// TOML file with [noise], [integrator], [run] and [experiment] sections
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory receiving all outputs (default: current directory)
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Master seed; replica r draws from stream r
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Default, Args)]
struct NoiseArgs {
    /// Galerkin cutoff: modes with max |k_i| <= m
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Debug, Default, Args)]
struct StepArgs {
    #[arg(long = "T")]
    t_final: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// exponential or semi-implicit
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
}

#[derive(Debug, Default, Args)]
struct Replicas {
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the Galerkin SDE and write the path
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        step: StepArgs,
        /// Initial field CSV (default: rest)
        #[arg(long)]
        initial: Option<PathBuf>,
        /// Forcing CSV on the integration grid
        #[arg(long)]
        forcing: Option<PathBuf>,
    },
    /// Integrate the controlled deterministic equation and price the path
    Skeleton {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        step: StepArgs,
        #[arg(long)]
        initial: Option<PathBuf>,
        #[arg(long)]
        forcing: Option<PathBuf>,
    },
    /// Evaluate the rate functional of a trajectory CSV
    Rate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Centre of the Gaussian initial law (default: rest)
        #[arg(long)]
        u0: Option<PathBuf>,
    },
    /// Sample the tilted law for a forcing and measure concentration
    Tilt {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        step: StepArgs,
        #[command(flatten)]
        replicas: Replicas,
        #[arg(long)]
        forcing: Option<PathBuf>,
        #[arg(long)]
        u0: Option<PathBuf>,
        /// Initial state of the target path (default: u0)
        #[arg(long)]
        v0: Option<PathBuf>,
    },
    /// Check invariance of the Gaussian law under the dynamics
    Stationarity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        step: StepArgs,
        #[command(flatten)]
        replicas: Replicas,
    },
    /// Compare forward and reversed two- and three-point moments
    Reversal {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        step: StepArgs,
        #[command(flatten)]
        replicas: Replicas,
        #[arg(long)]
        pair_modes: Option<usize>,
        #[arg(long)]
        triples: Option<usize>,
    },
    /// Build high-frequency perturbations of a base path
    Blowup {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        step: StepArgs,
        /// Comma-separated frequencies
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long)]
        tau_prime: Option<f64>,
        /// Base trajectory CSV (default: rest on B_m over [0, T])
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Forcing of the base trajectory (default: zero)
        #[arg(long)]
        forcing: Option<PathBuf>,
        /// Also write each perturbed path and its forcing
        #[arg(long)]
        write_paths: bool,
    },
    /// Tabulate Tr[A Q_delta] over cutoffs and a log grid of delta
    Traces {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m_max: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        /// lo:hi[:count]
        #[arg(long)]
        delta_grid: Option<String>,
    },
    /// Exponential moment of the Gaussian initial law
    Gaussmoment {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        u0: Option<PathBuf>,
    },
    /// Estimate eps log P(event) along a scaling schedule
    Rareevent {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        step: StepArgs,
        #[command(flatten)]
        replicas: Replicas,
        #[arg(long)]
        beta: Option<f64>,
        /// CSV with header epsilon,delta,m
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// terminal-norm or peak-energy
        #[arg(long)]
        event: Option<String>,
        #[arg(long)]
        level: Option<f64>,
        /// Importance-sampling forcing CSV
        #[arg(long)]
        tilt: Option<PathBuf>,
        #[arg(long)]
        u0: Option<PathBuf>,
    },
}

fn apply_common(c: &mut RunConfig, a: &Common) {
    c.run.seed = a.seed;
    c.run.output_dir = a.output_dir.clone();
}

fn apply_noise(c: &mut RunConfig, a: &NoiseArgs) {
    c.noise.m = a.m;
    c.noise.epsilon = a.epsilon;
    c.noise.delta = a.delta;
    c.noise.beta = a.beta;
}

fn apply_step(c: &mut RunConfig, a: &StepArgs) {
    c.integrator.t_final = a.t_final;
    c.integrator.dt = a.dt;
    c.integrator.scheme = a.scheme;
}

/// Splits a parsed command into its name, config file, flag values and
/// command-only switches.
fn flags(cmd: &Command) -> (&'static str, Option<PathBuf>, RunConfig, bool) {
    let mut c = RunConfig::default();
    let mut write_paths = false;
    let (name, common) = match cmd {
        Command::Simulate { common, noise, step, initial, forcing } | Command::Skeleton { common, noise, step, initial, forcing } => {
            apply_noise(&mut c, noise);
            apply_step(&mut c, step);
            c.experiment.initial = initial.clone();
            c.experiment.forcing = forcing.clone();
            (if matches!(cmd, Command::Simulate { .. }) { "simulate" } else { "skeleton" }, common)
        }
        Command::Rate { common, trajectory, u0 } => {
            c.experiment.trajectory = trajectory.clone();
            c.experiment.u0 = u0.clone();
            ("rate", common)
        }
        Command::Tilt { common, noise, step, replicas, forcing, u0, v0 } => {
            apply_noise(&mut c, noise);
            apply_step(&mut c, step);
            c.experiment.replicas = replicas.replicas;
            c.experiment.forcing = forcing.clone();
            c.experiment.u0 = u0.clone();
            c.experiment.v0 = v0.clone();
            ("tilt", common)
        }
        Command::Stationarity { common, noise, step, replicas } => {
            apply_noise(&mut c, noise);
            apply_step(&mut c, step);
            c.experiment.replicas = replicas.replicas;
            ("stationarity", common)
        }
        Command::Reversal { common, noise, step, replicas, pair_modes, triples } => {
            apply_noise(&mut c, noise);
            apply_step(&mut c, step);
            c.experiment.replicas = replicas.replicas;
            c.experiment.pair_modes = *pair_modes;
            c.experiment.triples = *triples;
            ("reversal", common)
        }
        Command::Blowup { common, noise, step, n, tau_prime, trajectory, forcing, write_paths: w } => {
            apply_noise(&mut c, noise);
            apply_step(&mut c, step);
            c.experiment.n = (!n.is_empty()).then(|| n.clone());
            c.experiment.tau_prime = *tau_prime;
            c.experiment.trajectory = trajectory.clone();
            c.experiment.forcing = forcing.clone();
            write_paths = *w;
            ("blowup", common)
        }
        Command::Traces { common, m_max, beta, delta_grid } => {
            c.noise.beta = *beta;
            c.experiment.m_max = *m_max;
            c.experiment.delta_grid = delta_grid.clone();
            ("traces", common)
        }
        Command::Gaussmoment { common, noise, eta, samples, u0 } => {
            apply_noise(&mut c, noise);
            c.experiment.eta = *eta;
            c.experiment.samples = *samples;
            c.experiment.u0 = u0.clone();
            ("gaussmoment", common)
        }
        Command::Rareevent { common, step, replicas, beta, schedule, event, level, tilt, u0 } => {
            apply_step(&mut c, step);
            c.noise.beta = *beta;
            c.experiment.replicas = replicas.replicas;
            c.experiment.schedule = schedule.clone();
            c.experiment.event = event.clone();
            c.experiment.level = *level;
            c.experiment.tilt = tilt.clone();
            c.experiment.u0 = u0.clone();
            ("rareevent", common)
        }
    };
    apply_common(&mut c, common);
    (name, common.config.clone(), c, write_paths)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("LLNS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("LLNS_THREADS = '{v}' is not a positive integer")))?;
    // a pool may already exist when run() is called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn execute(cmd: &Command, argv: &[String]) -> Result<(), CliError> {
    let start = Instant::now();
    configure_threads()?;
    let (name, file, flag_cfg, write_paths) = flags(cmd);
    let base = match &file {
        Some(p) => RunConfig::load(p).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.overlay(&flag_cfg);
    let outputs = match cmd {
        Command::Simulate { .. } => commands::simulate_cmd(&mut cfg),
        Command::Skeleton { .. } => commands::skeleton_cmd(&mut cfg),
        Command::Rate { .. } => commands::rate_cmd(&mut cfg),
        Command::Tilt { .. } => commands::tilt_cmd(&mut cfg),
        Command::Stationarity { .. } => commands::stationarity_cmd(&mut cfg),
        Command::Reversal { .. } => commands::reversal_cmd(&mut cfg),
        Command::Blowup { .. } => commands::blowup_cmd(&mut cfg, write_paths),
        Command::Traces { .. } => commands::traces_cmd(&mut cfg),
        Command::Gaussmoment { .. } => commands::gaussmoment_cmd(&mut cfg),
        Command::Rareevent { .. } => commands::rareevent_cmd(&mut cfg),
    }?;
    let dir = cfg.run.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    manifest::write_all(&dir, &outputs, name, argv, &cfg, start.elapsed())?;
    for f in outputs.names() {
        println!("{}", dir.join(f).display());
    }
    Ok(())
}

/// Runs the command line `argv` (including the program name) and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli.command, &argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("llns: {e}");
            e.exit_code()
        }
    }
}

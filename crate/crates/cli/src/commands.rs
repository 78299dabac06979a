//! Subcommand bodies. Each one reads its inputs, completes and validates the
//! configuration, runs the library and returns the files to write.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use llns_core::basis::io::read_field;
use llns_core::dynamics::{
    dissipation, energy, read_trajectory, simulate, trapezoid_weights, write_fields, write_trajectory, Forcing,
    IntegratorConfig, Trajectory,
};
use llns_core::experiments::{
    blowup_family, gaussian_exp_moment, rare_event_estimate, stationarity_test, tilted_simulate, time_reversal_test,
    transfer, RareEventRow, ReversalSettings,
};
use llns_core::noise::{replica_rng, trace_aq_with, ScalingSchedule};
use llns_core::rate::total_rate;
use llns_core::{Basis, NoiseParams, SpectralField, TrilinearTable};

use crate::config::{validate_config, RunConfig};
use crate::manifest::Outputs;
use crate::CliError;

pub const DEFAULT_BETA: f64 = 1.5;
pub const DEFAULT_REPLICAS: usize = 1000;
pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_GRID_POINTS: usize = 5;

/// Observable whose exceedance defines a rare event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// `|u(T)|_H >= level`
    TerminalNorm,
    /// `max_t |u(t)|_H^2 / 2 >= level`
    PeakEnergy,
}

impl EventKind {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "terminal-norm" => Ok(EventKind::TerminalNorm),
            "peak-energy" => Ok(EventKind::PeakEnergy),
            _ => Err(CliError::Config(format!(
                "unknown event '{s}', expected terminal-norm or peak-energy"
            ))),
        }
    }

    fn hit(self, traj: &Trajectory, level: f64) -> bool {
        match self {
            EventKind::TerminalNorm => energy(traj.last()) * 2.0 >= level * level,
            EventKind::PeakEnergy => traj.states.iter().any(|u| energy(u) >= level),
        }
    }
}

fn need<T: Clone>(v: &Option<T>, what: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::Config(format!("missing {what}")))
}

fn validated(cfg: &RunConfig) -> Result<(), CliError> {
    let d = validate_config(cfg);
    if d.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(d.join("\n")))
    }
}

fn need_seed(cfg: &RunConfig) -> Result<u64, CliError> {
    need(&cfg.run.seed, "--seed (randomized runs must declare a master seed)")
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: llns_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match CliError::from(e) {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn load_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    with_path(path, read_trajectory(open(path)?))
}

fn load_forcing(path: &Path) -> Result<Forcing, CliError> {
    let t = load_trajectory(path)?;
    with_path(path, Forcing::new(t.t0, t.dt, t.states))
}

/// Reads a field and moves it onto `basis`, refusing to drop energy.
fn load_field(path: &Path, basis: &Arc<Basis>) -> Result<SpectralField, CliError> {
    let u = with_path(path, read_field(open(path)?))?;
    let v = transfer(&u, basis);
    let lost = energy(&u) - energy(&v);
    if lost > 1e-14 * energy(&u).max(1.0) {
        return Err(CliError::Config(format!(
            "{} has modes outside B_{}",
            path.display(),
            basis.cutoff()
        )));
    }
    Ok(v)
}

fn field_or_zero(path: &Option<std::path::PathBuf>, basis: &Arc<Basis>) -> Result<SpectralField, CliError> {
    match path {
        Some(p) => load_field(p, basis),
        None => Ok(SpectralField::zeros(basis)),
    }
}

/// Takes `m`, `dt` and `T` from a forcing file where the configuration leaves
/// them open, and rejects disagreements.
fn adopt_grid(cfg: &mut RunConfig, f: &Forcing) -> Result<(), CliError> {
    let m = f.basis().cutoff();
    if !f.basis().is_galerkin() {
        return Err(CliError::Config("forcing must live on a Galerkin set B_m".into()));
    }
    match cfg.noise.m {
        None => cfg.noise.m = Some(m),
        Some(k) if k != m => {
            return Err(CliError::Config(format!("forcing lives on B_{m} but m = {k}")));
        }
        _ => {}
    }
    let t_end = f.t0 + f.dt * (f.len() - 1) as f64;
    cfg.integrator.dt.get_or_insert(f.dt);
    cfg.integrator.t_final.get_or_insert(t_end);
    Ok(())
}

fn noise_params(cfg: &RunConfig, epsilon: Option<f64>) -> Result<NoiseParams, CliError> {
    let n = &cfg.noise;
    let eps = match epsilon {
        Some(e) => e,
        None => need(&n.epsilon, "--epsilon")?,
    };
    let params = NoiseParams::new(
        eps,
        need(&n.delta, "--delta")?,
        n.beta.unwrap_or(DEFAULT_BETA),
        need(&n.m, "--m")?,
    )?;
    Ok(params)
}

fn integrator(cfg: &RunConfig) -> Result<IntegratorConfig, CliError> {
    let i = &cfg.integrator;
    let c = IntegratorConfig::new(need(&i.dt, "--dt")?, need(&i.t_final, "--T")?)?;
    Ok(c.with_scheme(i.scheme.unwrap_or_default()))
}

fn fill_defaults(cfg: &mut RunConfig) {
    cfg.noise.beta.get_or_insert(DEFAULT_BETA);
    cfg.integrator.scheme.get_or_insert_with(Default::default);
}

#[derive(Debug, Serialize)]
struct PathSummary {
    m: usize,
    modes: usize,
    steps: usize,
    energy_initial: f64,
    energy_final: f64,
    energy_max: f64,
    /// `int_0^T |u|_V^2 dt` by the trapezoid rule
    dissipation_integral: f64,
}

impl PathSummary {
    fn of(traj: &Trajectory) -> Self {
        let e: Vec<f64> = traj.states.iter().map(energy).collect();
        let w = trapezoid_weights(traj.states.len());
        let d: f64 = traj.states.iter().zip(&w).map(|(u, w)| w * dissipation(u)).sum::<f64>() * traj.dt;
        PathSummary {
            m: traj.basis().cutoff(),
            modes: traj.basis().len(),
            steps: traj.steps(),
            energy_initial: e[0],
            energy_final: e[e.len() - 1],
            energy_max: e.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            dissipation_integral: d,
        }
    }
}

pub fn simulate_cmd(cfg: &mut RunConfig) -> Result<Outputs, CliError> {
    fill_defaults(cfg);
    validated(cfg)?;
    let params = noise_params(cfg, None)?;
    let icfg = integrator(cfg)?;
    let seed = if params.epsilon > 0.0 {
        need_seed(cfg)?
    } else {
        cfg.run.seed.unwrap_or(0)
    };
    let basis = Basis::galerkin(params.m);
    let u0 = field_or_zero(&cfg.experiment.initial, &basis)?;
    let forcing = cfg.experiment.forcing.as_deref().map(load_forcing).transpose()?;
    let table = TrilinearTable::build(&basis);
    let traj = simulate(&u0, &params, &icfg, &table, forcing.as_ref(), &mut replica_rng(seed, 0))?;
    let mut out = Outputs::default();
    out.with_writer("trajectory.csv", |w| write_trajectory(&traj, w))?;
    out.json("summary.json", &PathSummary::of(&traj))?;
    Ok(out)
}

#[derive(Debug, Serialize)]
struct SkeletonSummary {
    #[serde(flatten)]
    path: PathSummary,
    /// `1/2 |f|^2` of the input forcing
    forcing_cost: f64,
    /// dynamic rate recovered from the integrated path
    recovered_cost: f64,
}

pub fn skeleton_cmd(cfg: &mut RunConfig) -> Result<Outputs, CliError> {
    let forcing = cfg.experiment.forcing.as_deref().map(load_forcing).transpose()?;
    if let Some(f) = &forcing {
        adopt_grid(cfg, f)?;
    }
    cfg.noise.epsilon = Some(0.0);
    cfg.noise.delta.get_or_insert(0.0);
    fill_defaults(cfg);
    validated(cfg)?;
    let params = noise_params(cfg, None)?;
    let icfg = integrator(cfg)?;
    let basis = Basis::galerkin(params.m);
    let u0 = field_or_zero(&cfg.experiment.initial, &basis)?;
    let table = TrilinearTable::build(&basis);
    let traj = simulate(&u0, &params, &icfg, &table, forcing.as_ref(), &mut replica_rng(0, 0))?;
    let rate = total_rate(&traj, &u0, &table)?;
    let summary = SkeletonSummary {
        path: PathSummary::of(&traj),
        forcing_cost: forcing.as_ref().map_or(0.0, Forcing::cost),
        recovered_cost: rate.dynamic,
    };
    let mut out = Outputs::default();
    out.with_writer("trajectory.csv", |w| write_trajectory(&traj, w))?;
    out.json("rate.json", &rate)?;
    out.json("summary.json", &summary)?;
    Ok(out)
}

pub fn rate_cmd(cfg: &mut RunConfig) -> Result<Outputs, CliError> {
    let path = need(&cfg.experiment.trajectory, "--trajectory")?;
    let traj = load_trajectory(&path)?;
    cfg.noise.m.get_or_insert(traj.basis().cutoff());
    validated(cfg)?;
    let u0 = field_or_zero(&cfg.experiment.u0, traj.basis())?;
    let table = TrilinearTable::build(traj.basis());
    let rate = total_rate(&traj, &u0, &table)?;
    let mut out = Outputs::default();
    out.json("rate.json", &rate)?;
    Ok(out)
}

pub fn tilt_cmd(cfg: &mut RunConfig) -> Result<Outputs, CliError> {
    let f = load_forcing(&need(&cfg.experiment.forcing, "--forcing")?)?;
    adopt_grid(cfg, &f)?;
    fill_defaults(cfg);
    cfg.experiment.replicas.get_or_insert(DEFAULT_REPLICAS);
    validated(cfg)?;
    let params = noise_params(cfg, None)?;
    let icfg = integrator(cfg)?;
    let seed = need_seed(cfg)?;
    let u0 = field_or_zero(&cfg.experiment.u0, f.basis())?;
    let v0 = match &cfg.experiment.v0 {
        Some(p) => load_field(p, f.basis())?,
        None => u0.clone(),
    };
    let table = TrilinearTable::build(f.basis());
    let replicas = need(&cfg.experiment.replicas, "--replicas")?;
    let report = tilted_simulate(&f, &v0, &u0, &params, &icfg, &table, replicas, seed)?;
    let mut out = Outputs::default();
    out.json("tilt.json", &report)?;
    Ok(out)
}

fn ensemble_setup(cfg: &mut RunConfig) -> Result<(NoiseParams, IntegratorConfig, TrilinearTable, usize, u64), CliError> {
    fill_defaults(cfg);
    cfg.experiment.replicas.get_or_insert(DEFAULT_REPLICAS);
    validated(cfg)?;
    let params = noise_params(cfg, None)?;
    let icfg = integrator(cfg)?;
    let seed = need_seed(cfg)?;
    let table = TrilinearTable::build(&Basis::galerkin(params.m));
    Ok((params, icfg, table, need(&cfg.experiment.replicas, "--replicas")?, seed))
}

pub fn stationarity_cmd(cfg: &mut RunConfig) -> Result<Outputs, CliError> {
    let (params, icfg, table, replicas, seed) = ensemble_setup(cfg)?;
    let report = stationarity_test(&params, &icfg, &table, replicas, seed)?;
    let mut out = Outputs::default();
    out.json("stationarity.json", &report)?;
    Ok(out)
}

pub fn reversal_cmd(cfg: &mut RunConfig) -> Result<Outputs, CliError> {
    let d = ReversalSettings::default();
    cfg.experiment.pair_modes.get_or_insert(d.pair_modes);
    cfg.experiment.triples.get_or_insert(d.triples);
    let (params, icfg, table, replicas, seed) = ensemble_setup(cfg)?;
    let settings = ReversalSettings {
        pair_modes: need(&cfg.experiment.pair_modes, "--pair-modes")?,
        triples: need(&cfg.experiment.triples, "--triples")?,
    };
    let report = time_reversal_test(&params, &icfg, &table, &settings, replicas, seed)?;
    let mut out = Outputs::default();
    out.json("reversal.json", &report)?;
    Ok(out)
}

pub fn blowup_cmd(cfg: &mut RunConfig, write_paths: bool) -> Result<Outputs, CliError> {
    let e = cfg.experiment.clone();
    let (base, forcing) = match (&e.trajectory, &e.forcing) {
        (Some(tp), fp) => {
            let base = load_trajectory(tp)?;
            let f = match fp {
                Some(p) => load_forcing(p)?,
                None => Forcing::zeros(base.basis(), base.t0, base.dt, base.steps()),
            };
            cfg.noise.m.get_or_insert(base.basis().cutoff());
            cfg.integrator.dt.get_or_insert(base.dt);
            cfg.integrator.t_final.get_or_insert(base.t_final());
            (base, f)
        }
        (None, Some(_)) => return Err(CliError::Config("--forcing needs the base --trajectory it drives".into())),
        (None, None) => {
            validated(cfg)?;
            let m = need(&cfg.noise.m, "--m")?;
            let icfg = integrator(cfg)?;
            let b = Basis::galerkin(m);
            let steps = icfg.steps();
            let base = Trajectory::from_fn(&b, 0.0, icfg.dt, steps, |_| vec![0.0; b.len()])?;
            (base, Forcing::zeros(&b, 0.0, icfg.dt, steps))
        }
    };
    validated(cfg)?;
    let ns = need(&e.n, "--n")?;
    let tau = need(&e.tau_prime, "--tau-prime")?;
    let mut reports = Vec::with_capacity(ns.len());
    let mut out = Outputs::default();
    for &n in &ns {
        let (traj, f, report) = blowup_family(n, tau, &base, &forcing)?;
        if write_paths {
            out.with_writer(&format!("blowup_n{n}_trajectory.csv"), |w| write_trajectory(&traj, w))?;
            out.with_writer(&format!("blowup_n{n}_forcing.csv"), |w| write_fields(f.t0, f.dt, f.values(), w))?;
        }
        reports.push(report);
    }
    out.json("blowup.json", &reports)?;
    Ok(out)
}

/// Parses `lo:hi[:count]` into `count` log-spaced points from `lo` to `hi`.
pub fn parse_delta_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("delta grid '{s}' is not lo:hi[:count] with 0 < lo <= hi"));
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = match parts.get(2) {
        Some(c) => c.trim().parse().map_err(|_| bad())?,
        None => DEFAULT_GRID_POINTS,
    };
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
        return Err(bad());
    }
    if count == 1 || lo == hi {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| match i {
            0 => lo,
            i if i == count - 1 => hi,
            i => (a + (b - a) * i as f64 / (count - 1) as f64).exp(),
        })
        .collect())
}

pub fn traces_cmd(cfg: &mut RunConfig) -> Result<Outputs, CliError> {
    fill_defaults(cfg);
    validated(cfg)?;
    let m_max = need(&cfg.experiment.m_max, "--m-max")?;
    let beta = need(&cfg.noise.beta, "--beta")?;
    let grid = parse_delta_grid(&need(&cfg.experiment.delta_grid, "--delta-grid")?)?;
    let mut csv = String::from("m,delta,beta,trace\n");
    for m in 1..=m_max {
        for &delta in &grid {
            csv.push_str(&format!("{m},{delta},{beta},{}\n", trace_aq_with(m, delta, beta)));
        }
    }
    let mut out = Outputs::default();
    out.add("traces.csv", csv.into_bytes());
    Ok(out)
}

pub fn gaussmoment_cmd(cfg: &mut RunConfig) -> Result<Outputs, CliError> {
    fill_defaults(cfg);
    cfg.experiment.samples.get_or_insert(DEFAULT_SAMPLES);
    validated(cfg)?;
    let params = noise_params(cfg, None)?;
    let seed = need_seed(cfg)?;
    let eta = need(&cfg.experiment.eta, "--eta")?;
    let u0 = field_or_zero(&cfg.experiment.u0, &Basis::galerkin(params.m))?;
    let samples = need(&cfg.experiment.samples, "--samples")?;
    let report = gaussian_exp_moment(eta, &u0, &params, samples, seed)?;
    let mut out = Outputs::default();
    out.json("gaussmoment.json", &report)?;
    Ok(out)
}

fn rare_event_csv(rows: &[RareEventRow]) -> String {
    let mut s = String::from("epsilon,delta,m,eps_log_p,se,hits,replicas,tilted,upper_bound_only\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.epsilon, r.delta, r.m, r.eps_log_p, r.se, r.hits, r.replicas, r.tilted, r.upper_bound_only
        ));
    }
    s
}

pub fn rareevent_cmd(cfg: &mut RunConfig) -> Result<Outputs, CliError> {
    let spath = need(&cfg.experiment.schedule, "--schedule")?;
    let schedule = with_path(&spath, ScalingSchedule::from_csv(open(&spath)?))?;
    let tilt = cfg.experiment.tilt.as_deref().map(load_forcing).transpose()?;
    if let Some(f) = &tilt {
        let t_end = f.t0 + f.dt * (f.len() - 1) as f64;
        cfg.integrator.dt.get_or_insert(f.dt);
        cfg.integrator.t_final.get_or_insert(t_end);
    }
    fill_defaults(cfg);
    cfg.experiment.replicas.get_or_insert(DEFAULT_REPLICAS);
    cfg.experiment.event.get_or_insert_with(|| "terminal-norm".into());
    validated(cfg)?;
    let icfg = integrator(cfg)?;
    let seed = need_seed(cfg)?;
    let beta = need(&cfg.noise.beta, "--beta")?;
    let event = EventKind::parse(&need(&cfg.experiment.event, "--event")?)?;
    let level = need(&cfg.experiment.level, "--level")?;
    let replicas = need(&cfg.experiment.replicas, "--replicas")?;
    let m_top = schedule.entries().iter().map(|e| e.2).max().unwrap_or(1);
    let u0 = field_or_zero(&cfg.experiment.u0, &Basis::galerkin(m_top))?;
    let hit = move |t: &Trajectory| event.hit(t, level);
    let rows = rare_event_estimate(&hit, &u0, &schedule, beta, &icfg, tilt.as_ref(), replicas, seed)?;
    let mut out = Outputs::default();
    out.add("rareevent.csv", rare_event_csv(&rows).into_bytes());
    out.json("rareevent.json", &rows)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_grid_is_log_spaced() {
        let g = parse_delta_grid("1e-3:1e-1:3").unwrap();
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[2], 1e-1);
        assert!((g[1] - 1e-2).abs() < 1e-15);
        assert_eq!(parse_delta_grid("1e-3:1e-1").unwrap().len(), DEFAULT_GRID_POINTS);
        assert_eq!(parse_delta_grid("0.5:0.5").unwrap(), vec![0.5]);
        for bad in ["", "1", "0:1", "1:0.5", "a:b", "1e-3:1e-1:0", "1:2:3:4"] {
            assert!(parse_delta_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn events() {
        let b = Basis::galerkin(1);
        let traj = Trajectory::from_fn(&b, 0.0, 0.1, 2, |t| {
            let mut v = vec![0.0; b.len()];
            v[5] = [0.0, 2.0, 1.0][(t / 0.1).round() as usize];
            v
        })
        .unwrap();
        assert!(EventKind::TerminalNorm.hit(&traj, 1.0));
        assert!(!EventKind::TerminalNorm.hit(&traj, 1.01));
        assert!(EventKind::PeakEnergy.hit(&traj, 2.0));
        assert!(!EventKind::PeakEnergy.hit(&traj, 2.01));
        assert!(EventKind::parse("nope").is_err());
    }
}

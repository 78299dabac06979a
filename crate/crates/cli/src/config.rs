//! Run configuration: TOML sections of `key = value` pairs, overlaid by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use llns_core::dynamics::Scheme;
use llns_core::noise::MIN_BETA;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub beta: Option<f64>,
    pub m: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    pub scheme: Option<Scheme>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub replicas: Option<usize>,
    pub samples: Option<usize>,
    pub eta: Option<f64>,
    pub n: Option<Vec<usize>>,
    pub tau_prime: Option<f64>,
    pub m_max: Option<usize>,
    pub delta_grid: Option<String>,
    pub event: Option<String>,
    pub level: Option<f64>,
    pub pair_modes: Option<usize>,
    pub triples: Option<usize>,
    pub initial: Option<PathBuf>,
    pub forcing: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub u0: Option<PathBuf>,
    pub v0: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub tilt: Option<PathBuf>,
}

/// Parameters of one run. Every field is optional so that a file and the
/// command line can each supply part of it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

macro_rules! overlay {
    ($dst:expr, $src:expr; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    /// Values set in `flags` replace those in `self`.
    pub fn overlay(mut self, flags: &RunConfig) -> Self {
        overlay!(self.noise, flags.noise; epsilon, delta, beta, m);
        overlay!(self.integrator, flags.integrator; dt, t_final, scheme);
        overlay!(self.run, flags.run; seed, output_dir);
        overlay!(self.experiment, flags.experiment;
            replicas, samples, eta, n, tau_prime, m_max, delta_grid, event, level, pair_modes, triples,
            initial, forcing, trajectory, u0, v0, schedule, tilt);
        self
    }
}

/// Problems with a configuration, each naming the violated constraint. Empty
/// when the configuration is usable.
pub fn validate_config(cfg: &RunConfig) -> Vec<String> {
    let mut out = Vec::new();
    let n = &cfg.noise;
    if let Some(beta) = n.beta {
        if !(beta > MIN_BETA) {
            out.push(format!(
                "beta = {beta} violates beta > 5/4, which keeps Tr[A Q_delta] finite for delta > 0"
            ));
        }
    }
    if let Some(eps) = n.epsilon {
        if !(eps >= 0.0 && eps.is_finite()) {
            out.push(format!("epsilon = {eps} must be a finite noise intensity >= 0"));
        }
    }
    if let Some(delta) = n.delta {
        if !(delta >= 0.0 && delta.is_finite()) {
            out.push(format!("delta = {delta} must be >= 0"));
        }
        if delta == 0.0 && n.m.is_none() {
            out.push("delta = 0 needs a finite Galerkin cutoff m: unregularised noise has infinite trace".into());
        }
    }
    if n.m == Some(0) {
        out.push("m must be at least 1".into());
    }
    let i = &cfg.integrator;
    if let Some(dt) = i.dt {
        if !(dt > 0.0) {
            out.push(format!("dt = {dt} must be positive"));
        }
        if let Some(t) = i.t_final {
            if dt >= t {
                out.push(format!("dt = {dt} must be smaller than T = {t}"));
            }
        }
    }
    if let Some(t) = i.t_final {
        if !(t > 0.0) {
            out.push(format!("T = {t} must be positive"));
        }
    }
    let e = &cfg.experiment;
    if let Some(eta) = e.eta {
        if !(0.0..1.0).contains(&eta) {
            out.push(format!(
                "eta = {eta} must lie in [0, 1): exp(eta |U(0)|^2 / eps) is not integrable otherwise"
            ));
        }
    }
    if e.replicas == Some(0) {
        out.push("replicas must be at least 1".into());
    }
    if e.samples == Some(0) {
        out.push("samples must be at least 1".into());
    }
    if let Some(ns) = &e.n {
        if ns.is_empty() {
            out.push("n must list at least one frequency".into());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_overlays_flags() {
        let file = RunConfig::from_toml(
            "[noise]\nepsilon = 0.1\ndelta = 0.0\nm = 2\n\n[integrator]\nT = 1.0\ndt = 1e-3\nscheme = \"semi_implicit_euler\"\n\n[run]\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(file.noise.m, Some(2));
        assert_eq!(file.integrator.scheme, Some(Scheme::SemiImplicitEuler));
        let mut flags = RunConfig::default();
        flags.noise.epsilon = Some(0.5);
        flags.run.seed = Some(9);
        let merged = file.overlay(&flags);
        assert_eq!(merged.noise.epsilon, Some(0.5));
        assert_eq!(merged.noise.delta, Some(0.0));
        assert_eq!(merged.run.seed, Some(9));
        assert_eq!(merged.integrator.t_final, Some(1.0));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_toml("[noise]\nepsilon = 1\ngamma = 2\n").is_err());
        assert!(RunConfig::from_toml("[other]\nx = 1\n").is_err());
    }

    #[test]
    fn diagnostics() {
        let mut c = RunConfig::default();
        assert!(validate_config(&c).is_empty());
        c.noise.beta = Some(1.0);
        let d = validate_config(&c);
        assert_eq!(d.len(), 1);
        assert!(d[0].contains("beta > 5/4"));

        let mut c = RunConfig::default();
        c.integrator.dt = Some(2.0);
        c.integrator.t_final = Some(1.0);
        assert_eq!(validate_config(&c).len(), 1);

        let mut c = RunConfig::default();
        c.noise.delta = Some(0.0);
        assert!(validate_config(&c)[0].contains("cutoff m"));
        c.noise.m = Some(2);
        assert!(validate_config(&c).is_empty());

        let mut c = RunConfig::default();
        c.experiment.eta = Some(1.0);
        assert!(validate_config(&c)[0].contains("eta"));
    }
}

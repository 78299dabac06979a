use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fold_replicas, sample_gaussian_initial};
use crate::basis::{SpectralField, TrilinearTable};
use crate::dynamics::{simulate, trapezoid_weights, Forcing, IntegratorConfig, Propagator, Trajectory};
use crate::error::{Error, Result};
use crate::noise::{replica_rng, NoiseParams};
use crate::stats::{Estimate, Moments};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltReport {
    pub epsilon: f64,
    /// `1/2 int sum sigma^2 f^2 / lambda`: the cost of the applied drift `sigma f`.
    pub control_cost: f64,
    /// `1/2 int sum f^2 / lambda`: the Cameron-Martin cost of the tilt. The noise
    /// carries the same `sigma`, so it cancels.
    pub girsanov_cost: f64,
    /// Relative entropy of the tilted initial law, `sum (v0 - u0)^2 / (eps sigma^2)`.
    pub initial_entropy: f64,
    /// Exact relative entropy of the tilted chain with respect to the untilted one.
    pub entropy_estimate: f64,
    /// Monte Carlo mean of the log-likelihood ratio; estimates `entropy_estimate`.
    pub entropy_mc: Estimate,
    /// `L^2_t H` distance from the ensemble mean path to the skeleton target.
    pub terminal_distance: f64,
    /// Root mean square `L^2_t H` distance of single replicas to the target.
    pub rms_distance: Estimate,
    pub replicas: usize,
    pub seed: u64,
}

/// Simulates the SDE with added drift `sigma f` from the initial law
/// `G(v0, eps sigma^2 / 2)` and tracks the log-likelihood ratio against the
/// untilted process started from `G(u0, eps sigma^2 / 2)`.
pub struct TiltSampler<'a> {
    params: NoiseParams,
    cfg: IntegratorConfig,
    table: &'a TrilinearTable,
    drift: Forcing,
    u0: SpectralField,
    v0: SpectralField,
    /// `gamma sigma fbar` for each step.
    shift: Vec<Vec<f64>>,
    prop: Propagator,
    init_var: Vec<f64>,
}

impl<'a> TiltSampler<'a> {
    pub fn new(
        f: &Forcing,
        v0: &SpectralField,
        u0: &SpectralField,
        params: &NoiseParams,
        cfg: &IntegratorConfig,
        table: &'a TrilinearTable,
    ) -> Result<Self> {
        if !(params.epsilon > 0.0) {
            return Err(Error::InvalidParameter("tilting needs epsilon > 0".into()));
        }
        cfg.validate()?;
        let basis = table.basis();
        v0.check_compatible(u0)?;
        v0.check_compatible(&f.values()[0])?;
        if f.len() != cfg.steps() + 1 || (f.dt - cfg.dt).abs() > 1e-12 * cfg.dt {
            return Err(Error::GridMismatch(format!(
                "tilt forcing has {} nodes at dt={}, integrator needs {} at dt={}",
                f.len(),
                f.dt,
                cfg.steps() + 1,
                cfg.dt
            )));
        }
        let sig = params.sigmas(basis);
        let values = f
            .values()
            .iter()
            .map(|v| {
                let c = v.coeffs().iter().zip(&sig).map(|(c, s)| c * s).collect();
                SpectralField::from_coeffs(basis, c)
            })
            .collect::<Result<_>>()?;
        let drift = Forcing::new(f.t0, f.dt, values)?;
        let prop = Propagator::new(basis, params, cfg.scheme, cfg.dt);
        let shift: Vec<Vec<f64>> = drift
            .values()
            .windows(2)
            .map(|w| {
                (0..basis.len())
                    .map(|j| prop.gamma[j] * 0.5 * (w[0].coeffs()[j] + w[1].coeffs()[j]))
                    .collect()
            })
            .collect();
        for s in &shift {
            if let Some(j) = (0..s.len()).find(|&j| s[j] != 0.0 && prop.noise_std[j] == 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "tilt drives mode {} which carries no noise",
                    basis.mode(j)
                )));
            }
        }
        let init_var: Vec<f64> = sig.iter().map(|s| params.epsilon * s * s).collect();
        Ok(TiltSampler {
            params: *params,
            cfg: cfg.recording_noise(),
            table,
            drift,
            u0: u0.clone(),
            v0: v0.clone(),
            shift,
            prop,
            init_var,
        })
    }

    /// The applied drift `sigma f`.
    pub fn drift(&self) -> &Forcing {
        &self.drift
    }

    /// Relative entropy of the initial laws.
    pub fn initial_entropy(&self) -> f64 {
        kl_shift(self.v0.coeffs(), self.u0.coeffs(), &self.init_var)
    }

    /// Exact relative entropy of the tilted chain: the initial part plus
    /// `sum m^2 / (2 s^2)` over steps and modes.
    pub fn entropy(&self) -> f64 {
        let dynamic: f64 = self
            .shift
            .iter()
            .map(|m| {
                m.iter()
                    .zip(&self.prop.noise_std)
                    .filter(|(_, s)| **s > 0.0)
                    .map(|(m, s)| 0.5 * (m / s).powi(2))
                    .sum::<f64>()
            })
            .sum();
        self.initial_entropy() + dynamic
    }

    /// One tilted path and its log-likelihood ratio `log dQ/dP`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Trajectory, f64)> {
        let x = sample_gaussian_initial(&self.v0, &self.params, rng);
        let mut llr = 0.0;
        for j in 0..x.len() {
            if self.init_var[j] > 0.0 {
                let (a, b) = (x.coeffs()[j] - self.u0.coeffs()[j], x.coeffs()[j] - self.v0.coeffs()[j]);
                llr += (a * a - b * b) / self.init_var[j];
            }
        }
        let traj = simulate(&x, &self.params, &self.cfg, self.table, Some(&self.drift), rng)?;
        let log = traj.noise_log.as_ref().ok_or(Error::MissingNoiseLog)?;
        for (eta, m) in log.iter().zip(&self.shift) {
            for ((e, m), s) in eta.coeffs().iter().zip(m).zip(&self.prop.noise_std) {
                if *s > 0.0 {
                    llr += (m * e + 0.5 * m * m) / (s * s);
                }
            }
        }
        Ok((traj, llr))
    }
}

fn kl_shift(a: &[f64], b: &[f64], var: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(var)
        .filter(|(_, v)| **v > 0.0)
        .map(|((a, b), v)| (a - b).powi(2) / v)
        .sum()
}

/// Tilted ensemble with entropy accounting and distance to the skeleton target,
/// the noiseless path from `v0` under the drift `sigma f`.
#[allow(clippy::too_many_arguments)]
pub fn tilted_simulate(
    f: &Forcing,
    v0: &SpectralField,
    u0: &SpectralField,
    params: &NoiseParams,
    cfg: &IntegratorConfig,
    table: &TrilinearTable,
    replicas: usize,
    seed: u64,
) -> Result<TiltReport> {
    let sampler = TiltSampler::new(f, v0, u0, params, cfg, table)?;
    let mut rng = replica_rng(seed, u64::MAX);
    let target = simulate(
        v0,
        &params.with_epsilon(0.0),
        cfg,
        table,
        Some(sampler.drift()),
        &mut rng,
    )?;
    let nodes = target.states.len();
    let n = v0.len();
    let w = trapezoid_weights(nodes);
    let mut sum = vec![0.0; nodes * n];
    let mut sq = Moments::new();
    let mut llr = Moments::new();
    fold_replicas(
        replicas,
        |r| {
            let mut rng = replica_rng(seed, r as u64);
            let (traj, l) = sampler.sample(&mut rng)?;
            let d: f64 = traj
                .states
                .iter()
                .zip(&target.states)
                .zip(&w)
                .map(|((u, v), w)| {
                    w * u.coeffs().iter().zip(v.coeffs()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
                * cfg.dt;
            Ok((traj, d, l))
        },
        |_, (traj, d, l)| {
            for (i, u) in traj.states.iter().enumerate() {
                for (s, c) in sum[i * n..(i + 1) * n].iter_mut().zip(u.coeffs()) {
                    *s += c;
                }
            }
            sq.push(d);
            llr.push(l);
        },
    )?;
    let scale = 1.0 / replicas.max(1) as f64;
    let mean_dist: f64 = target
        .states
        .iter()
        .enumerate()
        .map(|(i, v)| {
            w[i] * sum[i * n..(i + 1) * n]
                .iter()
                .zip(v.coeffs())
                .map(|(s, b)| (s * scale - b).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        * cfg.dt;
    let rms = sq.mean.sqrt();
    let sig = params.sigmas(table.basis());
    Ok(TiltReport {
        epsilon: params.epsilon,
        control_cost: f.weighted_cost(&sig),
        girsanov_cost: f.cost(),
        initial_entropy: sampler.initial_entropy(),
        entropy_estimate: sampler.entropy(),
        entropy_mc: Estimate { value: llr.mean, se: llr.std_error() },
        terminal_distance: mean_dist.sqrt(),
        rms_distance: Estimate {
            value: rms,
            se: if rms > 0.0 { sq.std_error() / (2.0 * rms) } else { 0.0 },
        },
        replicas,
        seed,
    })
}

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{fold_replicas, transfer, TiltSampler};
use crate::basis::{Basis, SpectralField, TrilinearTable};
use crate::dynamics::{Forcing, IntegratorConfig, Trajectory};
use crate::error::Result;
use crate::noise::{replica_rng, ScalingSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RareEventRow {
    pub epsilon: f64,
    pub delta: f64,
    pub m: usize,
    /// `eps log p`; with no hits this is the upper bound `eps log(3 / N)`.
    pub eps_log_p: f64,
    /// Delta-method standard error of `eps_log_p` (zero for an upper bound).
    pub se: f64,
    pub hits: usize,
    pub replicas: usize,
    pub tilted: bool,
    pub upper_bound_only: bool,
}

/// Estimates `P(event)` under the Galerkin SDE from `G(u0, eps Q_delta / 2)` for
/// every entry of the schedule.
///
/// Without a tilt this is the plain hit frequency. With a tilt `f` the paths
/// are drawn with the drift `sigma f` and reweighted by the likelihood ratio;
/// the estimate is self-normalized. `u0` and `f` are transferred onto each
/// entry's Galerkin set.
#[allow(clippy::too_many_arguments)]
pub fn rare_event_estimate(
    event: &(dyn Fn(&Trajectory) -> bool + Sync),
    u0: &SpectralField,
    schedule: &ScalingSchedule,
    beta: f64,
    cfg: &IntegratorConfig,
    tilt: Option<&Forcing>,
    replicas: usize,
    seed: u64,
) -> Result<Vec<RareEventRow>> {
    let mut tables: HashMap<usize, TrilinearTable> = HashMap::new();
    let mut rows = Vec::new();
    for (k, params) in schedule.params(beta)?.into_iter().enumerate() {
        let table = tables
            .entry(params.m)
            .or_insert_with(|| TrilinearTable::build(&Basis::galerkin(params.m)));
        let basis: &Arc<Basis> = table.basis();
        let u = transfer(u0, basis);
        let f = match tilt {
            Some(f) => Forcing::new(f.t0, f.dt, f.values().iter().map(|v| transfer(v, basis)).collect())?,
            None => Forcing::zeros(basis, 0.0, cfg.dt, cfg.steps()),
        };
        let sampler = TiltSampler::new(&f, &u, &u, &params, cfg, table)?;
        let mut logs = Vec::with_capacity(replicas);
        let offset = (k * replicas) as u64;
        fold_replicas(
            replicas,
            |r| {
                let mut rng = replica_rng(seed, offset + r as u64);
                let (traj, llr) = sampler.sample(&mut rng)?;
                Ok((event(&traj), -llr))
            },
            |_, x| logs.push(x),
        )?;
        rows.push(summarize(params.epsilon, params.delta, params.m, &logs, tilt.is_some()));
    }
    Ok(rows)
}

/// `logs` holds `(hit, log w)` with `w = dP/dQ`.
fn summarize(epsilon: f64, delta: f64, m: usize, logs: &[(bool, f64)], tilted: bool) -> RareEventRow {
    let n = logs.len();
    let hits = logs.iter().filter(|(h, _)| *h).count();
    let row = |eps_log_p, se, upper_bound_only| RareEventRow {
        epsilon,
        delta,
        m,
        eps_log_p,
        se,
        hits,
        replicas: n,
        tilted,
        upper_bound_only,
    };
    if hits == 0 {
        return row(epsilon * (3.0 / n.max(1) as f64).ln(), 0.0, true);
    }
    let shift = logs.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|(_, l)| (l - shift).exp()).collect();
    let a: Vec<f64> = logs.iter().zip(&w).map(|((h, _), w)| if *h { *w } else { 0.0 }).collect();
    let (sa, sb): (f64, f64) = (a.iter().sum(), w.iter().sum());
    let p = sa / sb;
    // ratio estimator: Var(p) ~ sum (a_i - p w_i)^2 / (sum w)^2
    let var: f64 = a.iter().zip(&w).map(|(a, w)| (a - p * w).powi(2)).sum::<f64>() / (sb * sb);
    row(epsilon * p.ln(), epsilon * var.sqrt() / p, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{ModeIndex, Parity};
    use crate::noise::NoiseParams;

    #[test]
    fn certain_event_has_zero_log_probability() {
        let b = Basis::galerkin(1);
        let u0 = SpectralField::zeros(&b);
        let s = ScalingSchedule::new(vec![(0.5, 0.0, 1), (0.1, 0.0, 1)]).unwrap();
        let cfg = IntegratorConfig::new(1e-2, 0.05).unwrap();
        let rows = rare_event_estimate(&|_| true, &u0, &s, 1.5, &cfg, None, 50, 1).unwrap();
        for r in rows {
            assert_eq!(r.eps_log_p, 0.0);
            assert_eq!(r.se, 0.0);
            assert_eq!(r.hits, 50);
        }
    }

    #[test]
    fn impossible_event_is_upper_bound() {
        let b = Basis::galerkin(1);
        let u0 = SpectralField::zeros(&b);
        let s = ScalingSchedule::new(vec![(0.5, 0.0, 1)]).unwrap();
        let cfg = IntegratorConfig::new(1e-2, 0.05).unwrap();
        let rows = rare_event_estimate(&|_| false, &u0, &s, 1.5, &cfg, None, 30, 1).unwrap();
        assert!(rows[0].upper_bound_only);
        assert!((rows[0].eps_log_p - 0.5 * 0.1f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn direct_estimate_matches_binomial() {
        let logs: Vec<(bool, f64)> = (0..100).map(|i| (i % 4 == 0, 0.0)).collect();
        let r = summarize(1.0, 0.0, 1, &logs, false);
        assert!((r.eps_log_p - 0.25f64.ln()).abs() < 1e-14);
        let se_p = (0.25 * 0.75f64 / 100.0).sqrt();
        assert!((r.se - se_p / 0.25).abs() < 1e-12);
    }

    #[test]
    fn tilt_reduces_variance_for_event_near_skeleton() {
        let b = Basis::galerkin(1);
        let table = TrilinearTable::build(&b);
        let cfg = IntegratorConfig::new(1e-3, 0.1).unwrap();
        let mode = ModeIndex::wave([1, 0, 0], 0, Parity::Cos);
        let (j, lam) = (b.position(&mode).unwrap(), mode.eigenvalue());
        // adjoint profile: the cheapest way to reach a level at time T
        let f = Forcing::from_fn(&b, 0.0, cfg.dt, cfg.steps(), |t| {
            let mut c = vec![0.0; b.len()];
            c[j] = 40.0 * (-lam * (0.1 - t)).exp();
            c
        })
        .unwrap();
        let u0 = SpectralField::zeros(&b);
        let params = NoiseParams::new(0.1, 0.0, 1.5, 1).unwrap();
        let target = crate::dynamics::simulate(
            &u0,
            &params.with_epsilon(0.0),
            &cfg,
            &table,
            Some(&f),
            &mut replica_rng(0, 0),
        )
        .unwrap()
        .last()
        .coeffs()[j];
        let event = move |t: &Trajectory| t.last().coeffs()[j] > target;
        let s = ScalingSchedule::new(vec![(0.1, 0.0, 1)]).unwrap();
        let plain = rare_event_estimate(&event, &u0, &s, 1.5, &cfg, None, 4000, 3).unwrap();
        let tilted = rare_event_estimate(&event, &u0, &s, 1.5, &cfg, Some(&f), 4000, 3).unwrap();
        assert!(plain[0].hits > 0 && tilted[0].hits > 1000);
        assert!(tilted[0].se < plain[0].se, "{:?} {:?}", plain[0], tilted[0]);
        let z = (tilted[0].eps_log_p - plain[0].eps_log_p) / plain[0].se.hypot(tilted[0].se);
        assert!(z.abs() < 4.0, "{:?} {:?}", plain[0], tilted[0]);
    }
}

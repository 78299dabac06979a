use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{require_white, sample_gaussian_initial};
use crate::basis::{SpectralField, TrilinearTable};
use crate::dynamics::{simulate, IntegratorConfig};
use crate::error::{Error, Result};
use crate::noise::{replica_rng, NoiseParams};
use crate::stats::Moments;

/// Lag pairs `(t1, t2)` as fractions of `T`.
pub const LAG_PAIRS: [(f64, f64); 2] = [(0.2, 0.8), (0.4, 0.6)];
pub const REVERSAL_Z: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReversalSettings {
    /// Second moments use all unordered pairs among the first `pair_modes` modes.
    pub pair_modes: usize,
    /// Number of third-moment triples tested per lag pair.
    pub triples: usize,
}

impl Default for ReversalSettings {
    fn default() -> Self {
        ReversalSettings {
            pair_modes: 15,
            triples: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleZ {
    pub modes: [usize; 3],
    pub t1: f64,
    pub t2: f64,
    pub z: f64,
    pub control_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReversalReport {
    pub epsilon: f64,
    pub m: usize,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    pub replicas: usize,
    pub seed: u64,
    pub second_tests: usize,
    pub second_max_abs_z: f64,
    pub third: Vec<TripleZ>,
    pub third_max_abs_z: f64,
    /// Largest third-moment z-score when the reversal is not negated.
    pub control_max_abs_z: f64,
    pub max_abs_z: f64,
    pub pass: bool,
    pub control_detects: bool,
}

fn lag_index(frac: f64, steps: usize) -> usize {
    (frac * steps as f64).round() as usize
}

/// Triples `(a, b, c)`, `a <= b`, ordered by the leading-order size of
/// `E[c_a c_b(t) c_c(t + tau)]` in the stationary state.
fn rank_triples(table: &TrilinearTable, tau: f64, count: usize) -> Vec<[usize; 3]> {
    let lam = table.basis().eigenvalues();
    let mut sym: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for &(a, b, c, v) in table.entries() {
        let (a, b) = (a.min(b) as usize, a.max(b) as usize);
        *sym.entry((a, b, c as usize)).or_default() += v;
    }
    let mut scored: Vec<(f64, [usize; 3])> = sym
        .into_iter()
        .filter(|(_, v)| v.abs() > 1e-12)
        .map(|((a, b, c), v)| {
            let (s, r) = (lam[a] + lam[b], lam[c]);
            let memory = if (s - r).abs() < 1e-9 {
                tau * (-r * tau).exp()
            } else {
                ((-r * tau).exp() - (-s * tau).exp()) / (s - r)
            };
            (v.abs() * memory, [a, b, c])
        })
        .collect();
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    // (a, b, c) and (a, c, b) are tied by symmetry; keep one of each set
    let mut seen = std::collections::BTreeSet::new();
    scored
        .into_iter()
        .filter(|(_, t)| {
            let mut key = *t;
            key.sort_unstable();
            seen.insert(key)
        })
        .take(count)
        .map(|(_, t)| t)
        .collect()
}

/// Compares forward statistics with those of `-u(T - t)` on replicas started
/// from the stationary law. Every test is a paired per-replica difference, so
/// the z-scores account for the correlation between the two ensembles.
pub fn time_reversal_test(
    params: &NoiseParams,
    cfg: &IntegratorConfig,
    table: &TrilinearTable,
    settings: &ReversalSettings,
    replicas: usize,
    seed: u64,
) -> Result<ReversalReport> {
    require_white(params)?;
    let basis = table.basis();
    let steps = cfg.steps();
    let pair_modes = settings.pair_modes.min(basis.len());
    let lags: Vec<(usize, usize)> = LAG_PAIRS
        .iter()
        .map(|&(a, b)| (lag_index(a, steps), lag_index(b, steps)))
        .collect();
    if lags.iter().any(|&(a, b)| a >= b || b > steps) {
        return Err(Error::InvalidParameter(format!(
            "T/dt = {steps} steps is too coarse for the lag pairs"
        )));
    }
    let mut nodes: Vec<usize> = lags.iter().flat_map(|&(a, b)| [a, b, steps - a, steps - b]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let slot = |i: usize| nodes.binary_search(&i).expect("node recorded");

    let triples: Vec<Vec<[usize; 3]>> = lags
        .iter()
        .map(|&(a, b)| rank_triples(table, (b - a) as f64 * cfg.dt, settings.triples))
        .collect();

    let zero = SpectralField::zeros(basis);
    let snaps: Vec<Vec<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r as u64);
            let u0 = sample_gaussian_initial(&zero, params, &mut rng);
            let traj = simulate(&u0, params, cfg, table, None, &mut rng)?;
            Ok(nodes.iter().map(|&i| traj.states[i].coeffs().to_vec()).collect())
        })
        .collect::<Result<_>>()?;

    let paired = |f: &dyn Fn(&[Vec<f64>]) -> f64| -> f64 {
        let m: Moments = snaps.iter().map(|s| f(s)).collect();
        m.z_score(0.0)
    };

    let mut second_max = 0.0f64;
    let mut second_tests = 0;
    let mut third = Vec::new();
    for (li, &(i1, i2)) in lags.iter().enumerate() {
        let (f1, f2, r1, r2) = (slot(i1), slot(i2), slot(steps - i1), slot(steps - i2));
        for a in 0..pair_modes {
            for b in a + 1..pair_modes {
                let z = paired(&|s| s[f1][a] * s[f2][b] - s[r1][a] * s[r2][b]);
                second_max = second_max.max(z.abs());
                second_tests += 1;
            }
        }
        for &[a, b, c] in &triples[li] {
            let fwd = |s: &[Vec<f64>]| s[f1][a] * s[f1][b] * s[f2][c];
            let rev = |s: &[Vec<f64>]| s[r1][a] * s[r1][b] * s[r2][c];
            // Negating a cubic flips its sign.
            let z = paired(&|s| fwd(s) + rev(s));
            let control_z = paired(&|s| fwd(s) - rev(s));
            third.push(TripleZ {
                modes: [a, b, c],
                t1: i1 as f64 * cfg.dt,
                t2: i2 as f64 * cfg.dt,
                z,
                control_z,
            });
        }
    }
    let third_max = third.iter().fold(0.0f64, |m, t| m.max(t.z.abs()));
    let control_max = third.iter().fold(0.0f64, |m, t| m.max(t.control_z.abs()));
    let max_abs_z = second_max.max(third_max);
    Ok(ReversalReport {
        epsilon: params.epsilon,
        m: basis.cutoff(),
        t_final: cfg.t_final,
        dt: cfg.dt,
        replicas,
        seed,
        second_tests,
        second_max_abs_z: second_max,
        third,
        third_max_abs_z: third_max,
        control_max_abs_z: control_max,
        max_abs_z,
        pass: max_abs_z < REVERSAL_Z,
        control_detects: control_max > REVERSAL_Z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Basis;

    #[test]
    fn ranked_triples_interact() {
        let b = Basis::galerkin(1);
        let table = TrilinearTable::build(&b);
        let t = rank_triples(&table, 0.01, 5);
        assert_eq!(t.len(), 5);
        for [a, b, c] in t {
            assert!(a <= b);
            assert!((table.get(a, b, c) + table.get(b, a, c)).abs() > 1e-12);
        }
    }

    #[test]
    fn linear_reduction_is_reversible() {
        let b = Basis::galerkin(1);
        let table = TrilinearTable::build(&b);
        let p = NoiseParams::new(0.5, 0.0, 1.5, 1).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 0.05).unwrap().linear_only();
        let r = time_reversal_test(&p, &cfg, &table, &ReversalSettings::default(), 2000, 11).unwrap();
        assert_eq!(r.second_tests, 2 * 105);
        // B_1 has only 6 distinct interacting triples
        assert_eq!(r.third.len(), 12);
        assert!(r.max_abs_z < 4.5, "{}", r.max_abs_z);
        assert!(r.control_max_abs_z < 4.5);
    }

    #[test]
    fn coarse_grid_rejected() {
        let b = Basis::galerkin(1);
        let table = TrilinearTable::build(&b);
        let p = NoiseParams::new(0.5, 0.0, 1.5, 1).unwrap();
        let cfg = IntegratorConfig::new(0.5, 1.0).unwrap();
        assert!(time_reversal_test(&p, &cfg, &table, &ReversalSettings::default(), 4, 1).is_err());
    }
}

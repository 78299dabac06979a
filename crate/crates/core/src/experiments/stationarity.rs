use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{require_white, sample_gaussian_initial};
use crate::basis::{SpectralField, TrilinearTable};
use crate::dynamics::{simulate, IntegratorConfig};
use crate::error::Result;
use crate::noise::{replica_rng, NoiseParams};
use crate::stats::{z_score, Estimate, Moments};

/// Thresholds used for the pass flag of the stationarity report.
pub const STATIONARITY_Z: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub epsilon: f64,
    pub m: usize,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Per-mode z-score of the mean of `c(T)` against 0.
    pub mean_z: Vec<f64>,
    /// Per-mode z-score of `E c(T)^2` against `eps / 2`.
    pub var_z: Vec<f64>,
    pub energy_initial: Estimate,
    pub energy_final: Estimate,
    /// z-score of the paired difference `|U(T)|^2 - |U(0)|^2`.
    pub energy_z: f64,
    pub cross_pairs: usize,
    pub cross_max_abs_z: f64,
    pub cross_fraction_beyond_3se: f64,
    pub max_abs_var_z: f64,
    pub max_abs_mean_z: f64,
    pub pass: bool,
}

/// Starts replicas from `G(0, eps I / 2)`, integrates to `T` and compares the
/// terminal moments with the initial law.
pub fn stationarity_test(
    params: &NoiseParams,
    cfg: &IntegratorConfig,
    table: &TrilinearTable,
    replicas: usize,
    seed: u64,
) -> Result<StationarityReport> {
    require_white(params)?;
    let basis = table.basis();
    let zero = SpectralField::zeros(basis);
    let ends: Vec<(Vec<f64>, Vec<f64>)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r as u64);
            let u0 = sample_gaussian_initial(&zero, params, &mut rng);
            let traj = simulate(&u0, params, cfg, table, None, &mut rng)?;
            Ok((u0.into_coeffs(), traj.last().coeffs().to_vec()))
        })
        .collect::<Result<_>>()?;

    let n = basis.len();
    let target = 0.5 * params.epsilon;
    let mut mean = vec![Moments::new(); n];
    let mut second = vec![Moments::new(); n];
    let (mut e0, mut e1, mut de) = (Moments::new(), Moments::new(), Moments::new());
    for (c0, c1) in &ends {
        for j in 0..n {
            mean[j].push(c1[j]);
            second[j].push(c1[j] * c1[j]);
        }
        let a: f64 = c0.iter().map(|c| c * c).sum();
        let b: f64 = c1.iter().map(|c| c * c).sum();
        e0.push(a);
        e1.push(b);
        de.push(b - a);
    }
    let mean_z: Vec<f64> = mean.iter().map(|m| m.z_score(0.0)).collect();
    let var_z: Vec<f64> = second.iter().map(|m| m.z_score(target)).collect();

    let mut cross_max = 0.0f64;
    let mut beyond = 0usize;
    let mut pairs = 0usize;
    for a in 0..n {
        for b in a + 1..n {
            let m: Moments = ends.iter().map(|(_, c)| c[a] * c[b]).collect();
            let z = m.z_score(0.0).abs();
            cross_max = cross_max.max(z);
            beyond += usize::from(z > 3.0);
            pairs += 1;
        }
    }
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let max_abs_var_z = max_abs(&var_z);
    let max_abs_mean_z = max_abs(&mean_z);
    Ok(StationarityReport {
        epsilon: params.epsilon,
        m: basis.cutoff(),
        t_final: cfg.t_final,
        dt: cfg.dt,
        replicas,
        seed,
        mean_z,
        var_z,
        energy_initial: Estimate { value: e0.mean, se: e0.std_error() },
        energy_final: Estimate { value: e1.mean, se: e1.std_error() },
        energy_z: z_score(de.mean, de.std_error()),
        cross_pairs: pairs,
        cross_max_abs_z: cross_max,
        cross_fraction_beyond_3se: if pairs == 0 { 0.0 } else { beyond as f64 / pairs as f64 },
        max_abs_var_z,
        max_abs_mean_z,
        pass: max_abs_var_z < STATIONARITY_Z && max_abs_mean_z < STATIONARITY_Z,
    })
}

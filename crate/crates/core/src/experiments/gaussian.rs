use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::SpectralField;
use crate::error::{Error, Result};
use crate::noise::{fill_normals, replica_rng, NoiseParams};
use crate::stats::Estimate;

/// Draws from `G(u0, eps Q_delta / 2)`: mode `z` is `N(u0_z, eps sigma_z^2 / 2)`.
pub fn sample_gaussian_initial<R: Rng + ?Sized>(
    u0: &SpectralField,
    params: &NoiseParams,
    rng: &mut R,
) -> SpectralField {
    let mut z = vec![0.0; u0.len()];
    fill_normals(rng, &mut z);
    let sig = params.sigmas(u0.basis());
    let c = u0
        .coeffs()
        .iter()
        .zip(&z)
        .zip(&sig)
        .map(|((m, z), s)| m + (0.5 * params.epsilon).sqrt() * s * z)
        .collect();
    SpectralField::from_coeffs(u0.basis(), c).expect("length matches basis")
}

/// `eps log E exp(eta X^2 / eps)` for `X ~ N(mu, eps sigma^2 / 2)`:
/// `-(eps/2) log(1 - eta sigma^2) + eta mu^2 / (1 - eta sigma^2)`.
pub fn mode_exp_moment(eta: f64, mu: f64, epsilon: f64, sigma: f64) -> Result<f64> {
    let q = eta * sigma * sigma;
    if q >= 1.0 {
        return Err(Error::NotIntegrable(q));
    }
    Ok(-0.5 * epsilon * (-q).ln_1p() + eta * mu * mu / (1.0 - q))
}

/// Closed form of `eps log E exp(eta |U|^2 / eps)` for `U ~ G(u0, eps Q_delta / 2)`.
pub fn exp_moment_closed_form(eta: f64, u0: &SpectralField, params: &NoiseParams) -> Result<f64> {
    let sig = params.sigmas(u0.basis());
    u0.coeffs()
        .iter()
        .zip(&sig)
        .map(|(&mu, &s)| mode_exp_moment(eta, mu, params.epsilon, s))
        .sum()
}

/// `eta (1 - eta)^{-2} |u0|^2 + C(eta) sum eps sigma^2` with `C(eta) = -log(1 - eta) / 2`.
pub fn exp_moment_bound(eta: f64, u0: &SpectralField, params: &NoiseParams) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::NotIntegrable(eta));
    }
    let a: f64 = u0.coeffs().iter().map(|c| c * c).sum();
    let trace: f64 = params
        .sigmas(u0.basis())
        .iter()
        .map(|s| params.epsilon * s * s)
        .sum();
    Ok(eta * a / ((1.0 - eta) * (1.0 - eta)) - 0.5 * (-eta).ln_1p() * trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub eta: f64,
    pub closed_form: f64,
    pub mc: Estimate,
    pub z: f64,
    pub bound: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Closed form and Monte Carlo estimate of `eps log E exp(eta |U(0)|^2 / eps)`.
///
/// The sample mean is accumulated in log space; the standard error on the
/// `eps log` scale comes from the delta method.
pub fn gaussian_exp_moment(
    eta: f64,
    u0: &SpectralField,
    params: &NoiseParams,
    samples: usize,
    seed: u64,
) -> Result<ExpMomentReport> {
    let closed_form = exp_moment_closed_form(eta, u0, params)?;
    let bound = exp_moment_bound(eta, u0, params)?;
    if !(params.epsilon > 0.0) {
        return Err(Error::InvalidParameter("Monte Carlo needs epsilon > 0".into()));
    }
    let logs: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r as u64);
            let u = sample_gaussian_initial(u0, params, &mut rng);
            eta * u.coeffs().iter().map(|c| c * c).sum::<f64>() / params.epsilon
        })
        .collect();
    let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: crate::stats::Moments = logs.iter().map(|l| (l - shift).exp()).collect();
    let value = params.epsilon * (shift + w.mean.ln());
    let se = params.epsilon * w.std_error() / w.mean;
    Ok(ExpMomentReport {
        eta,
        closed_form,
        mc: Estimate { value, se },
        z: crate::stats::z_score(value - closed_form, se),
        bound,
        samples,
        seed,
    })
}

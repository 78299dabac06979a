//! Rate functional `I = I_0 + J`, control recovery and related functionals.

mod duality;
mod penalty;

use serde::{Deserialize, Serialize};

use crate::basis::{homogeneous_dual_sq, SpectralField, TrilinearTable};
use crate::dynamics::{trapezoid_weights, Trajectory};
use crate::error::{Error, Result};

pub use crate::dynamics::Forcing;
pub use duality::{lambda_functional, riesz_optimal, RieszFit};
pub use penalty::{
    compactness_f, energy_excess, legendre_z, s_function, z_bound, CompactnessTerms,
};

/// Finite-difference time derivative: centered inside, one-sided at the ends.
pub(crate) fn time_derivative(traj: &Trajectory) -> Vec<Vec<f64>> {
    let n = traj.states.len();
    let dt = traj.dt;
    (0..n)
        .map(|i| {
            let (a, b, h) = if n == 1 {
                (0, 0, 1.0)
            } else if i == 0 {
                (1, 0, dt)
            } else if i == n - 1 {
                (n - 1, n - 2, dt)
            } else {
                (i + 1, i - 1, 2.0 * dt)
            };
            traj.states[a]
                .coeffs()
                .iter()
                .zip(traj.states[b].coeffs())
                .map(|(x, y)| (x - y) / h)
                .collect()
        })
        .collect()
}

/// Navier-Stokes residual along a path, including the constant-mode part.
#[derive(Clone, Debug)]
pub struct ResidualProfile {
    /// `du/dt + A u + B(u)` at every node, all modes.
    pub values: Vec<Vec<f64>>,
    /// Largest constant-mode residual and the node where it occurs.
    pub constant_max: f64,
    pub constant_node: usize,
    /// Scale of the wave residual, used for the relative tolerance.
    pub wave_max: f64,
}

impl ResidualProfile {
    pub fn is_finite_cost(&self) -> bool {
        self.constant_max <= CONSTANT_TOL * self.wave_max.max(1.0)
    }
}

/// Relative size below which constant-mode residuals count as zero.
pub const CONSTANT_TOL: f64 = 1e-9;

pub fn residual_profile(traj: &Trajectory, table: &TrilinearTable) -> Result<ResidualProfile> {
    if traj.states.len() < 2 {
        return Err(Error::InvalidParameter("residual needs at least two states".into()));
    }
    table.check(traj.initial())?;
    let basis = traj.basis();
    let lam = basis.eigenvalues();
    let deriv = time_derivative(traj);
    let mut nl = vec![0.0; basis.len()];
    let mut values = Vec::with_capacity(deriv.len());
    let (mut constant_max, mut constant_node, mut wave_max) = (0.0f64, 0, 0.0f64);
    for (i, (d, u)) in deriv.into_iter().zip(&traj.states).enumerate() {
        table.nonlinear_into(u.coeffs(), &mut nl);
        let r: Vec<f64> = d
            .iter()
            .zip(u.coeffs())
            .zip(lam)
            .zip(&nl)
            .map(|(((d, c), l), b)| d + l * c + b)
            .collect();
        for (z, v) in basis.modes().iter().zip(&r) {
            if z.is_constant() {
                if v.abs() > constant_max {
                    constant_max = v.abs();
                    constant_node = i;
                }
            } else {
                wave_max = wave_max.max(v.abs());
            }
        }
        values.push(r);
    }
    Ok(ResidualProfile {
        values,
        constant_max,
        constant_node,
        wave_max,
    })
}

/// Forcing `f = du/dt + A u + B(u)` that drives the path through the skeleton equation.
pub fn residual(traj: &Trajectory, table: &TrilinearTable) -> Result<Forcing> {
    let prof = residual_profile(traj, table)?;
    if !prof.is_finite_cost() {
        return Err(Error::InfiniteCost {
            node: prof.constant_node,
            magnitude: prof.constant_max,
        });
    }
    let basis = traj.basis();
    let values = prof
        .values
        .into_iter()
        .map(|mut r| {
            for (z, v) in basis.modes().iter().zip(r.iter_mut()) {
                if z.is_constant() {
                    *v = 0.0;
                }
            }
            SpectralField::from_coeffs(basis, r)
        })
        .collect::<Result<Vec<_>>>()?;
    Forcing::new(traj.t0, traj.dt, values)
}

/// `J(u) = 1/2 int sum_wave r^2 / lambda dt`; infinite when the constant modes move.
pub fn dynamic_cost(traj: &Trajectory, table: &TrilinearTable) -> Result<f64> {
    match residual(traj, table) {
        Ok(f) => Ok(f.cost()),
        Err(Error::InfiniteCost { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// `sum dt |du/dt|^2_{H^-1}` (homogeneous, trapezoid) from the same differences.
pub fn time_derivative_cost(traj: &Trajectory) -> f64 {
    let lam = traj.basis().eigenvalues();
    let w = trapezoid_weights(traj.states.len());
    time_derivative(traj)
        .iter()
        .zip(&w)
        .map(|(d, w)| w * traj.dt * homogeneous_dual_sq(d, lam))
        .sum()
}

/// Rate of the initial law.
pub trait InitialRate {
    fn evaluate(&self, v: &SpectralField) -> Result<f64>;
}

/// Gaussian initial data centred at `u0`: `I_0(v) = |v - u0|_H^2`.
#[derive(Clone, Debug)]
pub struct GaussianInitialRate {
    pub u0: SpectralField,
}

impl InitialRate for GaussianInitialRate {
    fn evaluate(&self, v: &SpectralField) -> Result<f64> {
        initial_rate(v, &self.u0)
    }
}

pub fn initial_rate(v: &SpectralField, u0: &SpectralField) -> Result<f64> {
    let d = v.sub(u0)?;
    Ok(crate::basis::dot(d.coeffs(), d.coeffs()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub initial: f64,
    pub dynamic: f64,
    pub total: f64,
    /// Homogeneous `H^-1` density of the residual at each node.
    pub profile: Vec<f64>,
}

pub fn total_rate(traj: &Trajectory, u0: &SpectralField, table: &TrilinearTable) -> Result<RateBreakdown> {
    total_rate_with(traj, &GaussianInitialRate { u0: u0.clone() }, table)
}

pub fn total_rate_with(
    traj: &Trajectory,
    initial: &dyn InitialRate,
    table: &TrilinearTable,
) -> Result<RateBreakdown> {
    let i0 = initial.evaluate(traj.initial())?;
    let (dynamic, profile) = match residual(traj, table) {
        Ok(f) => (f.cost(), f.density()),
        Err(Error::InfiniteCost { .. }) => (f64::INFINITY, Vec::new()),
        Err(e) => return Err(e),
    };
    Ok(RateBreakdown {
        initial: i0,
        dynamic,
        total: i0 + dynamic,
        profile,
    })
}

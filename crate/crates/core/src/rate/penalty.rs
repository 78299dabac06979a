use serde::{Deserialize, Serialize};

use crate::basis::{dot, NormKind, SpectralField};
use crate::dynamics::{dissipation, energy, trapezoid_weights, Trajectory};
use crate::error::{Error, Result};

/// Largest positive violation of the unforced energy inequality started from `ustar0`:
/// `max_t (1/2|u(t)|^2 + int_0^t |u|_V^2 - 1/2|u*_0|^2)^+`.
pub fn energy_excess(traj: &Trajectory, ustar0: &SpectralField) -> Result<f64> {
    traj.initial().check_compatible(ustar0)?;
    let e0 = energy(ustar0);
    let mut integral = 0.0;
    let mut best = 0.0f64;
    let mut prev = dissipation(traj.initial());
    for (i, u) in traj.states.iter().enumerate() {
        let d = dissipation(u);
        if i > 0 {
            integral += 0.5 * traj.dt * (prev + d);
        }
        prev = d;
        best = best.max(energy(u) + integral - e0);
    }
    Ok(best)
}

/// `Z(eta) <= eta (1 - eta)^{-2} |u0|^2` for `0 <= eta < 1`.
pub fn z_bound(eta: f64, u0: &SpectralField) -> Result<f64> {
    z_bound_sq(eta, dot(u0.coeffs(), u0.coeffs()))
}

fn z_bound_sq(eta: f64, a: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta must lie in [0, 1), got {eta}")));
    }
    Ok(eta * a / ((1.0 - eta) * (1.0 - eta)))
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Maximizes a unimodal function on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> (f64, f64) {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > rel_tol * (lo.abs() + hi.abs()).max(1e-300) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    let (fx, fl, fh) = (f(x), f(lo), f(hi));
    if fl >= fx && fl >= fh {
        (lo, fl)
    } else if fh >= fx {
        (hi, fh)
    } else {
        (x, fx)
    }
}

/// Legendre transform `Z*(x) = sup_{0 <= eta < 1} (eta x - Z(eta))` of the bound, with
/// `a = |u0|^2`.
pub fn legendre_z(x: f64, a: f64) -> f64 {
    if a == 0.0 {
        return x.max(0.0);
    }
    // the objective is concave in eta; its slope at 0 is x - a
    if x <= a {
        return 0.0;
    }
    let f = |eta: f64| eta * x - eta * a / ((1.0 - eta) * (1.0 - eta));
    golden_max(f, 0.0, 1.0 - 1e-15, 1e-12).1.max(0.0)
}

/// Energy-excess penalty `S(4 theta) = max_l min(Z*(l), theta^2/(2 l), Z*(|u0|^2 + theta))`.
pub fn s_function(excess: f64, u0: &SpectralField) -> Result<f64> {
    if !(excess >= 0.0 && excess.is_finite()) {
        return Err(Error::InvalidParameter(format!("excess must be finite and >= 0, got {excess}")));
    }
    if excess == 0.0 {
        return Ok(0.0);
    }
    let a = dot(u0.coeffs(), u0.coeffs());
    let theta = excess / 4.0;
    let cap = legendre_z(a + theta, a);
    let g = |l: f64| legendre_z(l, a).min(theta * theta / (2.0 * l)).min(cap);
    // the first two branches cross once (one increasing, one decreasing): scan a
    // log grid, then refine around the best node
    let (lo_exp, hi_exp, nodes) = (-12.0f64, 12.0f64, 481);
    let step = (hi_exp - lo_exp) / (nodes - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..nodes {
        let v = g(10f64.powf(lo_exp + i as f64 * step));
        if v > best.1 {
            best = (i, v);
        }
    }
    let lo = 10f64.powf(lo_exp + best.0.saturating_sub(1) as f64 * step);
    let hi = 10f64.powf(lo_exp + (best.0 + 1).min(nodes - 1) as f64 * step);
    let (_, refined) = golden_max(|t: f64| g(t.exp()), lo.ln(), hi.ln(), 1e-8);
    Ok(refined.max(best.1))
}

/// The three pieces of the compactness functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactnessTerms {
    /// `int |u|_V^2`
    pub l2_v: f64,
    /// `max |u|_H^2`
    pub linf_h: f64,
    /// Sobolev-Slobodeckij double sum in `H^{-gamma}`.
    pub seminorm: f64,
    /// `int |u|_{H^{-gamma}}^2`
    pub l2_neg: f64,
}

impl CompactnessTerms {
    pub fn total(&self) -> f64 {
        self.l2_v + self.linf_h + self.seminorm + self.l2_neg
    }
}

/// `F(u) = |u|^2_{L^2 V} + |u|^2_{L^inf H} + |u|^2_{W^{alpha,2} H^{-gamma}}`.
pub fn compactness_f(traj: &Trajectory, alpha: f64, gamma: f64) -> Result<CompactnessTerms> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    if !(gamma > 2.5) {
        return Err(Error::InvalidParameter(format!("gamma must exceed 5/2, got {gamma}")));
    }
    let lam = traj.basis().eigenvalues();
    let weight: Vec<f64> = lam.iter().map(|l| 1.0 / (1.0 + l.powf(gamma))).collect();
    let neg = |c: &[f64]| -> f64 { c.iter().zip(&weight).map(|(c, w)| w * c * c).sum() };
    let w = trapezoid_weights(traj.states.len());
    let dt = traj.dt;
    let mut terms = CompactnessTerms {
        l2_v: 0.0,
        linf_h: 0.0,
        seminorm: 0.0,
        l2_neg: 0.0,
    };
    for (u, w) in traj.states.iter().zip(&w) {
        terms.l2_v += w * dt * dissipation(u);
        terms.linf_h = terms.linf_h.max(u.norm_sq(NormKind::H)?);
        terms.l2_neg += w * dt * neg(u.coeffs());
    }
    let n = traj.states.len();
    let mut diff = vec![0.0; lam.len()];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (traj.states[i].coeffs(), traj.states[j].coeffs());
            for k in 0..diff.len() {
                diff[k] = a[k] - b[k];
            }
            let gap = (j - i) as f64 * dt;
            // ordered pairs (i, j) and (j, i) contribute equally
            terms.seminorm += 2.0 * dt * dt * neg(&diff) / gap.powf(1.0 + 2.0 * alpha);
        }
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Basis, ModeIndex, Parity};
    use std::f64::consts::PI;

    fn frozen(c: f64, steps: usize) -> Trajectory {
        let b = Basis::galerkin(1);
        let i = b.position(&ModeIndex::wave([1, 0, 0], 0, Parity::Cos)).unwrap();
        Trajectory::from_fn(&b, 0.0, 1.0 / steps as f64, steps, |_| {
            let mut v = vec![0.0; b.len()];
            v[i] = c;
            v
        })
        .unwrap()
    }

    #[test]
    fn excess_examples() {
        let traj = frozen(1.0, 100);
        let e = energy_excess(&traj, traj.initial()).unwrap();
        assert!((e - 4.0 * PI * PI).abs() < 1e-10);
        let e2 = energy_excess(&traj.scaled(2.0), traj.initial()).unwrap();
        assert!(e2 > e);
        let b = traj.basis().clone();
        let decay = Trajectory::from_fn(&b, 0.0, 1e-4, 1000, |t| {
            let mut v = vec![0.0; b.len()];
            v[3] = (-4.0 * PI * PI * t).exp();
            v
        })
        .unwrap();
        assert!(energy_excess(&decay, decay.initial()).unwrap() < 1e-4);
    }

    #[test]
    fn z_examples() {
        let b = Basis::galerkin(1);
        let u0 = SpectralField::single(&b, ModeIndex::constant(0), 1.0).unwrap();
        assert_eq!(z_bound(0.0, &u0).unwrap(), 0.0);
        assert!((z_bound(0.5, &u0).unwrap() - 2.0).abs() < 1e-15);
        assert!(z_bound(1.0, &u0).is_err());
    }

    #[test]
    fn legendre_against_dense_grid() {
        for &(x, a) in &[(2.0, 1.0), (5.0, 1.0), (30.0, 2.0), (0.5, 1.0)] {
            let dense = (0..200_000)
                .map(|i| i as f64 / 200_000.0)
                .map(|e| e * x - e * a / ((1.0 - e) * (1.0 - e)))
                .fold(0.0f64, f64::max);
            let v = legendre_z(x, a);
            assert!(v >= dense - 1e-9 && v <= dense + 1e-6 * (1.0 + dense), "{x} {a} {v} {dense}");
        }
    }

    #[test]
    fn s_is_zero_at_zero_and_monotone() {
        let b = Basis::galerkin(1);
        let u0 = SpectralField::single(&b, ModeIndex::wave([1, 0, 0], 0, Parity::Cos), 1.0).unwrap();
        assert_eq!(s_function(0.0, &u0).unwrap(), 0.0);
        let grid: Vec<f64> = (1..=100).map(|i| i as f64 * 0.1).collect();
        let s: Vec<f64> = grid.iter().map(|&e| s_function(e, &u0).unwrap()).collect();
        assert!(s.iter().all(|&v| v > 0.0));
        assert!(s.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn compactness_frozen_mode() {
        let traj = frozen(1.0, 50);
        let f = compactness_f(&traj, 0.25, 3.0).unwrap();
        let lam = 4.0 * PI * PI;
        assert!((f.l2_v - lam).abs() < 1e-10);
        assert_eq!(f.linf_h, 1.0);
        assert_eq!(f.seminorm, 0.0);
        assert!((f.l2_neg - 1.0 / (1.0 + lam.powi(3))).abs() < 1e-16);
        let g = compactness_f(&traj.scaled(3.0), 0.25, 3.0).unwrap();
        assert!((g.total() - 9.0 * f.total()).abs() < 1e-10 * f.total());
        assert!(compactness_f(&traj, 0.5, 3.0).is_err());
        assert!(compactness_f(&traj, 0.25, 2.5).is_err());
    }
}

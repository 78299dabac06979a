use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::transfer;
use crate::basis::{
    canonicalize, half_lattice, homogeneous_dual_sq, modes_of, polarization_vectors, Basis, ModeIndex,
    NormKind, Parity, SpectralField, TrilinearTable,
};
use crate::dynamics::{Forcing, Trajectory};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub n: usize,
    pub tau_prime: f64,
    /// `|v(tau' + 1/n)|_{H^1}`, `H^1` weight `1 + lambda`.
    pub h1_peak: f64,
    /// `int sum (f^(n) - f)^2 / lambda dt` over `[tau', T]`.
    pub extra_cost: f64,
    /// Closed-form cost of the pulse term alone, `(1 - e^{-8 pi^2 n}) / n`.
    pub pulse_cost: f64,
    /// Number of modes of the extended basis.
    pub modes: usize,
}

/// Amplitude of the high-frequency perturbation at time `t`, as a multiple of
/// `(0, sin(2 pi n x1), 0)`: `n^{-1/2} (e^{-l|t - tau' - 1/n|} - e^{-4 pi^2 n - l|t - tau'|})`
/// with `l = 4 pi^2 n^2`, and zero before `tau'`. The second term is returned
/// separately.
pub fn blowup_pulse(n: usize, tau_prime: f64, t: f64) -> (f64, f64) {
    if t < tau_prime {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let l = 4.0 * PI * PI * nf * nf;
    let a = nf.powf(-0.5);
    (
        a * (-l * (t - tau_prime - 1.0 / nf).abs()).exp(),
        a * (-4.0 * PI * PI * nf - l * (t - tau_prime)).exp(),
    )
}

struct Family {
    basis: Arc<Basis>,
    table: TrilinearTable,
    /// Coefficients of `(0, sin(2 pi n x1), 0)` in the extended basis.
    shape: Vec<(usize, f64)>,
    lambda_n: f64,
}

impl Family {
    fn new(m: usize, n: usize) -> Self {
        let ni = n as i32;
        let mut extra: Vec<_> = modes_of([ni, 0, 0]).to_vec();
        for k in half_lattice(m) {
            for s in [1, -1] {
                let (kc, _) = canonicalize([k[0] + s * ni, k[1], k[2]]);
                extra.extend(modes_of(kc));
            }
        }
        let basis = Basis::extended(m, extra);
        let table = TrilinearTable::build(&basis);
        // <(0, sin, 0), sqrt2 u sin> = u_y / sqrt2
        let pol = polarization_vectors([ni, 0, 0]);
        let shape = modes_of([ni, 0, 0])
            .iter()
            .filter_map(|z| match *z {
                ModeIndex::Wave { pol: p, parity: Parity::Sin, .. } => {
                    let v = pol[p as usize][1] / 2f64.sqrt();
                    (v.abs() > 1e-15).then(|| (basis.position(z).expect("mode added"), v))
                }
                _ => None,
            })
            .collect();
        Family {
            basis,
            table,
            shape,
            lambda_n: 4.0 * PI * PI * (n * n) as f64,
        }
    }

    fn w(&self, amp: f64) -> Vec<f64> {
        let mut c = vec![0.0; self.basis.len()];
        for &(j, v) in &self.shape {
            c[j] = amp * v;
        }
        c
    }

    /// `f^(n) - f` given the base state `u` and the pulse amplitudes.
    fn extra_forcing(&self, u: &[f64], w1: f64, w2: f64, pulse_on: bool) -> Vec<f64> {
        let w = self.w(w1 - w2);
        let len = self.basis.len();
        let mut out = vec![0.0; len];
        let mut tmp = vec![0.0; len];
        for (a, b) in [(u, &w[..]), (&w[..], u), (&w[..], &w[..])] {
            self.table.bilinear_into(a, b, &mut tmp);
            out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
        }
        if pulse_on {
            for &(j, v) in &self.shape {
                out[j] += 2.0 * self.lambda_n * w1 * v;
            }
        }
        out
    }
}

fn interpolate(traj: &Trajectory, t: f64) -> Vec<f64> {
    let s = ((t - traj.t0) / traj.dt).clamp(0.0, traj.steps() as f64);
    let i = (s.floor() as usize).min(traj.steps().saturating_sub(1));
    let th = s - i as f64;
    let a = traj.states[i].coeffs();
    let b = traj.states[(i + 1).min(traj.steps())].coeffs();
    a.iter().zip(b).map(|(a, b)| (1.0 - th) * a + th * b).collect()
}

/// Integral of `g` over `[peak - len, peak]` (`before`) or `[peak, peak + len]`
/// for integrands that decay like `e^{-kappa |t - peak|}`: trapezoid rule in
/// `q = e^{-kappa |t - peak|}`, where the integrand divided by `kappa q` varies slowly.
fn integrate_decaying(peak: f64, len: f64, kappa: f64, before: bool, g: impl Fn(f64) -> f64) -> f64 {
    const NODES: usize = 2000;
    if len <= 0.0 {
        return 0.0;
    }
    let qmin = (-kappa * len).exp().max(1e-30);
    let h = (1.0 - qmin) / (NODES - 1) as f64;
    (0..NODES)
        .map(|j| {
            let q = qmin + j as f64 * h;
            let s = (-q.ln() / kappa).min(len);
            let t = if before { peak - s } else { peak + s };
            let w = if j == 0 || j == NODES - 1 { 0.5 } else { 1.0 };
            w * h * g(t) / (kappa * q)
        })
        .sum()
}

/// The perturbed path `v^(n) = u + w^(n)` on the grid of `base`, its forcing on
/// an extended basis, and the peak norm and extra cost.
///
/// The extended basis is `B_m` plus the modes of `(n,0,0)` and `k +- n e1` for
/// `k` in `B_m`, which carries `w^(n)` and every interaction of `w^(n)` with `u`.
/// The time grid of `base` does not resolve the pulse, so the report integrates
/// on its own grid concentrated around `tau'` and `tau' + 1/n`, with `u`
/// interpolated linearly in time.
pub fn blowup_family(
    n: usize,
    tau_prime: f64,
    base: &Trajectory,
    base_forcing: &Forcing,
) -> Result<(Trajectory, Forcing, BlowupReport)> {
    let m = base.basis().cutoff();
    if !base.basis().is_galerkin() {
        return Err(Error::BasisMismatch("blowup needs a base trajectory on B_m".into()));
    }
    if n <= 2 * m {
        return Err(Error::InvalidParameter(format!(
            "frequency n={n} is not separated from the base modes: need n > 2m = {}",
            2 * m
        )));
    }
    let t_end = base.t_final();
    if !(tau_prime >= base.t0 && tau_prime + 1.0 / n as f64 <= t_end) {
        return Err(Error::InvalidParameter(format!(
            "need [tau', tau' + 1/n] inside [{}, {t_end}], got tau'={tau_prime}, n={n}",
            base.t0
        )));
    }
    base.check_aligned(base_forcing.t0, base_forcing.dt, base_forcing.len())?;
    base.states[0].check_compatible(&base_forcing.values()[0])?;

    let fam = Family::new(m, n);
    let basis = fam.basis.clone();
    let peak = tau_prime + 1.0 / n as f64;

    let mut states = Vec::with_capacity(base.states.len());
    let mut forcing = Vec::with_capacity(base.states.len());
    for (i, (u, f)) in base.states.iter().zip(base_forcing.values()).enumerate() {
        let t = base.time(i);
        let u = transfer(u, &basis).into_coeffs();
        let (w1, w2) = blowup_pulse(n, tau_prime, t);
        let mut v = u.clone();
        v.iter_mut().zip(fam.w(w1 - w2)).for_each(|(a, b)| *a += b);
        let mut g = transfer(f, &basis).into_coeffs();
        if t >= tau_prime {
            let d = fam.extra_forcing(&u, w1, w2, t <= peak);
            g.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        }
        states.push(SpectralField::from_coeffs(&basis, v)?);
        forcing.push(SpectralField::from_coeffs(&basis, g)?);
    }
    let traj = Trajectory::new(base.t0, base.dt, states)?;
    let forcing = Forcing::new(base.t0, base.dt, forcing)?;

    let base_at = |t: f64| -> SpectralField {
        let u = SpectralField::from_coeffs(base.basis(), interpolate(base, t)).expect("length matches basis");
        transfer(&u, &basis)
    };
    let h1_peak = {
        let mut v = base_at(peak).into_coeffs();
        let (w1, w2) = blowup_pulse(n, tau_prime, peak);
        v.iter_mut().zip(fam.w(w1 - w2)).for_each(|(a, b)| *a += b);
        SpectralField::from_coeffs(&basis, v)?.norm(NormKind::Sobolev(1.0))?
    };

    let lam = basis.eigenvalues();
    let density = |t: f64, pulse_on: bool| {
        let u = base_at(t);
        let (w1, w2) = blowup_pulse(n, tau_prime, t);
        let d = fam.extra_forcing(u.coeffs(), w1, w2, pulse_on);
        homogeneous_dual_sq(&d, lam)
    };
    let kappa = 2.0 * fam.lambda_n;
    let extra_cost = integrate_decaying(peak, peak - tau_prime, kappa, true, |t| density(t, true))
        + integrate_decaying(peak, t_end - peak, kappa, false, |t| density(t, false));
    let pulse_cost = {
        let nf = n as f64;
        -(-kappa / nf).exp_m1() / nf
    };
    Ok((
        traj,
        forcing,
        BlowupReport {
            n,
            tau_prime,
            h1_peak,
            extra_cost,
            pulse_cost,
            modes: basis.len(),
        },
    ))
}

//! Time integration of the Galerkin SDE, the deterministic flow and the skeleton
//! equation, with energy bookkeeping.
//!
//! One step is a Strang splitting: half a step of convection, a full linear step,
//! half a step of convection. Convection uses the explicit midpoint rule with the
//! wave part rescaled back to its incoming energy, so it conserves energy exactly
//! like the continuous term does. The linear substep integrates
//! `dc = (-lambda c + f) dt + noise` either exactly (exponential scheme) or
//! implicitly (semi-implicit scheme).

mod ensemble;
mod trajectory;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{dot, Basis, SpectralField, TrilinearTable};
use crate::error::{Error, Result};
use crate::noise::{fill_normals, NoiseParams};

pub use ensemble::{simulate_ensemble, EnsembleSummary};
pub use trajectory::{
    read_trajectory, read_trajectory_with_basis, trapezoid_weights, write_fields,
    write_trajectory, Forcing, Trajectory, TRAJECTORY_HEADER,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    SemiImplicitEuler,
    #[default]
    ExponentialEuler,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub record_noise: bool,
    /// Disables convection; only meant for Ornstein-Uhlenbeck reference runs.
    pub nonlinear: bool,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        let cfg = IntegratorConfig {
            scheme: Scheme::default(),
            dt,
            t_final,
            record_noise: false,
            nonlinear: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.dt <= self.t_final && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} must not exceed T = {}",
                self.dt, self.t_final
            )));
        }
        Ok(())
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn recording_noise(mut self) -> Self {
        self.record_noise = true;
        self
    }

    pub fn linear_only(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Per-mode coefficients of the linear substep `c' = alpha c + gamma f + std z`.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub noise_std: Vec<f64>,
    dt: f64,
    wave: Vec<bool>,
}

fn phi1_dt(lambda: f64, dt: f64) -> f64 {
    if lambda == 0.0 {
        dt
    } else {
        -(-lambda * dt).exp_m1() / lambda
    }
}

impl Propagator {
    pub fn new(basis: &Basis, params: &NoiseParams, scheme: Scheme, dt: f64) -> Self {
        let lam = basis.eigenvalues();
        let sig = params.sigmas(basis);
        let eps = params.epsilon;
        let n = lam.len();
        let (mut alpha, mut gamma, mut noise_std) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let l = lam[i];
            match scheme {
                Scheme::ExponentialEuler => {
                    alpha[i] = (-l * dt).exp();
                    gamma[i] = phi1_dt(l, dt);
                    // exact Ornstein-Uhlenbeck increment: variance eps sigma^2 (1 - e^{-2 lambda dt}) / 2
                    noise_std[i] = (0.5 * eps * -(-2.0 * l * dt).exp_m1()).sqrt() * sig[i];
                }
                Scheme::SemiImplicitEuler => {
                    alpha[i] = 1.0 / (1.0 + l * dt);
                    gamma[i] = alpha[i] * dt;
                    noise_std[i] = alpha[i] * (eps * l * dt).sqrt() * sig[i];
                }
            }
        }
        Propagator {
            alpha,
            gamma,
            noise_std,
            dt,
            wave: lam.iter().map(|&l| l > 0.0).collect(),
        }
    }

    pub fn noise_var(&self) -> impl Iterator<Item = f64> + '_ {
        self.noise_std.iter().map(|s| s * s)
    }

    pub fn is_noisy(&self) -> bool {
        self.noise_std.iter().any(|&s| s != 0.0)
    }

    /// Energy-preserving convection over half a step, applied in place.
    pub fn convect(&self, table: &TrilinearTable, c: &mut [f64], work: &mut Workspace) {
        let h = 0.5 * self.dt;
        let n = c.len();
        table.nonlinear_into(c, &mut work.k);
        let mut before = 0.0;
        for i in 0..n {
            work.mid[i] = c[i] - 0.5 * h * work.k[i];
            if self.wave[i] {
                before += c[i] * c[i];
            }
        }
        table.nonlinear_into(&work.mid, &mut work.k);
        let mut after = 0.0;
        for i in 0..n {
            if self.wave[i] {
                c[i] -= h * work.k[i];
                after += c[i] * c[i];
            }
        }
        if after > 0.0 {
            let s = (before / after).sqrt();
            for i in 0..n {
                if self.wave[i] {
                    c[i] *= s;
                }
            }
        }
    }

    /// Linear substep; writes the injected noise into `eta`.
    pub fn linear(&self, c: &mut [f64], f: Option<&[f64]>, z: &[f64], eta: &mut [f64]) {
        for i in 0..c.len() {
            eta[i] = self.noise_std[i] * z[i];
            let forced = f.map_or(0.0, |f| self.gamma[i] * f[i]);
            c[i] = self.alpha[i] * c[i] + forced + eta[i];
        }
    }
}

/// Scratch buffers for [`Propagator::convect`].
#[derive(Clone, Debug)]
pub struct Workspace {
    k: Vec<f64>,
    mid: Vec<f64>,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        Workspace {
            k: vec![0.0; n],
            mid: vec![0.0; n],
        }
    }
}

/// `-lambda c - B(u)`
pub fn drift(u: &SpectralField, table: &TrilinearTable) -> Result<SpectralField> {
    let n = crate::basis::nonlinear_term(u, table)?;
    let c = u
        .coeffs()
        .iter()
        .zip(u.basis().eigenvalues())
        .zip(n.coeffs())
        .map(|((c, l), b)| -l * c - b)
        .collect();
    SpectralField::from_coeffs(u.basis(), c)
}

/// `1/2 |u|_H^2`
pub fn energy(u: &SpectralField) -> f64 {
    0.5 * dot(u.coeffs(), u.coeffs())
}

/// `|u|_V^2 = sum lambda c^2`
pub fn dissipation(u: &SpectralField) -> f64 {
    u.coeffs()
        .iter()
        .zip(u.basis().eigenvalues())
        .map(|(c, l)| l * c * c)
        .sum()
}

fn check_table(u: &SpectralField, table: &TrilinearTable) -> Result<()> {
    table.check(u)
}

/// One step from `u` with a fixed forcing value over the step.
pub fn step<R: Rng + ?Sized>(
    u: &SpectralField,
    params: &NoiseParams,
    cfg: &IntegratorConfig,
    table: &TrilinearTable,
    forcing_value: Option<&SpectralField>,
    rng: &mut R,
) -> Result<SpectralField> {
    check_table(u, table)?;
    if let Some(f) = forcing_value {
        u.check_compatible(f)?;
    }
    let prop = Propagator::new(u.basis(), params, cfg.scheme, cfg.dt);
    let n = u.len();
    let mut c = u.coeffs().to_vec();
    let mut work = Workspace::new(n);
    if cfg.nonlinear {
        prop.convect(table, &mut c, &mut work);
    }
    let (mut z, mut eta) = (vec![0.0; n], vec![0.0; n]);
    if prop.is_noisy() {
        fill_normals(rng, &mut z);
    }
    prop.linear(&mut c, forcing_value.map(|f| f.coeffs()), &z, &mut eta);
    if cfg.nonlinear {
        prop.convect(table, &mut c, &mut work);
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationFailure { step: 0 });
    }
    SpectralField::from_coeffs(u.basis(), c)
}

/// Forcing used during step `i`: the average of the two bracketing nodes.
fn step_forcing(forcing: &Forcing, i: usize, out: &mut [f64]) {
    let a = forcing.values()[i].coeffs();
    let b = forcing.values()[i + 1].coeffs();
    for j in 0..out.len() {
        out[j] = 0.5 * (a[j] + b[j]);
    }
}

fn check_forcing(forcing: &Forcing, u0: &SpectralField, cfg: &IntegratorConfig, t0: f64) -> Result<()> {
    u0.check_compatible(&forcing.values()[0])?;
    let steps = cfg.steps();
    if forcing.len() != steps + 1
        || (forcing.dt - cfg.dt).abs() > 1e-12 * cfg.dt
        || (forcing.t0 - t0).abs() > 1e-12
    {
        return Err(Error::GridMismatch(format!(
            "forcing has {} nodes at dt={} from t0={}, integrator needs {} at dt={} from {}",
            forcing.len(),
            forcing.dt,
            forcing.t0,
            steps + 1,
            cfg.dt,
            t0
        )));
    }
    Ok(())
}

/// Integrates from `u0` over `[0, T]`.
pub fn simulate<R: Rng + ?Sized>(
    u0: &SpectralField,
    params: &NoiseParams,
    cfg: &IntegratorConfig,
    table: &TrilinearTable,
    forcing: Option<&Forcing>,
    rng: &mut R,
) -> Result<Trajectory> {
    simulate_from(0.0, u0, params, cfg, table, forcing, rng)
}

/// [`simulate`] starting at time `t0`.
pub fn simulate_from<R: Rng + ?Sized>(
    t0: f64,
    u0: &SpectralField,
    params: &NoiseParams,
    cfg: &IntegratorConfig,
    table: &TrilinearTable,
    forcing: Option<&Forcing>,
    rng: &mut R,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_table(u0, table)?;
    if let Some(f) = forcing {
        check_forcing(f, u0, cfg, t0)?;
    }
    let basis = u0.basis();
    let prop = Propagator::new(basis, params, cfg.scheme, cfg.dt);
    let noisy = prop.is_noisy();
    let steps = cfg.steps();
    let n = u0.len();

    let mut states = Vec::with_capacity(steps + 1);
    let mut log = cfg.record_noise.then(|| Vec::with_capacity(steps));
    states.push(u0.clone());
    let mut c = u0.coeffs().to_vec();
    let mut work = Workspace::new(n);
    let (mut z, mut eta, mut f) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..steps {
        if cfg.nonlinear {
            prop.convect(table, &mut c, &mut work);
        }
        if noisy {
            fill_normals(rng, &mut z);
        }
        let fv = forcing.map(|fr| {
            step_forcing(fr, i, &mut f);
            &f[..]
        });
        prop.linear(&mut c, fv, &z, &mut eta);
        if cfg.nonlinear {
            prop.convect(table, &mut c, &mut work);
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure { step: i + 1 });
        }
        states.push(SpectralField::from_coeffs(basis, c.clone())?);
        if let Some(log) = log.as_mut() {
            log.push(SpectralField::from_coeffs(basis, eta.clone())?);
        }
    }
    let traj = Trajectory::new(t0, cfg.dt, states)?;
    match log {
        Some(log) => traj.with_noise_log(log),
        None => Ok(traj),
    }
}

/// Running energy balance of a simulated trajectory.
///
/// With `c~` the state after the first convection substep (same energy as `c_i`;
/// the closing convection substep does not change the energy either), step
/// `i` contributes
/// `dE + sum (1 - alpha^2) c~^2 / 2 - <alpha c~, eta> - <alpha c~, gamma f> - sum v / 2`,
/// where `v` is the variance of the injected increment `eta`. The first two terms
/// are the discrete dissipation, the next the martingale and work terms and the
/// last the Ito correction. The unforced residual is a martingale increment; for
/// `dt -> 0` the terms reduce to `dt |u|_V^2`, `<u, xi>`, `<u, f> dt` and
/// `(eps/2) Tr[A Q] dt`.
pub fn energy_residual(
    traj: &Trajectory,
    params: &NoiseParams,
    cfg: &IntegratorConfig,
    table: &TrilinearTable,
    forcing: Option<&Forcing>,
) -> Result<Vec<f64>> {
    let log = traj.noise_log.as_ref().ok_or(Error::MissingNoiseLog)?;
    check_table(traj.initial(), table)?;
    let step_cfg = IntegratorConfig {
        dt: traj.dt,
        t_final: traj.t_final() - traj.t0,
        ..*cfg
    };
    if let Some(f) = forcing {
        check_forcing(f, traj.initial(), &step_cfg, traj.t0)?;
    }
    let prop = Propagator::new(traj.basis(), params, cfg.scheme, traj.dt);
    let ito: f64 = 0.5 * prop.noise_var().sum::<f64>();
    let n = traj.basis().len();
    let mut work = Workspace::new(n);
    let mut f = vec![0.0; n];
    let mut total = 0.0;
    let mut out = Vec::with_capacity(traj.steps());
    for i in 0..traj.steps() {
        let mut c = traj.states[i].coeffs().to_vec();
        if cfg.nonlinear {
            prop.convect(table, &mut c, &mut work);
        }
        if let Some(fr) = forcing {
            step_forcing(fr, i, &mut f);
        }
        let eta = log[i].coeffs();
        let d_e = energy(&traj.states[i + 1]) - energy(&traj.states[i]);
        let mut r = d_e - ito;
        for j in 0..n {
            let ac = prop.alpha[j] * c[j];
            r += 0.5 * (1.0 - prop.alpha[j] * prop.alpha[j]) * c[j] * c[j];
            r -= ac * eta[j];
            if forcing.is_some() {
                r -= ac * prop.gamma[j] * f[j];
            }
        }
        total += r;
        out.push(total);
    }
    Ok(out)
}

/// Signed defect `1/2|u(T)|^2 + int |u|_V^2 - 1/2|u(0)|^2 - int <u, f>` with
/// trapezoid time integrals; positive values mean energy was created.
pub fn energy_identity_check(traj: &Trajectory, forcing: Option<&Forcing>) -> Result<f64> {
    if let Some(f) = forcing {
        traj.check_aligned(f.t0, f.dt, f.len())?;
        traj.initial().check_compatible(&f.values()[0])?;
    }
    let w = trapezoid_weights(traj.states.len());
    let mut integral = 0.0;
    for (i, u) in traj.states.iter().enumerate() {
        let mut density = dissipation(u);
        if let Some(f) = forcing {
            density -= dot(u.coeffs(), f.values()[i].coeffs());
        }
        integral += w[i] * traj.dt * density;
    }
    Ok(energy(traj.last()) - energy(traj.initial()) + integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{ModeIndex, NormKind, Parity};
    use crate::noise::replica_rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn setup(m: usize) -> (Arc<Basis>, TrilinearTable) {
        let b = Basis::galerkin(m);
        let t = TrilinearTable::build(&b);
        (b, t)
    }

    fn random_field(b: &Arc<Basis>, seed: u64, amp: f64) -> SpectralField {
        let mut rng = replica_rng(seed, 0);
        let mut c = vec![0.0; b.len()];
        fill_normals(&mut rng, &mut c);
        for (v, z) in c.iter_mut().zip(b.modes()) {
            *v *= if z.is_constant() { 0.0 } else { amp };
        }
        SpectralField::from_coeffs(b, c).unwrap()
    }

    #[test]
    fn drift_examples() {
        let (b, t) = setup(2);
        let z = SpectralField::zeros(&b);
        assert!(drift(&z, &t).unwrap().coeffs().iter().all(|&v| v == 0.0));
        let mode = ModeIndex::wave([1, 0, 0], 0, Parity::Cos);
        let u = SpectralField::single(&b, mode, 1.0).unwrap();
        let d = drift(&u, &t).unwrap();
        let i = b.position(&mode).unwrap();
        for (j, v) in d.coeffs().iter().enumerate() {
            if j == i {
                assert!((v + 4.0 * PI * PI).abs() < 1e-12);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
        for seed in 0..10 {
            let u = random_field(&b, seed, 1.0);
            let lhs = dot(drift(&u, &t).unwrap().coeffs(), u.coeffs());
            let rhs = -u.norm_sq(NormKind::V).unwrap();
            assert!((lhs - rhs).abs() < 1e-10 * rhs.abs());
        }
    }

    #[test]
    fn energy_examples() {
        let (b, _) = setup(1);
        let mode = ModeIndex::wave([1, 0, 0], 1, Parity::Sin);
        let u = SpectralField::single(&b, mode, 1.0).unwrap();
        assert_eq!(energy(&u), 0.5);
        assert!((dissipation(&u) - 4.0 * PI * PI).abs() < 1e-12);
        let v = random_field(&b, 3, 1.0);
        assert!((energy(&v.scaled(3.0)) - 9.0 * energy(&v)).abs() < 1e-12 * energy(&v));
    }

    #[test]
    fn exact_decay_of_a_single_mode() {
        let (b, t) = setup(1);
        let p = NoiseParams::new(0.0, 0.0, 1.5, 1).unwrap();
        let mode = ModeIndex::wave([1, 0, 0], 0, Parity::Cos);
        let u0 = SpectralField::single(&b, mode, 1.0).unwrap();
        for dt in [0.01, 0.005, 0.001] {
            let cfg = IntegratorConfig::new(dt, 0.01).unwrap();
            let traj = simulate(&u0, &p, &cfg, &t, None, &mut replica_rng(0, 0)).unwrap();
            let c = traj.last().get(&mode).unwrap();
            assert!((c - (-0.394784176f64).exp()).abs() < 1e-9);
            assert!((c - (-4.0 * PI * PI * 0.01).exp()).abs() < 1e-12);
            assert!((c - 0.673825).abs() < 1e-6);
        }
        let cfg = IntegratorConfig::new(0.002, 0.01).unwrap();
        let one = step(&u0, &p, &cfg, &t, None, &mut replica_rng(0, 0)).unwrap();
        assert!((one.get(&mode).unwrap() - (-4.0 * PI * PI * 0.002f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_stays_zero_and_energy_decays() {
        let (b, t) = setup(2);
        let p = NoiseParams::new(0.0, 0.0, 1.5, 2).unwrap();
        let z = SpectralField::zeros(&b);
        for scheme in [Scheme::ExponentialEuler, Scheme::SemiImplicitEuler] {
            let cfg = IntegratorConfig::new(1e-2, 0.5).unwrap().with_scheme(scheme);
            let traj = simulate(&z, &p, &cfg, &t, None, &mut replica_rng(0, 0)).unwrap();
            assert!(traj.states.iter().all(|s| s.coeffs().iter().all(|&v| v == 0.0)));
            let u0 = random_field(&b, 9, 2.0);
            let traj = simulate(&u0, &p, &cfg, &t, None, &mut replica_rng(0, 0)).unwrap();
            for w in traj.states.windows(2) {
                assert!(energy(&w[1]) < energy(&w[0]));
            }
        }
        // the exponential scheme stays monotone at any step size
        let cfg = IntegratorConfig::new(0.25, 1.0).unwrap();
        let u0 = random_field(&b, 4, 5.0);
        let traj = simulate(&u0, &p, &cfg, &t, None, &mut replica_rng(0, 0)).unwrap();
        for w in traj.states.windows(2) {
            assert!(energy(&w[1]) <= energy(&w[0]));
        }
    }

    #[test]
    fn constant_modes_are_conserved() {
        let (b, t) = setup(2);
        let p = NoiseParams::new(0.3, 0.0, 1.5, 2).unwrap();
        let mut u0 = random_field(&b, 1, 1.0);
        u0.coeffs_mut()[..3].copy_from_slice(&[0.3, -0.2, 0.7]);
        let cfg = IntegratorConfig::new(1e-3, 0.1).unwrap();
        let traj = simulate(&u0, &p, &cfg, &t, None, &mut replica_rng(5, 0)).unwrap();
        for s in &traj.states {
            assert_eq!(&s.coeffs()[..3], &[0.3, -0.2, 0.7]);
        }
    }

    #[test]
    fn seeds_are_deterministic() {
        let (b, t) = setup(2);
        let p = NoiseParams::new(0.5, 0.0, 1.5, 2).unwrap();
        let u0 = random_field(&b, 2, 0.5);
        let cfg = IntegratorConfig::new(1e-3, 0.05).unwrap().recording_noise();
        let a = simulate(&u0, &p, &cfg, &t, None, &mut replica_rng(42, 3)).unwrap();
        let c = simulate(&u0, &p, &cfg, &t, None, &mut replica_rng(42, 3)).unwrap();
        assert_eq!(a, c);
        let d = simulate(&u0, &p, &cfg, &t, None, &mut replica_rng(42, 4)).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn schemes_agree_to_first_order() {
        let (b, t) = setup(2);
        let p = NoiseParams::new(0.0, 0.0, 1.5, 2).unwrap();
        let u0 = random_field(&b, 7, 1.0);
        let gap = |dt: f64| {
            let run = |s| {
                let cfg = IntegratorConfig::new(dt, 0.1).unwrap().with_scheme(s);
                simulate(&u0, &p, &cfg, &t, None, &mut replica_rng(0, 0)).unwrap()
            };
            let a = run(Scheme::ExponentialEuler);
            let c = run(Scheme::SemiImplicitEuler);
            a.last().sub(c.last()).unwrap().norm(NormKind::H).unwrap()
        };
        let (g1, g2, g3) = (gap(2e-3), gap(1e-3), gap(5e-4));
        assert!((g1 / g2 - 2.0).abs() < 0.3, "{g1} {g2}");
        assert!((g2 / g3 - 2.0).abs() < 0.3, "{g2} {g3}");
    }

    #[test]
    fn deterministic_residual_vanishes_and_needs_a_log() {
        let (b, t) = setup(2);
        let p = NoiseParams::new(0.0, 0.0, 1.5, 2).unwrap();
        let u0 = random_field(&b, 8, 1.0);
        let cfg = IntegratorConfig::new(1e-3, 0.2).unwrap().recording_noise();
        let traj = simulate(&u0, &p, &cfg, &t, None, &mut replica_rng(0, 0)).unwrap();
        let r = energy_residual(&traj, &p, &cfg, &t, None).unwrap();
        assert!(r.last().unwrap().abs() < 1e-12 * energy(&u0));
        let bare = Trajectory::new(0.0, 1e-3, traj.states.clone()).unwrap();
        assert!(matches!(
            energy_residual(&bare, &p, &cfg, &t, None),
            Err(Error::MissingNoiseLog)
        ));
    }

    #[test]
    fn identity_defect_is_first_order() {
        let (b, t) = setup(1);
        let p = NoiseParams::new(0.0, 0.0, 1.5, 1).unwrap();
        let u0 = random_field(&b, 6, 1.0);
        let defect = |dt: f64| {
            let cfg = IntegratorConfig::new(dt, 0.5).unwrap().with_scheme(Scheme::SemiImplicitEuler);
            let traj = simulate(&u0, &p, &cfg, &t, None, &mut replica_rng(0, 0)).unwrap();
            energy_identity_check(&traj, None).unwrap()
        };
        let (d1, d2) = (defect(1e-3), defect(5e-4));
        assert!((d1 / d2 - 2.0).abs() < 0.2, "{d1} {d2}");
        let z = Trajectory::new(0.0, 0.1, vec![SpectralField::zeros(&b); 4]).unwrap();
        assert_eq!(energy_identity_check(&z, None).unwrap(), 0.0);
    }
}

//! Covariance regularization, Hilbert-Schmidt traces and noise sampling.

use std::f64::consts::PI;
use std::io::Read;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{half_lattice, Basis, ModeIndex, SpectralField};
use crate::error::{Error, Result};

/// Lower (exclusive) bound on the regularization exponent for a finite trace.
pub const MIN_BETA: f64 = 1.25;

/// Noise intensity, correlation length, smoothing exponent and Galerkin cutoff.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub epsilon: f64,
    pub delta: f64,
    pub beta: f64,
    pub m: usize,
}

impl NoiseParams {
    pub fn new(epsilon: f64, delta: f64, beta: f64, m: usize) -> Result<Self> {
        let p = NoiseParams {
            epsilon,
            delta,
            beta,
            m,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        if !(self.beta > MIN_BETA && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta must exceed 5/4, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        NoiseParams { epsilon, ..self }
    }

    pub fn sigma(&self, mode: &ModeIndex) -> f64 {
        sigma_for_eigenvalue(self.delta, self.beta, mode.eigenvalue())
    }

    /// `sigma` for every mode of `basis`, in order.
    pub fn sigmas(&self, basis: &Basis) -> Vec<f64> {
        basis
            .eigenvalues()
            .iter()
            .map(|&l| sigma_for_eigenvalue(self.delta, self.beta, l))
            .collect()
    }
}

/// `(1 + delta lambda^{2 beta})^{-1/2}`
pub fn sigma_for_eigenvalue(delta: f64, beta: f64, lambda: f64) -> f64 {
    if delta == 0.0 || lambda == 0.0 {
        1.0
    } else {
        (1.0 + delta * lambda.powf(2.0 * beta)).powf(-0.5)
    }
}

pub fn sigma(params: &NoiseParams, mode: &ModeIndex) -> f64 {
    params.sigma(mode)
}

/// `Tr[P_m A Q_delta] = sum_{B_m} lambda sigma^2`.
pub fn trace_aq(params: &NoiseParams) -> f64 {
    trace_aq_with(params.m, params.delta, params.beta)
}

pub fn trace_aq_with(m: usize, delta: f64, beta: f64) -> f64 {
    half_lattice(m)
        .into_iter()
        .map(|k| {
            let lambda = 4.0 * PI * PI * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
            4.0 * lambda * sigma_for_eigenvalue(delta, beta, lambda).powi(2)
        })
        .sum()
}

/// Result of an untruncated trace evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEstimate {
    pub value: f64,
    /// Radius of the exactly summed lattice ball.
    pub radius: usize,
    /// Continuum estimate of everything beyond the ball.
    pub tail: f64,
    /// Relative change against the previous (half) radius.
    pub relative_change: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `int_rho^inf` of the mode density, via `r = rho e^y` and composite Simpson.
fn continuum_tail(rho: f64, delta: f64, beta: f64) -> f64 {
    let a = delta * (2.0 * PI).powf(4.0 * beta);
    // two modes per lattice point of Z^3 \ 0 on shells of area 4 pi r^2, times lambda,
    // times the Jacobian r; evaluated in logs to survive large r
    let c = (32.0 * PI.powi(3)).ln();
    let f = |y: f64| {
        let lr = rho.ln() + y;
        (c + 5.0 * lr - softplus(a.ln() + 4.0 * beta * lr)).exp()
    };
    // integrand decays like exp((5 - 4 beta) y) once a r^{4 beta} >> 1
    let rate = 4.0 * beta - 5.0;
    let knee = (-(a.ln()) / (4.0 * beta) - rho.ln()).max(0.0);
    let y_max = knee + 40.0 / rate;
    let steps = 20_000usize;
    let h = y_max / steps as f64;
    let mut s = f(0.0) + f(y_max);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0 + f(y_max) / rate
}

fn lattice_sum(radius: usize, delta: f64, beta: f64) -> (f64, usize) {
    let r = radius as i64;
    let r2 = r * r;
    let mut sum = 0.0;
    let mut count = 0usize;
    // octant sweep with multiplicities
    for a in 0..=r {
        for b in 0..=r {
            let ab = a * a + b * b;
            if ab > r2 {
                break;
            }
            for c in 0..=r {
                let s = ab + c * c;
                if s > r2 {
                    break;
                }
                if s == 0 {
                    continue;
                }
                let mult = [a, b, c].iter().map(|&x| if x == 0 { 1 } else { 2 }).product::<usize>();
                let lambda = 4.0 * PI * PI * s as f64;
                sum += mult as f64 * 2.0 * lambda * sigma_for_eigenvalue(delta, beta, lambda).powi(2);
                count += mult;
            }
        }
    }
    (sum, count)
}

/// Trace of `A Q_delta` over all of `Z^3 \ 0`, for `delta > 0`.
///
/// The lattice is summed exactly inside a ball and the remainder is replaced by the
/// continuum integral from the radius of equal volume. The ball is doubled until the
/// total changes by less than `1e-9` relatively (or the radius reaches 256).
pub fn trace_aq_unbounded(delta: f64, beta: f64) -> Result<TraceEstimate> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(
            "the untruncated trace diverges at delta = 0; fix a finite m".into(),
        ));
    }
    if !(beta > MIN_BETA) {
        return Err(Error::InvalidParameter(format!("beta must exceed 5/4, got {beta}")));
    }
    let eval = |radius: usize| {
        let (sum, count) = lattice_sum(radius, delta, beta);
        // count includes the origin's absence; the equal-volume radius uses count + 1
        let rho = (3.0 * (count + 1) as f64 / (4.0 * PI)).cbrt();
        let tail = continuum_tail(rho, delta, beta);
        (sum + tail, tail)
    };
    let mut radius = 8;
    let (mut prev, _) = eval(radius / 2);
    loop {
        let (value, tail) = eval(radius);
        let change = ((value - prev) / value).abs();
        if change < 1e-9 || radius >= 256 {
            return Ok(TraceEstimate {
                value,
                radius,
                tail,
                relative_change: change,
            });
        }
        prev = value;
        radius *= 2;
    }
}

/// Sequence of `(epsilon, delta, m)` with strictly decreasing epsilon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSchedule {
    entries: Vec<(f64, f64, usize)>,
}

impl ScalingSchedule {
    pub fn new(entries: Vec<(f64, f64, usize)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("empty scaling schedule".into()));
        }
        for w in entries.windows(2) {
            if !(w[1].0 < w[0].0) {
                return Err(Error::InvalidParameter(
                    "schedule epsilons must be strictly decreasing".into(),
                ));
            }
        }
        if entries.iter().any(|e| !(e.0 > 0.0) || !(e.1 >= 0.0)) {
            return Err(Error::InvalidParameter(
                "schedule needs epsilon > 0 and delta >= 0".into(),
            ));
        }
        Ok(ScalingSchedule { entries })
    }

    /// Reads CSV with header `epsilon,delta,m`.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut entries = Vec::new();
        for rec in r.deserialize() {
            let (e, d, m): (f64, f64, usize) = rec?;
            entries.push((e, d, m));
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(f64, f64, usize)] {
        &self.entries
    }

    pub fn params(&self, beta: f64) -> Result<Vec<NoiseParams>> {
        self.entries
            .iter()
            .map(|&(e, d, m)| NoiseParams::new(e, d, beta, m))
            .collect()
    }
}

/// `epsilon_i * trace_aq(params_i)` along a schedule.
pub fn check_scaling(schedule: &ScalingSchedule, beta: f64) -> Vec<f64> {
    schedule
        .entries()
        .iter()
        .map(|&(e, d, m)| e * trace_aq_with(m, d, beta))
        .collect()
}

/// Independent generator for one replica: ChaCha8 keyed by the master seed, with
/// the replica id as stream number.
pub fn replica_rng(master_seed: u64, replica_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replica_id);
    rng
}

/// Fills `z` with standard normals.
pub fn fill_normals<R: Rng + ?Sized>(rng: &mut R, z: &mut [f64]) {
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Euler-Maruyama noise increment with per-mode std `sqrt(eps dt lambda) sigma`.
pub fn sample_increment<R: Rng + ?Sized>(
    params: &NoiseParams,
    basis: &Arc<Basis>,
    dt: f64,
    rng: &mut R,
) -> Result<SpectralField> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let mut z = vec![0.0; basis.len()];
    fill_normals(rng, &mut z);
    let sig = params.sigmas(basis);
    for ((v, l), s) in z.iter_mut().zip(basis.eigenvalues()).zip(&sig) {
        *v *= (params.epsilon * dt * l).sqrt() * s;
    }
    SpectralField::from_coeffs(basis, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Parity;

    #[test]
    fn sigma_examples() {
        let p = NoiseParams::new(1.0, 0.0, 1.5, 2).unwrap();
        assert_eq!(p.sigma(&ModeIndex::wave([1, 1, 0], 0, Parity::Cos)), 1.0);
        let p = NoiseParams::new(1.0, 1.0, 1.5, 2).unwrap();
        assert_eq!(p.sigma(&ModeIndex::constant(2)), 1.0);
        let s = p.sigma(&ModeIndex::wave([1, 0, 0], 0, Parity::Cos));
        let lam = 4.0 * PI * PI;
        assert!((s - 1.0 / (1.0 + lam.powi(3)).sqrt()).abs() < 1e-15);
        assert!((s - 4.031409043998899e-3).abs() < 1e-15);
    }

    #[test]
    fn sigma_is_monotone() {
        let lams = [1.0, 4.0 * PI * PI, 100.0, 1e4];
        let deltas = [0.0, 1e-3, 0.1, 1.0];
        let betas = [1.3, 1.5, 2.0, 3.0];
        for &l in &lams {
            for &b in &betas {
                for w in deltas.windows(2) {
                    assert!(sigma_for_eigenvalue(w[1], b, l) <= sigma_for_eigenvalue(w[0], b, l));
                }
            }
            for &d in &deltas {
                for w in betas.windows(2) {
                    assert!(sigma_for_eigenvalue(d, w[1], l) <= sigma_for_eigenvalue(d, w[0], l));
                }
            }
        }
        for w in lams.windows(2) {
            assert!(sigma_for_eigenvalue(0.1, 1.5, w[1]) <= sigma_for_eigenvalue(0.1, 1.5, w[0]));
        }
    }

    #[test]
    fn trace_examples() {
        let t = trace_aq_with(1, 0.0, 1.5);
        assert!((t - 48.0 * PI * PI).abs() < 1e-10);
        assert!((t - 473.741).abs() < 1e-3);
        assert_eq!(trace_aq_with(0, 0.3, 1.5), 0.0);
        assert!(trace_aq_with(4, 0.1, 1.5) <= trace_aq_with(4, 0.0, 1.5));
    }

    #[test]
    fn trace_matches_mode_sum() {
        let p = NoiseParams::new(1.0, 0.01, 1.5, 3).unwrap();
        let basis = Basis::galerkin(3);
        let direct: f64 = basis
            .modes()
            .iter()
            .map(|z| z.eigenvalue() * p.sigma(z).powi(2))
            .sum();
        assert!((direct - trace_aq(&p)).abs() < 1e-9 * direct);
    }

    #[test]
    fn unbounded_trace_dominates_truncations() {
        for &beta in &[1.3, 1.5, 2.0] {
            let est = trace_aq_unbounded(0.01, beta).unwrap();
            assert!(est.relative_change < 1e-6, "{est:?}");
            for m in [1, 4, 8] {
                let t = trace_aq_with(m, 0.01, beta);
                assert!(t <= est.value);
                assert!(t <= trace_aq_with(m, 0.0, beta));
            }
        }
        assert!(trace_aq_unbounded(0.0, 1.5).is_err());
    }

    #[test]
    fn scaling_schedule_validation() {
        assert!(ScalingSchedule::new(vec![(0.1, 0.0, 2), (0.2, 0.0, 2)]).is_err());
        let s = ScalingSchedule::new(vec![(0.5, 0.0, 2), (0.25, 0.0, 2), (0.125, 0.0, 2)]).unwrap();
        let v = check_scaling(&s, 1.5);
        assert!((v[0] / v[1] - 2.0).abs() < 1e-12 && (v[1] / v[2] - 2.0).abs() < 1e-12);
        let csv = "epsilon,delta,m\n0.5,0,2\n0.1,0,2\n";
        assert_eq!(ScalingSchedule::from_csv(csv.as_bytes()).unwrap().entries().len(), 2);
    }

    #[test]
    fn increments_are_reproducible_and_zero_on_constants() {
        let p = NoiseParams::new(1.0, 0.0, 1.5, 1).unwrap();
        let b = Basis::galerkin(1);
        let a = sample_increment(&p, &b, 0.01, &mut replica_rng(3, 5)).unwrap();
        let c = sample_increment(&p, &b, 0.01, &mut replica_rng(3, 5)).unwrap();
        assert_eq!(a, c);
        assert_eq!(&a.coeffs()[..3], &[0.0, 0.0, 0.0]);
        let z = sample_increment(&p.with_epsilon(0.0), &b, 0.01, &mut replica_rng(3, 5)).unwrap();
        assert!(z.coeffs().iter().all(|&v| v == 0.0));
        assert!(sample_increment(&p, &b, 0.0, &mut replica_rng(0, 0)).is_err());
    }

    #[test]
    fn increment_variance_matches() {
        let p = NoiseParams::new(1.0, 0.0, 1.5, 1).unwrap();
        let b = Basis::galerkin(1);
        let i = b.position(&ModeIndex::wave([1, 0, 0], 0, Parity::Cos)).unwrap();
        let mut rng = replica_rng(11, 0);
        let n = 100_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = sample_increment(&p, &b, 0.01, &mut rng).unwrap().coeffs()[i];
            s1 += x;
            s2 += x * x;
        }
        let var = s2 / n as f64 - (s1 / n as f64).powi(2);
        let target = 4.0 * PI * PI * 0.01;
        // sample variance of a Gaussian has se sigma^2 sqrt(2/n)
        let se = target * (2.0 / n as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se, "var {var} target {target}");
    }
}

use std::io::{Read, Write};
use std::sync::Arc;

use crate::basis::io::galerkin_for_len;
use crate::basis::{homogeneous_dual_sq, Basis, SpectralField};
use crate::error::{Error, Result};

/// Trapezoid weights (in units of dt) for `n` nodes.
pub fn trapezoid_weights(n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n];
    if n > 0 {
        w[0] = 0.5;
        w[n - 1] = 0.5;
    }
    if n == 1 {
        w[0] = 0.0;
    }
    w
}

fn check_fields(fields: &[SpectralField], what: &str) -> Result<()> {
    if let Some(first) = fields.first() {
        for f in &fields[1..] {
            if !f.same_basis(first) {
                return Err(Error::BasisMismatch(format!("{what} mix mode sets")));
            }
        }
    }
    Ok(())
}

fn check_grid(t0: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite() && t0.is_finite()) {
        return Err(Error::InvalidParameter(format!("bad time grid t0={t0}, dt={dt}")));
    }
    Ok(())
}

/// Sampled path on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<SpectralField>,
    /// Increment injected in each step, one per step when recorded.
    pub noise_log: Option<Vec<SpectralField>>,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, states: Vec<SpectralField>) -> Result<Self> {
        check_grid(t0, dt)?;
        if states.is_empty() {
            return Err(Error::InvalidParameter("trajectory needs at least one state".into()));
        }
        check_fields(&states, "trajectory states")?;
        Ok(Trajectory {
            t0,
            dt,
            states,
            noise_log: None,
        })
    }

    pub fn with_noise_log(mut self, log: Vec<SpectralField>) -> Result<Self> {
        if log.len() != self.steps() {
            return Err(Error::InvalidParameter(format!(
                "noise log has {} entries for {} steps",
                log.len(),
                self.steps()
            )));
        }
        check_fields(&log, "noise log entries")?;
        if let Some(first) = log.first() {
            self.states[0].check_compatible(first)?;
        }
        self.noise_log = Some(log);
        Ok(self)
    }

    /// Builds a trajectory by sampling `f(t)` (coefficients) at `steps + 1` nodes.
    pub fn from_fn(
        basis: &Arc<Basis>,
        t0: f64,
        dt: f64,
        steps: usize,
        mut f: impl FnMut(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let states = (0..=steps)
            .map(|i| SpectralField::from_coeffs(basis, f(t0 + i as f64 * dt)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(t0, dt, states)
    }

    pub fn basis(&self) -> &Arc<Basis> {
        self.states[0].basis()
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn initial(&self) -> &SpectralField {
        &self.states[0]
    }

    pub fn last(&self) -> &SpectralField {
        &self.states[self.steps()]
    }

    /// Same grid and mode set.
    pub fn check_aligned(&self, other_t0: f64, other_dt: f64, other_len: usize) -> Result<()> {
        let tol = 1e-12 * self.dt.max(1.0);
        if (self.t0 - other_t0).abs() > tol
            || (self.dt - other_dt).abs() > 1e-12 * self.dt
            || self.states.len() != other_len
        {
            return Err(Error::GridMismatch(format!(
                "(t0={}, dt={}, nodes={}) vs (t0={}, dt={}, nodes={})",
                self.t0,
                self.dt,
                self.states.len(),
                other_t0,
                other_dt,
                other_len
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> Trajectory {
        Trajectory {
            t0: self.t0,
            dt: self.dt,
            states: self.states.iter().map(|s| s.scaled(a)).collect(),
            noise_log: None,
        }
    }
}

/// Divergence-free forcing `f = -P div g` on a uniform time grid; zero on constant modes.
#[derive(Clone, Debug, PartialEq)]
pub struct Forcing {
    pub t0: f64,
    pub dt: f64,
    values: Vec<SpectralField>,
}

impl Forcing {
    pub fn new(t0: f64, dt: f64, values: Vec<SpectralField>) -> Result<Self> {
        check_grid(t0, dt)?;
        if values.is_empty() {
            return Err(Error::InvalidParameter("forcing needs at least one node".into()));
        }
        check_fields(&values, "forcing values")?;
        if let Some((i, f)) = values.iter().enumerate().find(|(_, f)| f.constant_part_max() != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "forcing has constant-mode component {} at node {i}",
                f.constant_part_max()
            )));
        }
        Ok(Forcing { t0, dt, values })
    }

    pub fn zeros(basis: &Arc<Basis>, t0: f64, dt: f64, steps: usize) -> Self {
        Forcing {
            t0,
            dt,
            values: vec![SpectralField::zeros(basis); steps + 1],
        }
    }

    /// Samples `f(t)` at `steps + 1` nodes; constant-mode entries are discarded.
    pub fn from_fn(
        basis: &Arc<Basis>,
        t0: f64,
        dt: f64,
        steps: usize,
        mut f: impl FnMut(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let mut c = f(t0 + i as f64 * dt);
            for (z, v) in basis.modes().iter().zip(c.iter_mut()) {
                if z.is_constant() {
                    *v = 0.0;
                }
            }
            values.push(SpectralField::from_coeffs(basis, c)?);
        }
        Self::new(t0, dt, values)
    }

    pub fn values(&self) -> &[SpectralField] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn basis(&self) -> &Arc<Basis> {
        self.values[0].basis()
    }

    pub fn scaled(&self, a: f64) -> Forcing {
        Forcing {
            t0: self.t0,
            dt: self.dt,
            values: self.values.iter().map(|f| f.scaled(a)).collect(),
        }
    }

    /// Homogeneous `H^{-1}` density `sum_{wave} f^2 / lambda` at each node.
    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|f| f.homogeneous_dual_sq()).collect()
    }

    /// Control cost `1/2 int sum f^2 / lambda dt` with the trapezoid rule.
    pub fn cost(&self) -> f64 {
        let w = trapezoid_weights(self.values.len());
        0.5 * self.dt * self.density().iter().zip(&w).map(|(d, w)| d * w).sum::<f64>()
    }

    /// Same cost with per-mode weights `s_z^2` (e.g. the noise damping).
    pub fn weighted_cost(&self, weights: &[f64]) -> f64 {
        let lam = self.basis().eigenvalues();
        let w = trapezoid_weights(self.values.len());
        let scaled: Vec<f64> = self
            .values
            .iter()
            .map(|f| {
                let c: Vec<f64> = f.coeffs().iter().zip(weights).map(|(c, s)| c * s).collect();
                homogeneous_dual_sq(&c, lam)
            })
            .collect();
        0.5 * self.dt * scaled.iter().zip(&w).map(|(d, w)| d * w).sum::<f64>()
    }
}

pub const TRAJECTORY_HEADER: [&str; 4] = ["step", "t", "mode_id", "coeff"];

/// Writes `step,t,mode_id,coeff` rows, one per (node, mode).
pub fn write_fields<W: Write>(t0: f64, dt: f64, fields: &[SpectralField], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for (i, f) in fields.iter().enumerate() {
        let t = format!("{}", t0 + i as f64 * dt);
        for (j, c) in f.coeffs().iter().enumerate() {
            w.write_record([i.to_string(), t.clone(), j.to_string(), format!("{c}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    write_fields(traj.t0, traj.dt, &traj.states, out)
}

/// Reads rows written by [`write_fields`]; returns `(t0, dt, coefficient rows)`.
fn read_rows<R: Read>(input: R) -> Result<(f64, f64, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for rec in r.deserialize() {
        let (step, t, mode, coeff): (usize, f64, usize, f64) = rec?;
        if step == rows.len() {
            rows.push(Vec::new());
            times.push(t);
        }
        if step + 1 != rows.len() || mode != rows[step].len() {
            return Err(Error::Parse(format!("row (step {step}, mode {mode}) out of order")));
        }
        rows[step].push(coeff);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty trajectory file".into()));
    }
    let dt = if times.len() > 1 {
        (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
    } else {
        1.0
    };
    Ok((times[0], dt, rows))
}

pub fn read_trajectory_with_basis<R: Read>(basis: &Arc<Basis>, input: R) -> Result<Trajectory> {
    let (t0, dt, rows) = read_rows(input)?;
    let states = rows
        .into_iter()
        .map(|c| SpectralField::from_coeffs(basis, c))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(t0, dt, states)
}

/// Reads a trajectory over a Galerkin set `B_m`, inferring `m` from the mode count.
pub fn read_trajectory<R: Read>(input: R) -> Result<Trajectory> {
    let (t0, dt, rows) = read_rows(input)?;
    let basis = galerkin_for_len(rows[0].len())?;
    let states = rows
        .into_iter()
        .map(|c| SpectralField::from_coeffs(&basis, c))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(t0, dt, states)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_csv_round_trip() {
        let b = Basis::galerkin(1);
        let traj = Trajectory::from_fn(&b, 0.0, 0.1, 3, |t| {
            (0..b.len()).map(|i| (t * i as f64).cos() / 7.0).collect()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_trajectory(&traj, &mut buf).unwrap();
        let back = read_trajectory(&buf[..]).unwrap();
        assert_eq!(back.states, traj.states);
        assert!((back.dt - 0.1).abs() < 1e-15);
    }

    #[test]
    fn forcing_rejects_constant_modes() {
        let b = Basis::galerkin(1);
        let mut c = vec![0.0; b.len()];
        c[0] = 1.0;
        let f = SpectralField::from_coeffs(&b, c).unwrap();
        assert!(Forcing::new(0.0, 0.1, vec![f]).is_err());
    }

    #[test]
    fn trapezoid() {
        assert_eq!(trapezoid_weights(3), vec![0.5, 1.0, 0.5]);
        assert_eq!(trapezoid_weights(1), vec![0.0]);
    }
}

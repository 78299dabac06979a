use std::f64::consts::PI;
use std::sync::Arc;

use super::field::{Basis, SpectralField};
use super::mode::{ModeIndex, Parity};
use crate::error::{Error, Result};

/// Vector field sampled on the uniform grid `x = (i, j, l) / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalField {
    n: usize,
    values: Vec<[f64; 3]>,
}

impl PhysicalField {
    pub fn zeros(n: usize) -> Self {
        PhysicalField {
            n,
            values: vec![[0.0; 3]; n * n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.n + j) * self.n + l
    }

    pub fn at(&self, i: usize, j: usize, l: usize) -> [f64; 3] {
        self.values[self.index(i, j, l)]
    }

    pub fn point(&self, i: usize, j: usize, l: usize) -> [f64; 3] {
        let n = self.n as f64;
        [i as f64 / n, j as f64 / n, l as f64 / n]
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.values
    }

    /// Grid quadrature of `|u|^2` over the unit torus.
    pub fn l2_norm_sq(&self) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .map(|v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
            .sum();
        s / self.values.len() as f64
    }
}

/// Per-grid phase tables so each mode costs one lookup per node.
struct Trig {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Trig {
    fn new(n: usize) -> Self {
        let cos = (0..n).map(|p| (2.0 * PI * p as f64 / n as f64).cos()).collect();
        let sin = (0..n).map(|p| (2.0 * PI * p as f64 / n as f64).sin()).collect();
        Trig { cos, sin }
    }
}

fn phase(k: [i32; 3], i: usize, j: usize, l: usize, n: usize) -> usize {
    let n = n as i64;
    let p = k[0] as i64 * i as i64 + k[1] as i64 * j as i64 + k[2] as i64 * l as i64;
    p.rem_euclid(n) as usize
}

fn mode_profile(mode: &ModeIndex, trig: &Trig, i: usize, j: usize, l: usize, n: usize) -> f64 {
    match *mode {
        ModeIndex::Constant { .. } => 1.0,
        ModeIndex::Wave { k, parity, .. } => {
            let p = phase(k, i, j, l, n);
            let t = match parity {
                Parity::Cos => trig.cos[p],
                Parity::Sin => trig.sin[p],
            };
            std::f64::consts::SQRT_2 * t
        }
    }
}

/// Smallest grid size that represents the basis without aliasing.
pub fn min_grid(basis: &Basis) -> usize {
    2 * basis.max_component() + 2
}

/// Pointwise synthesis `u(x) = sum c_z e_z(x)` on an `n^3` grid.
pub fn evaluate_physical(u: &SpectralField, n: usize) -> Result<PhysicalField> {
    let need = min_grid(u.basis());
    if n < need {
        return Err(Error::Aliasing {
            n,
            kmax: u.basis().max_component(),
            need,
        });
    }
    let trig = Trig::new(n);
    let mut out = PhysicalField::zeros(n);
    let active: Vec<(ModeIndex, [f64; 3], f64)> = u
        .basis()
        .modes()
        .iter()
        .zip(u.coeffs())
        .filter(|(_, &c)| c != 0.0)
        .map(|(z, &c)| (*z, z.direction(), c))
        .collect();
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let mut v = [0.0; 3];
                for (z, d, c) in &active {
                    let s = c * mode_profile(z, &trig, i, j, l, n);
                    v[0] += s * d[0];
                    v[1] += s * d[1];
                    v[2] += s * d[2];
                }
                let idx = out.index(i, j, l);
                out.values[idx] = v;
            }
        }
    }
    Ok(out)
}

/// Quadrature projection `<v, e_z>` of a sampled field onto every basis mode.
///
/// Exact for trigonometric polynomials whose frequencies, added to the basis
/// frequencies, stay below the Nyquist limit of the grid.
pub fn project_physical(v: &PhysicalField, basis: &Arc<Basis>) -> SpectralField {
    let n = v.n;
    let trig = Trig::new(n);
    let norm = 1.0 / (n * n * n) as f64;
    let coeffs = basis
        .modes()
        .iter()
        .map(|z| {
            let d = z.direction();
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        let w = v.values[v.index(i, j, l)];
                        let dot = w[0] * d[0] + w[1] * d[1] + w[2] * d[2];
                        s += dot * mode_profile(z, &trig, i, j, l, n);
                    }
                }
            }
            s * norm
        })
        .collect();
    SpectralField::from_coeffs(basis, coeffs).expect("length matches basis")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_constant_fields() {
        let b = Basis::galerkin(1);
        let z = evaluate_physical(&SpectralField::zeros(&b), 4).unwrap();
        assert!(z.values().iter().all(|v| *v == [0.0; 3]));
        let c = SpectralField::single(&b, ModeIndex::constant(0), 1.0).unwrap();
        let p = evaluate_physical(&c, 4).unwrap();
        assert!(p.values().iter().all(|v| *v == [1.0, 0.0, 0.0]));
    }

    #[test]
    fn single_wave_matches_closed_form() {
        let b = Basis::galerkin(2);
        for z in b.modes().iter().filter(|z| !z.is_constant()) {
            let u = SpectralField::single(&b, *z, 1.0).unwrap();
            let p = evaluate_physical(&u, 6).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    for l in 0..6 {
                        let exact = z.evaluate(p.point(i, j, l));
                        let got = p.at(i, j, l);
                        for a in 0..3 {
                            assert!((exact[a] - got[a]).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn aliasing_is_rejected() {
        let b = Basis::galerkin(2);
        assert!(matches!(
            evaluate_physical(&SpectralField::zeros(&b), 5),
            Err(Error::Aliasing { need: 6, .. })
        ));
    }

    #[test]
    fn projection_inverts_synthesis() {
        let b = Basis::galerkin(2);
        let coeffs: Vec<f64> = (0..b.len()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let u = SpectralField::from_coeffs(&b, coeffs).unwrap();
        let p = evaluate_physical(&u, 8).unwrap();
        let back = project_physical(&p, &b);
        for (x, y) in u.coeffs().iter().zip(back.coeffs()) {
            assert!((x - y).abs() < 1e-12);
        }
        let h = u.norm_sq(crate::basis::NormKind::H).unwrap();
        assert!((p.l2_norm_sq() - h).abs() < 1e-10 * h.max(1.0));
    }
}

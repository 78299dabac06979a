use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use super::field::{Basis, SpectralField};
use super::mode::{canonicalize, ModeIndex, Parity};
use crate::error::{Error, Result};

const DROP_TOL: f64 = 1e-14;

/// Complex-exponential expansion of a basis function: direction times
/// `sum alpha_j exp(i 2 pi s_j k . x)`.
struct Expansion {
    dir: [f64; 3],
    k: [i32; 3],
    terms: Vec<(Complex64, i32)>,
}

fn expand(mode: &ModeIndex) -> Expansion {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let terms = match *mode {
        ModeIndex::Constant { .. } => vec![(Complex64::new(1.0, 0.0), 1)],
        ModeIndex::Wave { parity: Parity::Cos, .. } => {
            vec![(Complex64::new(h, 0.0), 1), (Complex64::new(h, 0.0), -1)]
        }
        ModeIndex::Wave { parity: Parity::Sin, .. } => {
            vec![(Complex64::new(0.0, -h), 1), (Complex64::new(0.0, h), -1)]
        }
    };
    Expansion {
        dir: mode.direction(),
        k: mode.wavevector(),
        terms,
    }
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn kf(k: [i32; 3]) -> [f64; 3] {
    [k[0] as f64, k[1] as f64, k[2] as f64]
}

fn coeff_from(a: &Expansion, b: &Expansion, c: &Expansion) -> f64 {
    let dbc = dot3(b.dir, c.dir);
    let dak = dot3(a.dir, kf(b.k));
    if dbc == 0.0 || dak == 0.0 {
        return 0.0;
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for &(aa, sa) in &a.terms {
        for &(ab, sb) in &b.terms {
            for &(ac, sc) in &c.terms {
                let total = [
                    sa * a.k[0] + sb * b.k[0] + sc * c.k[0],
                    sa * a.k[1] + sb * b.k[1] + sc * c.k[1],
                    sa * a.k[2] + sb * b.k[2] + sc * c.k[2],
                ];
                if total == [0, 0, 0] {
                    let grad = Complex64::new(0.0, 2.0 * PI * sb as f64 * dak);
                    acc += aa * ab * ac * grad;
                }
            }
        }
    }
    acc.re * dbc
}

/// Exact convection coefficient `<(e_a . grad) e_b, e_c>` over the unit torus.
///
/// The first slot is the advecting field, the second the advected field and the
/// third the test function; the value is antisymmetric under swapping the last two.
pub fn trilinear_coeff(a: &ModeIndex, b: &ModeIndex, c: &ModeIndex) -> f64 {
    coeff_from(&expand(a), &expand(b), &expand(c))
}

/// Sparse table of all nonzero convection coefficients on a basis.
#[derive(Debug, Clone)]
pub struct TrilinearTable {
    basis: Arc<Basis>,
    entries: Vec<(u32, u32, u32, f64)>,
    // (a, b, c, T(a,b,c) + T(b,a,c)) with a <= b, sorted by c
    fused: Vec<(u32, u32, u32, f64)>,
}

impl TrilinearTable {
    pub fn build(basis: &Arc<Basis>) -> Self {
        let modes = basis.modes();
        let exps: Vec<Expansion> = modes.iter().map(expand).collect();
        let mut by_k: HashMap<[i32; 3], Vec<usize>> = HashMap::new();
        for (i, z) in modes.iter().enumerate() {
            if !z.is_constant() {
                by_k.entry(z.wavevector()).or_default().push(i);
            }
        }

        let mut raw: BTreeMap<(u32, u32, u32), f64> = BTreeMap::new();
        for (ia, za) in modes.iter().enumerate() {
            let ka = za.wavevector();
            for (ib, zb) in modes.iter().enumerate() {
                if zb.is_constant() {
                    continue;
                }
                let kb = zb.wavevector();
                let mut targets: Vec<[i32; 3]> = Vec::with_capacity(4);
                for sa in [1, -1] {
                    let kc = [
                        sa * ka[0] + kb[0],
                        sa * ka[1] + kb[1],
                        sa * ka[2] + kb[2],
                    ];
                    let (kc, _) = canonicalize(kc);
                    if kc != [0, 0, 0] && !targets.contains(&kc) {
                        targets.push(kc);
                    }
                }
                for kc in targets {
                    let Some(cands) = by_k.get(&kc) else { continue };
                    for &ic in cands {
                        let v = coeff_from(&exps[ia], &exps[ib], &exps[ic]);
                        if v != 0.0 {
                            raw.insert((ia as u32, ib as u32, ic as u32), v);
                        }
                    }
                }
            }
        }

        // enforce antisymmetry in the last two slots exactly
        let mut entries = Vec::with_capacity(raw.len());
        for (&(a, b, c), &v) in &raw {
            if b == c {
                continue;
            }
            let w = raw.get(&(a, c, b)).copied().unwrap_or(0.0);
            let s = 0.5 * (v - w);
            if s.abs() >= DROP_TOL {
                entries.push((a, b, c, s));
            }
        }
        entries.sort_by_key(|e| (e.0, e.1, e.2));

        let mut fused_map: BTreeMap<(u32, u32, u32), f64> = BTreeMap::new();
        for &(a, b, c, v) in &entries {
            let key = (c, a.min(b), a.max(b));
            *fused_map.entry(key).or_insert(0.0) += v;
        }
        let fused = fused_map
            .into_iter()
            .filter(|(_, v)| v.abs() >= DROP_TOL)
            .map(|((c, a, b), v)| (a, b, c, v))
            .collect();

        TrilinearTable {
            basis: basis.clone(),
            entries,
            fused,
        }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn m(&self) -> usize {
        self.basis.cutoff()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Nonzero entries `(a, b, c, T(a,b,c))` by basis position, sorted.
    pub fn entries(&self) -> &[(u32, u32, u32, f64)] {
        &self.entries
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        let key = (a as u32, b as u32, c as u32);
        match self.entries.binary_search_by_key(&key, |e| (e.0, e.1, e.2)) {
            Ok(i) => self.entries[i].3,
            Err(_) => 0.0,
        }
    }

    /// Writes the coefficients of `P_m (u . grad) u` into `out`.
    pub fn nonlinear_into(&self, c: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(a, b, k, v) in &self.fused {
            out[k as usize] += v * c[a as usize] * c[b as usize];
        }
    }

    /// Bilinear form `P_m (u . grad) w` (advecting `u`, advected `w`).
    pub fn bilinear_into(&self, u: &[f64], w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(a, b, k, v) in &self.entries {
            out[k as usize] += v * u[a as usize] * w[b as usize];
        }
    }

    pub(crate) fn check(&self, u: &SpectralField) -> Result<()> {
        if Arc::ptr_eq(&self.basis, u.basis()) || *self.basis == **u.basis() {
            Ok(())
        } else {
            Err(Error::BasisMismatch(format!(
                "field has {} modes (m={}), table has {} (m={})",
                u.len(),
                u.m(),
                self.basis.len(),
                self.m()
            )))
        }
    }
}

/// Coefficients of the projected convection term `P_m P (u . grad) u`.
pub fn nonlinear_term(u: &SpectralField, table: &TrilinearTable) -> Result<SpectralField> {
    table.check(u)?;
    let mut out = vec![0.0; u.len()];
    table.nonlinear_into(u.coeffs(), &mut out);
    SpectralField::from_coeffs(u.basis(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::mode::enumerate_modes;

    #[test]
    fn self_advection_of_a_plane_wave_vanishes() {
        for z in enumerate_modes(2).iter().filter(|z| !z.is_constant()) {
            for c in enumerate_modes(2) {
                assert_eq!(trilinear_coeff(z, z, &c), 0.0);
            }
        }
    }

    #[test]
    fn constant_target_is_zero() {
        let modes = enumerate_modes(1);
        for a in &modes {
            for b in &modes {
                for ax in 0..3 {
                    assert!(trilinear_coeff(a, b, &ModeIndex::constant(ax)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn constant_advection_is_a_shift() {
        // (e_x . grad) sqrt2 u cos(2 pi x) = -2 pi sqrt2 u sin(2 pi x)
        let b = ModeIndex::wave([1, 0, 0], 0, Parity::Cos);
        let c = ModeIndex::wave([1, 0, 0], 0, Parity::Sin);
        let v = trilinear_coeff(&ModeIndex::constant(0), &b, &c);
        assert!((v + 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn table_matches_direct_coefficients() {
        let basis = Basis::galerkin(1);
        let table = TrilinearTable::build(&basis);
        let modes = basis.modes();
        for a in 0..modes.len() {
            for b in 0..modes.len() {
                for c in 0..modes.len() {
                    let d = trilinear_coeff(&modes[a], &modes[b], &modes[c]);
                    assert!((table.get(a, b, c) - d).abs() < 1e-13);
                }
            }
        }
    }
}

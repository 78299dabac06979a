use std::collections::HashMap;
use std::sync::Arc;

use super::mode::{enumerate_modes, ModeIndex};
use crate::error::{Error, Result};

/// An ordered set of modes with cached eigenvalues.
///
/// The standard Galerkin set `B_m` comes from [`Basis::galerkin`]. Experiments that
/// need a few high frequencies without paying for the full ball use
/// [`Basis::extended`], which appends extra modes after `B_m`.
#[derive(Debug)]
pub struct Basis {
    cutoff: usize,
    galerkin_len: usize,
    modes: Vec<ModeIndex>,
    eigenvalues: Vec<f64>,
    index: HashMap<ModeIndex, usize>,
}

impl Basis {
    pub fn galerkin(m: usize) -> Arc<Basis> {
        Arc::new(Self::build(m, enumerate_modes(m)))
    }

    /// `B_m` followed by `extra` (modes already in `B_m` are skipped).
    pub fn extended(m: usize, extra: impl IntoIterator<Item = ModeIndex>) -> Arc<Basis> {
        let mut modes = enumerate_modes(m);
        let mut seen: std::collections::HashSet<ModeIndex> = modes.iter().copied().collect();
        for mode in extra {
            if seen.insert(mode) {
                modes.push(mode);
            }
        }
        Arc::new(Self::build(m, modes))
    }

    fn build(cutoff: usize, modes: Vec<ModeIndex>) -> Basis {
        let galerkin_len = enumerate_modes(cutoff).len();
        let eigenvalues = modes.iter().map(|z| z.eigenvalue()).collect();
        let index = modes.iter().enumerate().map(|(i, z)| (*z, i)).collect();
        Basis {
            cutoff,
            galerkin_len,
            modes,
            eigenvalues,
            index,
        }
    }

    /// Galerkin cutoff `m` of the underlying ball.
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn is_galerkin(&self) -> bool {
        self.modes.len() == self.galerkin_len
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> ModeIndex {
        self.modes[i]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn position(&self, mode: &ModeIndex) -> Option<usize> {
        self.index.get(mode).copied()
    }

    /// Largest |k_i| over all modes.
    pub fn max_component(&self) -> usize {
        self.modes
            .iter()
            .flat_map(|z| z.wavevector())
            .map(|c| c.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.cutoff == other.cutoff && self.modes == other.modes
    }
}

/// Norm selector for [`SpectralField::norm`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    H,
    V,
    /// `sum (1 + lambda^r) c^2`
    Sobolev(f64),
    /// `sum c^2 / (1 + lambda^r)`
    NegativeSobolev(f64),
}

/// Real coefficient vector over a [`Basis`]; a divergence-free velocity field.
#[derive(Clone, Debug)]
pub struct SpectralField {
    basis: Arc<Basis>,
    coeffs: Vec<f64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        *self.basis == *other.basis && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(basis: &Arc<Basis>) -> Self {
        SpectralField {
            basis: basis.clone(),
            coeffs: vec![0.0; basis.len()],
        }
    }

    pub fn from_coeffs(basis: &Arc<Basis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::BasisMismatch(format!(
                "{} coefficients for {} modes",
                coeffs.len(),
                basis.len()
            )));
        }
        Ok(SpectralField {
            basis: basis.clone(),
            coeffs,
        })
    }

    /// Field with a single coefficient set on `mode`.
    pub fn single(basis: &Arc<Basis>, mode: ModeIndex, value: f64) -> Result<Self> {
        let i = basis
            .position(&mode)
            .ok_or_else(|| Error::BasisMismatch(format!("mode {mode} not in basis")))?;
        let mut u = Self::zeros(basis);
        u.coeffs[i] = value;
        Ok(u)
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn m(&self) -> usize {
        self.basis.cutoff()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn get(&self, mode: &ModeIndex) -> Option<f64> {
        self.basis.position(mode).map(|i| self.coeffs[i])
    }

    pub fn same_basis(&self, other: &SpectralField) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis) || *self.basis == *other.basis
    }

    pub fn check_compatible(&self, other: &SpectralField) -> Result<()> {
        if self.same_basis(other) {
            Ok(())
        } else {
            Err(Error::BasisMismatch(format!(
                "{} modes (m={}) vs {} modes (m={})",
                self.len(),
                self.m(),
                other.len(),
                other.m()
            )))
        }
    }

    /// `L^2` inner product; orthonormality makes it the Euclidean dot product.
    pub fn dot(&self, other: &SpectralField) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(dot(&self.coeffs, &other.coeffs))
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        SpectralField {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &SpectralField) -> Result<()> {
        self.check_compatible(other)?;
        for (s, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *s += a * o;
        }
        Ok(())
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn norm_sq(&self, kind: NormKind) -> Result<f64> {
        let lam = self.basis.eigenvalues();
        let c = &self.coeffs;
        let s = match kind {
            NormKind::H => dot(c, c),
            NormKind::V => c.iter().zip(lam).map(|(c, l)| l * c * c).sum(),
            NormKind::Sobolev(r) => {
                check_order(r)?;
                c.iter().zip(lam).map(|(c, l)| (1.0 + l.powf(r)) * c * c).sum()
            }
            NormKind::NegativeSobolev(r) => {
                check_order(r)?;
                c.iter().zip(lam).map(|(c, l)| c * c / (1.0 + l.powf(r))).sum()
            }
        };
        Ok(s)
    }

    pub fn norm(&self, kind: NormKind) -> Result<f64> {
        Ok(self.norm_sq(kind)?.sqrt())
    }

    /// Homogeneous `H^{-1}` square: `sum_{lambda > 0} c^2 / lambda`, constants ignored.
    pub fn homogeneous_dual_sq(&self) -> f64 {
        homogeneous_dual_sq(&self.coeffs, self.basis.eigenvalues())
    }

    /// Largest |coefficient| on the constant modes.
    pub fn constant_part_max(&self) -> f64 {
        self.basis
            .modes()
            .iter()
            .zip(&self.coeffs)
            .filter(|(z, _)| z.is_constant())
            .map(|(_, c)| c.abs())
            .fold(0.0, f64::max)
    }
}

fn check_order(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "Sobolev order must be finite and nonnegative, got {r}; use the negative kind instead"
        )))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn homogeneous_dual_sq(c: &[f64], lam: &[f64]) -> f64 {
    c.iter()
        .zip(lam)
        .filter(|(_, &l)| l > 0.0)
        .map(|(c, l)| c * c / l)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::mode::Parity;
    use std::f64::consts::PI;

    #[test]
    fn norm_examples() {
        let b = Basis::galerkin(1);
        let c = SpectralField::single(&b, ModeIndex::constant(0), 1.0).unwrap();
        assert_eq!(c.norm(NormKind::V).unwrap(), 0.0);
        let w = SpectralField::single(&b, ModeIndex::wave([1, 0, 0], 0, Parity::Cos), 1.0).unwrap();
        assert!((w.norm(NormKind::V).unwrap() - 2.0 * PI).abs() < 1e-14);
        let h = w.norm(NormKind::NegativeSobolev(1.0)).unwrap();
        assert!((h - (1.0 + 4.0 * PI * PI).powf(-0.5)).abs() < 1e-15);
        assert!((h - 0.157).abs() < 1e-3);
        assert!(w.norm(NormKind::Sobolev(-1.0)).is_err());
    }

    #[test]
    fn extended_basis_appends() {
        let extra = ModeIndex::wave([5, 0, 0], 0, Parity::Sin);
        let b = Basis::extended(1, [extra, ModeIndex::wave([1, 0, 0], 0, Parity::Cos)]);
        assert_eq!(b.len(), 16);
        assert_eq!(b.position(&extra), Some(15));
        assert!(!b.is_galerkin());
        assert_eq!(b.max_component(), 5);
    }

    #[test]
    fn mismatched_fields_are_rejected() {
        let a = SpectralField::zeros(&Basis::galerkin(1));
        let b = SpectralField::zeros(&Basis::galerkin(2));
        assert!(a.dot(&b).is_err());
        assert!(a.dot(&SpectralField::zeros(&Basis::galerkin(1))).is_ok());
    }
}

use nalgebra::{DMatrix, DVector};

use super::time_derivative;
use crate::basis::{dot, SpectralField, TrilinearTable};
use crate::dynamics::{trapezoid_weights, Trajectory};
use crate::error::{Error, Result};

fn check_pair(phi: &Trajectory, u: &Trajectory, table: &TrilinearTable) -> Result<()> {
    u.check_aligned(phi.t0, phi.dt, phi.states.len())?;
    u.initial().check_compatible(phi.initial())?;
    table.check(u.initial())
}

fn gradient_pairing(phi: &[f64], psi: &[f64], lam: &[f64]) -> f64 {
    phi.iter().zip(psi).zip(lam).map(|((a, b), l)| l * a * b).sum()
}

/// Part of `Lambda(phi, u)` that is linear in `phi`.
fn linear_part(phi: &Trajectory, u: &Trajectory, table: &TrilinearTable) -> f64 {
    let lam = u.basis().eigenvalues();
    let w = trapezoid_weights(u.states.len());
    let dphi = time_derivative(phi);
    let mut nl = vec![0.0; lam.len()];
    let boundary = dot(u.last().coeffs(), phi.last().coeffs())
        - dot(u.initial().coeffs(), phi.initial().coeffs());
    let mut integral = 0.0;
    for i in 0..u.states.len() {
        let (ui, pi) = (u.states[i].coeffs(), phi.states[i].coeffs());
        table.nonlinear_into(ui, &mut nl);
        let density = dot(&dphi[i], ui) - gradient_pairing(pi, ui, lam) - dot(pi, &nl);
        integral += w[i] * u.dt * density;
    }
    boundary - integral
}

fn gram(a: &Trajectory, b: &Trajectory) -> f64 {
    let lam = a.basis().eigenvalues();
    let w = trapezoid_weights(a.states.len());
    a.states
        .iter()
        .zip(&b.states)
        .zip(&w)
        .map(|((x, y), w)| w * a.dt * gradient_pairing(x.coeffs(), y.coeffs(), lam))
        .sum()
}

/// Test functional
/// `<u(T),phi(T)> - <u(0),phi(0)> - int (<dphi/dt, u> - <grad phi, grad u> - <phi, (u.grad)u>)
///  - 1/2 int |grad phi|^2`.
pub fn lambda_functional(phi: &Trajectory, u: &Trajectory, table: &TrilinearTable) -> Result<f64> {
    check_pair(phi, u, table)?;
    Ok(linear_part(phi, u, table) - 0.5 * gram(phi, phi))
}

/// Maximizer of `Lambda` over the span of a dictionary.
#[derive(Clone, Debug)]
pub struct RieszFit {
    pub coefficients: Vec<f64>,
    pub value: f64,
    pub element: Trajectory,
}

/// Solves the normal equations `G a = L` with `G_ij = int <grad phi_i, grad phi_j>`
/// and `L_j` the linear part of `Lambda(phi_j, u)`; the optimum is `L . a / 2`.
pub fn riesz_optimal(dictionary: &[Trajectory], u: &Trajectory, table: &TrilinearTable) -> Result<RieszFit> {
    if dictionary.is_empty() {
        return Err(Error::InvalidParameter("empty dictionary".into()));
    }
    for phi in dictionary {
        check_pair(phi, u, table)?;
    }
    let n = dictionary.len();
    let l = DVector::from_iterator(n, dictionary.iter().map(|p| linear_part(p, u, table)));
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = gram(&dictionary[i], &dictionary[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let a = match g.clone().cholesky() {
        Some(ch) => ch.solve(&l),
        None => {
            let eps = 1e-12 * g.norm();
            g.svd(true, true)
                .solve(&l, eps)
                .map_err(|e| Error::InvalidParameter(format!("degenerate dictionary: {e}")))?
        }
    };
    let value = 0.5 * l.dot(&a);
    let basis = u.basis();
    let states = (0..u.states.len())
        .map(|i| {
            let mut c = vec![0.0; basis.len()];
            for (aj, phi) in a.iter().zip(dictionary) {
                for (x, y) in c.iter_mut().zip(phi.states[i].coeffs()) {
                    *x += aj * y;
                }
            }
            SpectralField::from_coeffs(basis, c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RieszFit {
        coefficients: a.iter().copied().collect(),
        value,
        element: Trajectory::new(u.t0, u.dt, states)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Basis;

    #[test]
    fn zero_test_function() {
        let b = Basis::galerkin(1);
        let t = TrilinearTable::build(&b);
        let u = Trajectory::from_fn(&b, 0.0, 0.01, 10, |s| vec![s; b.len()]).unwrap();
        let phi = Trajectory::from_fn(&b, 0.0, 0.01, 10, |_| vec![0.0; b.len()]).unwrap();
        assert_eq!(lambda_functional(&phi, &u, &t).unwrap(), 0.0);
        let short = Trajectory::from_fn(&b, 0.0, 0.01, 9, |_| vec![0.0; b.len()]).unwrap();
        assert!(lambda_functional(&short, &u, &t).is_err());
    }
}

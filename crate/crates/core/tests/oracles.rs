//! Cross-checks of library kernels against independent computations.

use std::f64::consts::PI;

use llns_core::basis::{
    enumerate_modes, evaluate_physical, io, polarization_vectors, project_physical, trilinear_coeff, ModeIndex,
    Parity,
};
use llns_core::dynamics::{read_trajectory, simulate, write_trajectory, IntegratorConfig, Scheme};
use llns_core::noise::{replica_rng, NoiseParams};
use llns_core::stats::Moments;
use llns_core::{Basis, NormKind, SpectralField, TrilinearTable};
use rand::Rng;

/// Value and Jacobian (`jac[i][j] = d_j e_i`) of a basis mode, from scratch.
fn mode_and_jacobian(z: &ModeIndex, x: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    match *z {
        ModeIndex::Constant { axis } => {
            let mut e = [0.0; 3];
            e[axis as usize] = 1.0;
            (e, [[0.0; 3]; 3])
        }
        ModeIndex::Wave { k, pol, parity } => {
            let u = polarization_vectors(k)[pol as usize];
            let ph = 2.0 * PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2]);
            let (f, df) = match parity {
                Parity::Cos => (ph.cos(), -ph.sin()),
                Parity::Sin => (ph.sin(), ph.cos()),
            };
            let r = 2f64.sqrt();
            let mut jac = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    jac[i][j] = r * u[i] * df * 2.0 * PI * k[j] as f64;
                }
            }
            ([r * u[0] * f, r * u[1] * f, r * u[2] * f], jac)
        }
    }
}

/// `<(e_a . grad) e_b, e_c>` by the rectangle rule on an `n^3` grid, exact for
/// trigonometric integrands of degree below `n`.
fn quadrature(a: &ModeIndex, b: &ModeIndex, c: &ModeIndex, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let x = [i as f64 * h, j as f64 * h, l as f64 * h];
                let (ea, _) = mode_and_jacobian(a, x);
                let (_, jb) = mode_and_jacobian(b, x);
                let (ec, _) = mode_and_jacobian(c, x);
                for r in 0..3 {
                    let adv: f64 = (0..3).map(|q| ea[q] * jb[r][q]).sum();
                    s += adv * ec[r];
                }
            }
        }
    }
    s * h * h * h
}

#[test]
fn trilinear_matches_quadrature_on_b1() {
    let modes = enumerate_modes(1);
    let mut worst = 0.0f64;
    for a in &modes {
        for b in &modes {
            for c in &modes {
                let q = quadrature(a, b, c, 8);
                worst = worst.max((trilinear_coeff(a, b, c) - q).abs());
            }
        }
    }
    assert!(worst < 1e-12, "worst {worst}");
}

#[test]
fn trilinear_matches_quadrature_on_sampled_b2_triples() {
    let modes = enumerate_modes(2);
    let table = TrilinearTable::build(&Basis::galerkin(2));
    let mut rng = replica_rng(17, 0);
    for _ in 0..150 {
        let (i, j, k) = (
            rng.random_range(0..modes.len()),
            rng.random_range(0..modes.len()),
            rng.random_range(0..modes.len()),
        );
        let q = quadrature(&modes[i], &modes[j], &modes[k], 16);
        assert!((trilinear_coeff(&modes[i], &modes[j], &modes[k]) - q).abs() < 1e-11);
        assert!((table.get(i, j, k) - q).abs() < 1e-11);
    }
}

#[test]
fn modes_are_orthonormal_and_divergence_free() {
    let modes = enumerate_modes(2);
    let n = 6;
    let h = 1.0 / n as f64;
    let mut gram = vec![0.0; modes.len() * modes.len()];
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let x = [i as f64 * h, j as f64 * h, l as f64 * h];
                let vals: Vec<_> = modes.iter().map(|z| mode_and_jacobian(z, x)).collect();
                for (a, (va, ja)) in vals.iter().enumerate() {
                    assert!((ja[0][0] + ja[1][1] + ja[2][2]).abs() < 1e-12);
                    for (b, (vb, _)) in vals.iter().enumerate() {
                        gram[a * modes.len() + b] += (va[0] * vb[0] + va[1] * vb[1] + va[2] * vb[2]) * h * h * h;
                    }
                }
            }
        }
    }
    for a in 0..modes.len() {
        for b in 0..modes.len() {
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((gram[a * modes.len() + b] - want).abs() < 1e-12, "{a} {b}");
        }
    }
}

#[test]
fn physical_round_trip_and_parseval() {
    let b = Basis::galerkin(2);
    let mut rng = replica_rng(18, 0);
    for _ in 0..5 {
        let u = SpectralField::from_coeffs(&b, (0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let v = evaluate_physical(&u, 6).unwrap();
        let quad = v.l2_norm_sq();
        let h = u.norm_sq(NormKind::H).unwrap();
        assert!((quad - h).abs() < 1e-10 * h, "{quad} {h}");
        let back = project_physical(&v, &b);
        for (x, y) in back.coeffs().iter().zip(u.coeffs()) {
            assert!((x - y).abs() < 1e-12);
        }
        // pointwise against the scratch evaluation
        let p = v.point(1, 4, 2);
        let mut want = [0.0; 3];
        for (z, c) in b.modes().iter().zip(u.coeffs()) {
            let (e, _) = mode_and_jacobian(z, p);
            for i in 0..3 {
                want[i] += c * e[i];
            }
        }
        let got = v.at(1, 4, 2);
        for i in 0..3 {
            assert!((got[i] - want[i]).abs() < 1e-12);
        }
    }
    let u = SpectralField::zeros(&b);
    assert!(evaluate_physical(&u, 5).is_err());
}

#[test]
fn exponential_scheme_has_exact_ou_moments() {
    // without convection each mode is an Ornstein-Uhlenbeck process
    let b = Basis::galerkin(1);
    let t = TrilinearTable::build(&b);
    let mode = ModeIndex::wave([1, 0, 0], 1, Parity::Sin);
    let j = b.position(&mode).unwrap();
    let lam = mode.eigenvalue();
    let eps = 0.4;
    let p = NoiseParams::new(eps, 0.0, 1.5, 1).unwrap();
    // coarse step: the scheme is exact in distribution regardless of dt
    let cfg = IntegratorConfig::new(0.01, 0.05).unwrap().linear_only();
    let u0 = SpectralField::single(&b, mode, 1.0).unwrap();
    let mut m1 = Moments::new();
    let mut m2 = Moments::new();
    for r in 0..40_000 {
        let traj = simulate(&u0, &p, &cfg, &t, None, &mut replica_rng(19, r)).unwrap();
        let c = traj.last().coeffs()[j];
        m1.push(c);
        m2.push(c * c);
    }
    let mean = (-lam * 0.05f64).exp();
    let var = 0.5 * eps * (1.0 - (-2.0 * lam * 0.05f64).exp());
    assert!(m1.z_score(mean).abs() < 4.0, "{}", m1.z_score(mean));
    assert!(m2.z_score(var + mean * mean).abs() < 4.0, "{}", m2.z_score(var + mean * mean));
}

#[test]
fn semi_implicit_scheme_converges_to_first_order() {
    let b = Basis::galerkin(1);
    let t = TrilinearTable::build(&b);
    let mut rng = replica_rng(20, 0);
    let u0 = SpectralField::from_coeffs(
        &b,
        (0..b.len()).map(|i| if i < 3 { 0.0 } else { rng.random_range(-1.0..1.0) }).collect(),
    )
    .unwrap();
    let p = NoiseParams::new(0.0, 0.0, 1.5, 1).unwrap();
    let run = |dt: f64, scheme| {
        let cfg = IntegratorConfig::new(dt, 0.1).unwrap().with_scheme(scheme);
        simulate(&u0, &p, &cfg, &t, None, &mut replica_rng(0, 0)).unwrap().last().clone()
    };
    let reference = run(1e-5, Scheme::ExponentialEuler);
    let err = |dt| run(dt, Scheme::SemiImplicitEuler).sub(&reference).unwrap().norm(NormKind::H).unwrap();
    let (e1, e2) = (err(2e-3), err(1e-3));
    let order = (e1 / e2).log2();
    assert!((order - 1.0).abs() < 0.15, "order {order}");
}

#[test]
fn csv_round_trips_are_exact() {
    let b = Basis::galerkin(2);
    let t = TrilinearTable::build(&b);
    let p = NoiseParams::new(0.3, 0.01, 1.5, 2).unwrap();
    let cfg = IntegratorConfig::new(1e-3, 0.01).unwrap();
    let mut rng = replica_rng(21, 0);
    let u0 = SpectralField::from_coeffs(&b, (0..b.len()).map(|_| rng.random::<f64>() / 3.0).collect()).unwrap();
    let traj = simulate(&u0, &p, &cfg, &t, None, &mut rng).unwrap();
    let mut buf = Vec::new();
    write_trajectory(&traj, &mut buf).unwrap();
    let back = read_trajectory(&buf[..]).unwrap();
    assert_eq!(back.t0, traj.t0);
    assert_eq!(back.dt, traj.dt);
    for (a, b) in back.states.iter().zip(&traj.states) {
        assert_eq!(a.coeffs(), b.coeffs());
    }
    let mut buf = Vec::new();
    io::write_field(&u0, &mut buf).unwrap();
    let f = io::read_field(&buf[..]).unwrap();
    assert_eq!(f.coeffs(), u0.coeffs());
    assert_eq!(f.basis().modes(), u0.basis().modes());
}

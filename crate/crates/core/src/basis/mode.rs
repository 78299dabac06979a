use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

/// Trigonometric parity of a real Fourier mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parity {
    Cos,
    Sin,
}

impl Parity {
    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Cos => "cos",
            Parity::Sin => "sin",
        }
    }
}

/// One real divergence-free basis function of the 3-torus.
///
/// Wave modes are `sqrt(2) u cos(2 pi k.x)` or `sqrt(2) u sin(2 pi k.x)` where `u`
/// is one of two fixed unit vectors orthogonal to `k`. Constant modes are the unit
/// vectors `e_axis`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModeIndex {
    Constant { axis: u8 },
    Wave { k: [i32; 3], pol: u8, parity: Parity },
}

impl ModeIndex {
    /// Builds a wave mode; `k` must lie in the canonical half-lattice.
    pub fn wave(k: [i32; 3], pol: u8, parity: Parity) -> Self {
        assert!(is_canonical(k), "wavevector {k:?} is not canonical");
        assert!(pol < 2, "polarization must be 0 or 1");
        ModeIndex::Wave { k, pol, parity }
    }

    pub fn constant(axis: u8) -> Self {
        assert!(axis < 3, "axis must be 0, 1 or 2");
        ModeIndex::Constant { axis }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ModeIndex::Constant { .. })
    }

    /// Wavevector; zero for constant modes.
    pub fn wavevector(&self) -> [i32; 3] {
        match *self {
            ModeIndex::Constant { .. } => [0, 0, 0],
            ModeIndex::Wave { k, .. } => k,
        }
    }

    pub fn k_squared(&self) -> i64 {
        norm_sq(self.wavevector())
    }

    /// Stokes eigenvalue `4 pi^2 |k|^2`.
    pub fn eigenvalue(&self) -> f64 {
        4.0 * PI * PI * self.k_squared() as f64
    }

    /// Unit direction of the mode's velocity.
    pub fn direction(&self) -> [f64; 3] {
        match *self {
            ModeIndex::Constant { axis } => {
                let mut e = [0.0; 3];
                e[axis as usize] = 1.0;
                e
            }
            ModeIndex::Wave { k, pol, .. } => polarization_vectors(k)[pol as usize],
        }
    }

    /// Pointwise value of the basis function at `x`.
    pub fn evaluate(&self, x: [f64; 3]) -> [f64; 3] {
        let d = self.direction();
        let s = match *self {
            ModeIndex::Constant { .. } => 1.0,
            ModeIndex::Wave { k, parity, .. } => {
                let phase = 2.0 * PI * dot_i(k, x);
                match parity {
                    Parity::Cos => 2f64.sqrt() * phase.cos(),
                    Parity::Sin => 2f64.sqrt() * phase.sin(),
                }
            }
        };
        [s * d[0], s * d[1], s * d[2]]
    }

    fn sort_key(&self) -> (u8, i64, [i32; 3], u8, Parity) {
        match *self {
            ModeIndex::Constant { axis } => (0, 0, [0; 3], axis, Parity::Cos),
            ModeIndex::Wave { k, pol, parity } => (1, norm_sq(k), k, pol, parity),
        }
    }
}

impl Ord for ModeIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for ModeIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ModeIndex::Constant { axis } => write!(f, "const[{axis}]"),
            ModeIndex::Wave { k, pol, parity } => write!(
                f,
                "({},{},{})/{}/{}",
                k[0],
                k[1],
                k[2],
                pol,
                parity.as_str()
            ),
        }
    }
}

pub(crate) fn norm_sq(k: [i32; 3]) -> i64 {
    k.iter().map(|&c| (c as i64) * (c as i64)).sum()
}

fn dot_i(k: [i32; 3], x: [f64; 3]) -> f64 {
    k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2]
}

/// True when the first nonzero component of `k` is positive.
pub fn is_canonical(k: [i32; 3]) -> bool {
    match k.iter().find(|&&c| c != 0) {
        Some(&c) => c > 0,
        None => false,
    }
}

/// Maps `k` to its canonical representative; the sign is -1 when `k` was flipped.
/// Zero maps to itself with sign +1.
pub fn canonicalize(k: [i32; 3]) -> ([i32; 3], i32) {
    if k == [0, 0, 0] || is_canonical(k) {
        (k, 1)
    } else {
        ([-k[0], -k[1], -k[2]], -1)
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalized(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// The two orthonormal polarization vectors attached to a nonzero wavevector.
pub fn polarization_vectors(k: [i32; 3]) -> [[f64; 3]; 2] {
    assert!(k != [0, 0, 0], "zero wavevector has no polarization");
    let kf = [k[0] as f64, k[1] as f64, k[2] as f64];
    let a = if k[0] == 0 && k[1] == 0 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let u1 = normalized(cross(kf, a));
    let u2 = normalized(cross(kf, u1));
    [u1, u2]
}

/// Leray projection `(I - k k^T / |k|^2) v` of a single Fourier component.
pub fn leray_project(k: [i32; 3], v: [f64; 3]) -> [f64; 3] {
    assert!(k != [0, 0, 0], "Leray projection needs a nonzero wavevector");
    let kf = [k[0] as f64, k[1] as f64, k[2] as f64];
    let kk = norm_sq(k) as f64;
    let s = (kf[0] * v[0] + kf[1] * v[1] + kf[2] * v[2]) / kk;
    [v[0] - s * kf[0], v[1] - s * kf[1], v[2] - s * kf[2]]
}

/// Canonical wavevectors with `0 < |k| <= m`, sorted by `(|k|^2, k)`.
pub fn half_lattice(m: usize) -> Vec<[i32; 3]> {
    let r = m as i32;
    let r2 = (m * m) as i64;
    let mut out = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            for c in -r..=r {
                let k = [a, b, c];
                let s = norm_sq(k);
                if s > 0 && s <= r2 && is_canonical(k) {
                    out.push(k);
                }
            }
        }
    }
    out.sort_by_key(|&k| (norm_sq(k), k));
    out
}

/// The four wave modes sharing wavevector `k`, in enumeration order.
pub fn modes_of(k: [i32; 3]) -> [ModeIndex; 4] {
    [
        ModeIndex::wave(k, 0, Parity::Cos),
        ModeIndex::wave(k, 0, Parity::Sin),
        ModeIndex::wave(k, 1, Parity::Cos),
        ModeIndex::wave(k, 1, Parity::Sin),
    ]
}

/// Sorted enumeration of the Galerkin mode set `B_m`.
pub fn enumerate_modes(m: usize) -> Vec<ModeIndex> {
    let mut out: Vec<ModeIndex> = (0..3).map(ModeIndex::constant).collect();
    for k in half_lattice(m) {
        out.extend(modes_of(k));
    }
    out
}

/// Stokes eigenvalue of a mode.
pub fn eigenvalue(mode: &ModeIndex) -> f64 {
    mode.eigenvalue()
}

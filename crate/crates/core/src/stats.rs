//! Streaming moment accumulation and z-scores.

use serde::{Deserialize, Serialize};

/// Welford accumulator for mean and variance; merges are associative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// `(mean - target) / se`; zero when both the deviation and the error vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        z_score(self.mean - target, self.std_error())
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

pub fn z_score(deviation: f64, se: f64) -> f64 {
    if deviation == 0.0 {
        0.0
    } else if se > 0.0 {
        deviation / se
    } else {
        f64::INFINITY.copysign(deviation)
    }
}

/// Estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn merge_matches_sequential(xs in prop::collection::vec(-100.0f64..100.0, 2..60), cut in 0usize..60) {
            let cut = cut.min(xs.len());
            let all: Moments = xs.iter().copied().collect();
            let mut a: Moments = xs[..cut].iter().copied().collect();
            let b: Moments = xs[cut..].iter().copied().collect();
            a.merge(&b);
            prop_assert_eq!(a.n, all.n);
            prop_assert!((a.mean - all.mean).abs() < 1e-9);
            prop_assert!((a.variance() - all.variance()).abs() < 1e-7 * (1.0 + all.variance()));
        }
    }

    #[test]
    fn known_values() {
        let m: Moments = [1.0, 2.0, 3.0, 4.0].into_iter().collect();
        assert_eq!(m.mean, 2.5);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(z_score(0.0, 0.0), 0.0);
    }
}

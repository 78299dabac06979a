//! Monte Carlo experiments around the Galerkin SDE: Gaussian initial data,
//! stationarity and time-reversal tests, Girsanov tilts, the high-frequency
//! blowup family and rare-event estimates.
//!
//! Replicas run in parallel; replica `r` draws from stream `r` of the master
//! seed and results are folded in replica order, so reports do not depend on
//! the thread count.

mod blowup;
mod gaussian;
mod rare_event;
mod reversal;
mod stationarity;
mod tilt;

use rayon::prelude::*;

use crate::basis::{Basis, SpectralField};
use crate::error::{Error, Result};
use crate::noise::NoiseParams;

pub use blowup::{blowup_family, blowup_pulse, BlowupReport};
pub use gaussian::{
    exp_moment_bound, exp_moment_closed_form, gaussian_exp_moment, mode_exp_moment,
    sample_gaussian_initial, ExpMomentReport,
};
pub use rare_event::{rare_event_estimate, RareEventRow};
pub use reversal::{time_reversal_test, ReversalReport, ReversalSettings, TripleZ, LAG_PAIRS, REVERSAL_Z};
pub use stationarity::{stationarity_test, StationarityReport, STATIONARITY_Z};
pub use tilt::{tilted_simulate, TiltReport, TiltSampler};

fn require_white(params: &NoiseParams) -> Result<()> {
    if params.delta != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "the stationary Gaussian law needs delta = 0, got {}",
            params.delta
        )));
    }
    Ok(())
}

/// Runs `job` for every replica in parallel, in chunks, and hands the results to
/// `fold` in replica order. Chunking bounds the memory held at once.
fn fold_replicas<T: Send>(
    replicas: usize,
    job: impl Fn(usize) -> Result<T> + Sync,
    mut fold: impl FnMut(usize, T),
) -> Result<()> {
    const CHUNK: usize = 256;
    let mut start = 0;
    while start < replicas {
        let end = (start + CHUNK).min(replicas);
        let out: Vec<T> = (start..end).into_par_iter().map(&job).collect::<Result<_>>()?;
        for (i, t) in out.into_iter().enumerate() {
            fold(start + i, t);
        }
        start = end;
    }
    Ok(())
}

/// Copies coefficients of `u` onto the modes of `basis`; modes absent from `u`
/// are zero and modes absent from `basis` are dropped.
pub fn transfer(u: &SpectralField, basis: &std::sync::Arc<Basis>) -> SpectralField {
    let c = basis.modes().iter().map(|z| u.get(z).unwrap_or(0.0)).collect();
    SpectralField::from_coeffs(basis, c).expect("length matches basis")
}

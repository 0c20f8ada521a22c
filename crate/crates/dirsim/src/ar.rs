//! Generic acceptance-rejection engine.
//!
//! Given unnormalized target and envelope densities with a known constant
//! `M*` such that `f*(x) <= M* g*(x)` for every point the proposal can emit,
//! repeat: draw `x ~ g` and `w ~ Unif(0,1)`, accept `x` when
//! `log w < log f*(x) - log M* - log g*(x)`. Everything runs in log space so
//! concentrations up to 1e6 neither overflow nor underflow.

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Slack added to `log M*` before a proposal is declared a bound violation.
/// Large enough to absorb round-off at the tangency point, far too small to
/// mask a genuinely broken envelope.
pub const BOUND_SLACK: f64 = 1e-9;

/// Hard cap on proposals per batch; hitting it means the envelope is
/// pathological and we fail loudly instead of spinning.
pub const TRIAL_CAP: u64 = 1_000_000_000;

/// An envelope pairing: proposal sampler, both unnormalized log densities and
/// the log bound constant.
pub trait Envelope {
    type Point;

    /// Draws one point from the envelope distribution `g`.
    fn propose(&self, rng: &mut RngStream) -> Self::Point;

    /// `log f*(x)`.
    fn log_target_unnorm(&self, x: &Self::Point) -> f64;

    /// `log g*(x)`.
    fn log_envelope_unnorm(&self, x: &Self::Point) -> f64;

    /// `log M*` with `f*(x) <= M* g*(x)`.
    fn log_mstar(&self) -> f64;
}

/// Trial bookkeeping for one or more acceptance-rejection batches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AcceptStats {
    pub trials: u64,
    pub accepts: u64,
}

impl AcceptStats {
    /// Empirical acceptance rate, the estimate of 1/M.
    pub fn efficiency(&self) -> f64 {
        self.accepts as f64 / self.trials as f64
    }

    /// Merges stats from a parallel shard; counts are additive.
    pub fn merge(&mut self, other: AcceptStats) {
        self.trials += other.trials;
        self.accepts += other.accepts;
    }
}

/// Empirical estimate of M, the geometric mean number of trials per sample.
pub fn expected_trials(stats: &AcceptStats) -> Result<f64> {
    if stats.accepts == 0 {
        return Err(Error::NoAccepts);
    }
    Ok(stats.trials as f64 / stats.accepts as f64)
}

fn ar_step<E: Envelope>(envelope: &E, rng: &mut RngStream) -> Result<Option<E::Point>> {
    let x = envelope.propose(rng);
    let log_ratio = envelope.log_target_unnorm(&x) - envelope.log_envelope_unnorm(&x);
    let log_mstar = envelope.log_mstar();
    if log_ratio > log_mstar + BOUND_SLACK {
        return Err(Error::BoundViolation {
            log_ratio,
            log_mstar,
        });
    }
    let w = rng.next_uniform();
    if w.ln() < log_ratio - log_mstar {
        Ok(Some(x))
    } else {
        Ok(None)
    }
}

fn ar_sample_capped<E: Envelope>(
    envelope: &E,
    rng: &mut RngStream,
    n: usize,
    cap: u64,
) -> Result<(Vec<E::Point>, AcceptStats)> {
    let mut samples = Vec::with_capacity(n);
    let mut stats = AcceptStats::default();
    while samples.len() < n {
        if stats.trials >= cap {
            return Err(Error::TrialCapExceeded {
                cap,
                accepted: samples.len(),
                requested: n,
            });
        }
        stats.trials += 1;
        if let Some(x) = ar_step(envelope, rng)? {
            stats.accepts += 1;
            samples.push(x);
        }
    }
    Ok((samples, stats))
}

/// Draws `n` exact samples from the normalized target, recording every trial.
pub fn ar_sample<E: Envelope>(
    envelope: &E,
    rng: &mut RngStream,
    n: usize,
) -> Result<(Vec<E::Point>, AcceptStats)> {
    ar_sample_capped(envelope, rng, n, TRIAL_CAP)
}

/// Runs a fixed number of trials and counts acceptances, discarding the
/// samples. This is how efficiency tables are estimated.
pub fn ar_run_trials<E: Envelope>(
    envelope: &E,
    rng: &mut RngStream,
    trials: u64,
) -> Result<AcceptStats> {
    let mut stats = AcceptStats::default();
    for _ in 0..trials {
        stats.trials += 1;
        if ar_step(envelope, rng)?.is_some() {
            stats.accepts += 1;
        }
    }
    Ok(stats)
}

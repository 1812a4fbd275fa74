//! A process that is non-negative until it stops and drops by 1 in
//! expectation at every step, yet stops with probability below 1/2.
//! Pointwise non-negativity plus expected decrease is therefore not enough
//! for almost-sure termination.
//!
//! `Y_0 = 1`. At step `t`, with probability `p_t = 2^-t / 4` the process
//! moves to `Y_t - 2/p_t`, which is negative; otherwise it moves to
//! `Y_t + 1/(1 - p_t)`. The stopping time is finite exactly when some down
//! step happens.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{wilson_interval, with_pool, RunRng, SimError};

/// Steps simulated per run. The chance of a first down step at or after
/// this point is below `2^-(STEPS - 2) / 4`.
pub const STEPS: u32 = 64;

fn p_down(t: u32) -> f64 {
    0.25 * 0.5f64.powi(t as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleEstimate {
    pub runs: u64,
    pub stopped: u64,
    pub frequency: f64,
    pub interval: (f64, f64),
    /// Series value of `P[T < ∞]` truncated at `STEPS` terms.
    pub series: f64,
    pub steps_per_run: u32,
    /// Upper bound on the probability mass ignored by truncation.
    pub truncation_bound: f64,
}

/// Runs the process once; `Some(t)` is the stopping step.
fn one_run(rng: &mut impl Rng) -> Option<u32> {
    let mut y = 1.0f64;
    for t in 0..STEPS {
        if y < 0.0 {
            return Some(t);
        }
        let p = p_down(t);
        if rng.random::<f64>() < p {
            y -= 2.0 / p;
        } else {
            y += 1.0 / (1.0 - p);
        }
    }
    (y < 0.0).then_some(STEPS)
}

/// `Σ_{t<terms} p_t Π_{s<t} (1 - p_s)` in floating point.
pub fn counterexample_series(terms: u32) -> f64 {
    let mut survive = 1.0;
    let mut total = 0.0;
    for t in 0..terms {
        let p = p_down(t);
        total += p * survive;
        survive *= 1.0 - p;
    }
    total
}

pub fn counterexample_process(
    seed: u64,
    runs: u64,
    threads: Option<usize>,
) -> Result<CounterexampleEstimate, SimError> {
    let stopped = with_pool(threads, || {
        (0..runs)
            .into_par_iter()
            .filter(|&r| one_run(&mut RunRng::new(seed, r).program).is_some())
            .count() as u64
    })?;
    Ok(CounterexampleEstimate {
        runs,
        stopped,
        frequency: if runs == 0 {
            0.0
        } else {
            stopped as f64 / runs as f64
        },
        interval: wilson_interval(stopped, runs),
        series: counterexample_series(STEPS),
        steps_per_run: STEPS,
        truncation_bound: 0.5f64.powi(STEPS as i32 - 2) / 4.0,
    })
}

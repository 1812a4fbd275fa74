//! Dynamic checks of invariants and certificates along simulated runs.
//! A clean audit is evidence, not proof.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{Certificate, Invariant, LocId, Pcfg};

use super::{polyhedron_holds, Engine, RunRng, Scheduler, Trace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantViolation {
    pub run: u64,
    pub step: usize,
    pub location: String,
    pub state: Vec<f64>,
}

/// Every visited state outside the invariant.
pub fn audit_invariant(p: &Pcfg, inv: &Invariant, traces: &[Trace]) -> Vec<InvariantViolation> {
    let mut out = Vec::new();
    for t in traces {
        for (step, (l, x)) in t.states.iter().enumerate() {
            if !polyhedron_holds(&inv.at(*l), x) {
                out.push(InvariantViolation {
                    run: t.report.run,
                    step,
                    location: p.locations[*l].clone(),
                    state: x.clone(),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlagKind {
    /// A component at or below the level is negative at a visited state.
    Negative,
    /// The resampled mean of the ranking component does not drop by 1.
    NoDecrease,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsFlag {
    pub kind: FlagKind,
    pub run: u64,
    pub step: usize,
    pub transition: String,
    pub component: usize,
    pub value: f64,
    /// Bound the value was compared with (0 or `η_j − 1`).
    pub bound: f64,
    /// Standard error of a resampled mean; 0 for pointwise checks.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsAudit {
    pub checked_steps: usize,
    pub resampled_steps: usize,
    pub flags: Vec<DynamicsFlag>,
}

#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub resamples: usize,
    /// Resample every `stride`-th step of each trace.
    pub stride: usize,
    /// Flag when the mean exceeds the bound by this many standard errors.
    pub sigmas: f64,
    pub seed: u64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            resamples: 200,
            stride: 10,
            sigmas: 5.0,
            seed: 0,
        }
    }
}

/// Float slack for pointwise comparisons of exactly representable values.
const EPS: f64 = 1e-9;

/// Along every trace, for the transition taken at each step with level `j`:
/// components `1..=j` must be non-negative at the current state, and on a
/// subsample of steps the mean of component `j` over resampled successors
/// must not exceed its current value minus one.
///
/// Resampling uses the trace's scheduler for nondeterministic values, which
/// only needs to stay below the maximum the checker verified.
pub fn audit_certificate_dynamics(
    engine: &Engine<'_>,
    c: &Certificate,
    sched: &Scheduler,
    traces: &[Trace],
    opts: &AuditOptions,
) -> DynamicsAudit {
    let p = engine.p;
    let eta = |l: LocId, x: &[f64], j: usize| c.component(l, j).to_f64().eval(x);
    let mut flags = Vec::new();
    let mut checked = 0;
    let mut resampled = 0;
    for t in traces {
        let mut seeder =
            ChaCha8Rng::seed_from_u64(opts.seed ^ t.report.run.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for (step, &k) in t.transitions.iter().enumerate() {
            let (l, x) = &t.states[step];
            let lev = c.levels[k];
            if lev == 0 {
                continue;
            }
            checked += 1;
            let id = &p.transitions[k].id;
            for j in 1..=lev {
                let v = eta(*l, x, j);
                if v < -EPS {
                    flags.push(DynamicsFlag {
                        kind: FlagKind::Negative,
                        run: t.report.run,
                        step,
                        transition: id.clone(),
                        component: j,
                        value: v,
                        bound: 0.0,
                        std_error: 0.0,
                    });
                }
            }
            if opts.stride == 0 || step % opts.stride != 0 || opts.resamples == 0 {
                continue;
            }
            resampled += 1;
            let mut rng = RunRng::new(seeder.random(), 0);
            let vals: Vec<f64> = (0..opts.resamples)
                .map(|_| {
                    let (l2, y) = engine.fire(k, x, sched, &mut rng);
                    eta(l2, &y, lev)
                })
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let se = (var / n).sqrt();
            let bound = eta(*l, x, lev) - 1.0;
            if mean > bound + opts.sigmas * se + EPS {
                flags.push(DynamicsFlag {
                    kind: FlagKind::NoDecrease,
                    run: t.report.run,
                    step,
                    transition: id.clone(),
                    component: lev,
                    value: mean,
                    bound,
                    std_error: se,
                });
            }
        }
    }
    DynamicsAudit {
        checked_steps: checked,
        resampled_steps: resampled,
        flags,
    }
}

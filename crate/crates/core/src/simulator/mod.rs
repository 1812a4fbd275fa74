//! Monte-Carlo execution of pCFGs.
//!
//! Every run owns two ChaCha8 streams derived from `(seed, run)`: the
//! program stream feeds branching coins and samples, the scheduler stream
//! feeds transition choices and nondeterministic values. Keeping them apart
//! lets a source-level interpreter replay the same randomness.

mod audit;
mod counterexample;
mod interp;
mod sample;

pub use audit::{
    audit_certificate_dynamics, audit_invariant, AuditOptions, DynamicsAudit, DynamicsFlag,
    FlagKind, InvariantViolation,
};
pub use counterexample::{counterexample_process, counterexample_series, CounterexampleEstimate};
pub use interp::{interpret, InterpReport};
pub use sample::{CustomSampler, SamplerRegistry};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linear::{LinExpr, Relation};
use crate::model::{Certificate, LocId, Pcfg, TransitionKind, UpdateElement, VarId};
use crate::num::Scalar;
use sample::Sampler;

pub const DEFAULT_ESTIMATION_CAP: u64 = 1_000_000;
pub const DEFAULT_AUDIT_CAP: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("no sampler registered under '{0}'")]
    UnknownSampler(String),
    #[error("invalid distribution: {0}")]
    BadDistribution(String),
    #[error("initial valuation has {got} values, program has {want} variables")]
    BadInit { got: usize, want: usize },
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
}

/// How the scheduler picks among enabled transitions.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    UniformRandom,
    /// First enabled transition in this order of transition indices; the
    /// rest follow in index order.
    FixedPriority(Vec<usize>),
    /// Greedy against a certificate: the choice whose expected successor has
    /// the lexicographically largest value. Nondeterministic assignments take
    /// the endpoint that does the same.
    Adversarial(Box<Certificate>),
}

/// How nondeterministic assignments are resolved outside adversarial mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NondetStrategy {
    #[default]
    Uniform,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scheduler {
    pub strategy: Strategy,
    pub nondet: NondetStrategy,
}

impl Scheduler {
    pub fn uniform() -> Self {
        Scheduler {
            strategy: Strategy::UniformRandom,
            nondet: NondetStrategy::Uniform,
        }
    }

    pub fn fixed(order: Vec<usize>) -> Self {
        Scheduler {
            strategy: Strategy::FixedPriority(order),
            nondet: NondetStrategy::Uniform,
        }
    }

    pub fn adversarial(c: Certificate) -> Self {
        Scheduler {
            strategy: Strategy::Adversarial(Box::new(c)),
            nondet: NondetStrategy::Uniform,
        }
    }
}

/// The two random streams of one run.
pub struct RunRng {
    pub program: ChaCha8Rng,
    pub scheduler: ChaCha8Rng,
}

impl RunRng {
    pub fn new(seed: u64, run: u64) -> Self {
        let mut program = ChaCha8Rng::seed_from_u64(seed);
        program.set_stream(2 * run);
        let mut scheduler = ChaCha8Rng::seed_from_u64(seed);
        scheduler.set_stream(2 * run + 1);
        RunRng { program, scheduler }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryReport {
    pub run: u64,
    pub terminated: bool,
    pub stuck: bool,
    pub steps: u64,
    pub final_location: String,
    pub final_state: Vec<f64>,
}

/// A run with everything it visited.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub report: TrajectoryReport,
    /// `states[i]` is the state before step `i`; one more than `transitions`.
    pub states: Vec<(LocId, Vec<f64>)>,
    pub transitions: Vec<usize>,
    /// Certificate values at each state when one was supplied.
    pub eta: Option<Vec<Vec<f64>>>,
}

/// Guard atom `lhs rel 0` with float coefficients.
#[derive(Debug, Clone)]
struct Atom {
    lhs: LinExpr<f64>,
    rel: Relation,
}

impl Atom {
    fn holds(&self, x: &[f64]) -> bool {
        let v = self.lhs.eval(x);
        match self.rel {
            Relation::Le => v <= 0.0,
            Relation::Lt => v < 0.0,
            Relation::Eq => v == 0.0,
        }
    }
}

#[derive(Clone)]
enum Step {
    Pb {
        p_first: f64,
        dests: [LocId; 2],
    },
    Npb {
        dest: LocId,
        guard: Vec<Vec<Atom>>,
        update: Update,
    },
}

#[derive(Clone)]
enum Update {
    None,
    Expr {
        target: VarId,
        base: LinExpr<f64>,
        sample: Option<(f64, Sampler)>,
    },
    Nondet {
        target: VarId,
        lo: f64,
        hi: f64,
    },
}

/// A pCFG with float guards and updates, ready to execute.
#[derive(Clone)]
pub struct Engine<'a> {
    pub p: &'a Pcfg,
    steps: Vec<Step>,
}

fn atoms(poly: &crate::QPolyhedron) -> Vec<Atom> {
    poly.constraints
        .iter()
        .map(|c| Atom {
            lhs: c.lhs.to_f64(),
            rel: c.rel,
        })
        .collect()
}

/// Float guard evaluation with exact comparisons.
pub fn polyhedron_holds(poly: &crate::QPolyhedron, x: &[f64]) -> bool {
    atoms(poly).iter().all(|a| a.holds(x))
}

impl<'a> Engine<'a> {
    pub fn new(p: &'a Pcfg, registry: &SamplerRegistry) -> Result<Self, SimError> {
        let steps = p
            .transitions
            .iter()
            .map(|t| {
                Ok(match &t.kind {
                    TransitionKind::Pb { branches } => Step::Pb {
                        p_first: branches[0].1.to_f64_lossy(),
                        dests: [branches[0].0, branches[1].0],
                    },
                    TransitionKind::Npb {
                        dest,
                        guard,
                        update,
                    } => Step::Npb {
                        dest: *dest,
                        guard: guard.disjuncts().iter().map(atoms).collect(),
                        update: match update {
                            UpdateElement::NoUpdate => Update::None,
                            UpdateElement::Expr {
                                target,
                                base,
                                sample,
                            } => Update::Expr {
                                target: *target,
                                base: base.to_f64(),
                                sample: match sample {
                                    Some((c, d)) => Some((c.to_f64_lossy(), registry.compile(d)?)),
                                    None => None,
                                },
                            },
                            UpdateElement::Nondet { target, lo, hi } => Update::Nondet {
                                target: *target,
                                lo: lo.to_f64_lossy(),
                                hi: hi.to_f64_lossy(),
                            },
                        },
                    },
                })
            })
            .collect::<Result<_, SimError>>()?;
        Ok(Engine { p, steps })
    }

    pub fn is_enabled(&self, k: usize, x: &[f64]) -> bool {
        match &self.steps[k] {
            Step::Pb { .. } => true,
            Step::Npb { guard, .. } => guard.iter().any(|d| d.iter().all(|a| a.holds(x))),
        }
    }

    pub fn enabled(&self, loc: LocId, x: &[f64]) -> Vec<usize> {
        self.p
            .outgoing(loc)
            .map(|(k, _)| k)
            .filter(|&k| self.is_enabled(k, x))
            .collect()
    }

    fn choose(
        &self,
        loc: LocId,
        x: &[f64],
        en: &[usize],
        sched: &Scheduler,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        if en.len() == 1 {
            return en[0];
        }
        match &sched.strategy {
            Strategy::UniformRandom => en[rng.random_range(0..en.len())],
            Strategy::FixedPriority(order) => order
                .iter()
                .copied()
                .find(|k| en.contains(k))
                .unwrap_or(en[0]),
            Strategy::Adversarial(c) => {
                let mut best = en[0];
                let mut best_v = self.expected_eta(c, en[0], loc, x, sched);
                for &k in &en[1..] {
                    let v = self.expected_eta(c, k, loc, x, sched);
                    if lex_greater(&v, &best_v) {
                        best = k;
                        best_v = v;
                    }
                }
                best
            }
        }
    }

    /// Certificate value after `k` with samples at their means and
    /// nondeterminism resolved adversarially.
    fn expected_eta(
        &self,
        c: &Certificate,
        k: usize,
        _loc: LocId,
        x: &[f64],
        _s: &Scheduler,
    ) -> Vec<f64> {
        let eval = |l: LocId, y: &[f64]| -> Vec<f64> {
            c.components[l].iter().map(|e| e.to_f64().eval(y)).collect()
        };
        match &self.steps[k] {
            Step::Pb { p_first, dests } => {
                let a = eval(dests[0], x);
                let b = eval(dests[1], x);
                a.iter()
                    .zip(&b)
                    .map(|(a, b)| p_first * a + (1.0 - p_first) * b)
                    .collect()
            }
            Step::Npb { dest, update, .. } => {
                let mut y = x.to_vec();
                match update {
                    Update::None => {}
                    Update::Expr { target, base, .. } => {
                        let mean = match &self.p.transitions[k].update().sample() {
                            Some((cf, d)) => cf.to_f64_lossy() * d.mean.to_f64_lossy(),
                            None => 0.0,
                        };
                        y[*target] = base.eval(x) + mean;
                    }
                    Update::Nondet { target, lo, hi } => {
                        y[*target] = self.adversarial_value(c, *dest, &y, *target, *lo, *hi);
                    }
                }
                eval(*dest, &y)
            }
        }
    }

    fn adversarial_value(
        &self,
        c: &Certificate,
        dest: LocId,
        y: &[f64],
        target: VarId,
        lo: f64,
        hi: f64,
    ) -> f64 {
        let at = |v: f64| {
            let mut z = y.to_vec();
            z[target] = v;
            c.components[dest]
                .iter()
                .map(|e| e.to_f64().eval(&z))
                .collect::<Vec<_>>()
        };
        if lex_greater(&at(lo), &at(hi)) {
            lo
        } else {
            hi
        }
    }

    fn nondet_value(
        &self,
        sched: &Scheduler,
        dest: LocId,
        y: &[f64],
        target: VarId,
        (lo, hi): (f64, f64),
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        if let Strategy::Adversarial(c) = &sched.strategy {
            return self.adversarial_value(c, dest, y, target, lo, hi);
        }
        match sched.nondet {
            NondetStrategy::Uniform => lo + (hi - lo) * rng.random::<f64>(),
            NondetStrategy::Lower => lo,
            NondetStrategy::Upper => hi,
        }
    }

    /// Executes transition `k` from `(loc, x)`.
    pub fn fire(
        &self,
        k: usize,
        x: &[f64],
        sched: &Scheduler,
        rng: &mut RunRng,
    ) -> (LocId, Vec<f64>) {
        match &self.steps[k] {
            Step::Pb { p_first, dests } => {
                let u: f64 = rng.program.random();
                (if u < *p_first { dests[0] } else { dests[1] }, x.to_vec())
            }
            Step::Npb { dest, update, .. } => {
                let mut y = x.to_vec();
                match update {
                    Update::None => {}
                    Update::Expr {
                        target,
                        base,
                        sample,
                    } => {
                        let mut v = base.eval(x);
                        if let Some((c, s)) = sample {
                            v += c * s.draw(&mut rng.program);
                        }
                        y[*target] = v;
                    }
                    Update::Nondet { target, lo, hi } => {
                        y[*target] = self.nondet_value(
                            sched,
                            *dest,
                            &y,
                            *target,
                            (*lo, *hi),
                            &mut rng.scheduler,
                        );
                    }
                }
                (*dest, y)
            }
        }
    }

    /// One scheduler choice plus its execution; `None` when stuck.
    pub fn step(
        &self,
        loc: LocId,
        x: &[f64],
        sched: &Scheduler,
        rng: &mut RunRng,
    ) -> Option<(usize, LocId, Vec<f64>)> {
        let en = self.enabled(loc, x);
        if en.is_empty() {
            return None;
        }
        let k = self.choose(loc, x, &en, sched, &mut rng.scheduler);
        let (l, y) = self.fire(k, x, sched, rng);
        Some((k, l, y))
    }

    fn run_inner(
        &self,
        init: &State,
        sched: &Scheduler,
        cap: u64,
        seed: u64,
        run: u64,
        mut visit: impl FnMut(usize, LocId, &[f64]),
    ) -> TrajectoryReport {
        let mut rng = RunRng::new(seed, run);
        let (mut loc, mut x) = (init.loc, init.x.clone());
        let mut steps = 0;
        let mut stuck = false;
        while loc != self.p.terminal && steps < cap {
            match self.step(loc, &x, sched, &mut rng) {
                Some((k, l, y)) => {
                    visit(k, l, &y);
                    loc = l;
                    x = y;
                    steps += 1;
                }
                None => {
                    stuck = true;
                    break;
                }
            }
        }
        TrajectoryReport {
            run,
            terminated: loc == self.p.terminal,
            stuck,
            steps,
            final_location: self.p.locations[loc].clone(),
            final_state: x,
        }
    }

    pub fn run(
        &self,
        init: &State,
        sched: &Scheduler,
        cap: u64,
        seed: u64,
        run: u64,
    ) -> TrajectoryReport {
        self.run_inner(init, sched, cap, seed, run, |_, _, _| {})
    }

    /// Like [`Engine::run`], keeping the visited states and transitions.
    pub fn trace(
        &self,
        init: &State,
        sched: &Scheduler,
        cap: u64,
        seed: u64,
        run: u64,
        eta: Option<&Certificate>,
    ) -> Trace {
        let mut states = vec![(init.loc, init.x.clone())];
        let mut transitions = Vec::new();
        let report = self.run_inner(init, sched, cap, seed, run, |k, l, y| {
            transitions.push(k);
            states.push((l, y.to_vec()));
        });
        let eta = eta.map(|c| {
            states
                .iter()
                .map(|(l, y)| {
                    c.components[*l]
                        .iter()
                        .map(|e| e.to_f64().eval(y))
                        .collect()
                })
                .collect()
        });
        Trace {
            report,
            states,
            transitions,
            eta,
        }
    }
}

fn lex_greater(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return true;
        }
        if x < y {
            return false;
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub loc: LocId,
    pub x: Vec<f64>,
}

impl State {
    pub fn new(p: &Pcfg, loc: LocId, x: Vec<f64>) -> Result<Self, SimError> {
        if x.len() != p.num_vars() {
            return Err(SimError::BadInit {
                got: x.len(),
                want: p.num_vars(),
            });
        }
        Ok(State { loc, x })
    }

    pub fn initial(p: &Pcfg, x: Vec<f64>) -> Result<Self, SimError> {
        Self::new(p, p.init, x)
    }
}

pub fn run_trajectory(
    p: &Pcfg,
    init: &State,
    sched: &Scheduler,
    step_cap: u64,
    seed: u64,
) -> Result<TrajectoryReport, SimError> {
    Ok(Engine::new(p, &SamplerRegistry::new())?.run(init, sched, step_cap, seed, 0))
}

/// Aggregate of many independent runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminationEstimate {
    pub runs: u64,
    pub terminated: u64,
    pub stuck: u64,
    pub fraction: f64,
    /// Wilson score interval at 95%.
    pub interval: (f64, f64),
    pub mean_steps_terminated: Option<f64>,
}

/// 95% two-sided normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub runs: u64,
    pub step_cap: u64,
    pub seed: u64,
    /// `None` uses rayon's global pool.
    pub threads: Option<usize>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            runs: 1000,
            step_cap: DEFAULT_ESTIMATION_CAP,
            seed: 0,
            threads: None,
        }
    }
}

pub(crate) fn with_pool<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, SimError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SimError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// All run reports, in run order.
pub fn simulate_runs(
    engine: &Engine<'_>,
    init: &State,
    sched: &Scheduler,
    opts: &EstimateOptions,
) -> Result<Vec<TrajectoryReport>, SimError> {
    with_pool(opts.threads, || {
        (0..opts.runs)
            .into_par_iter()
            .map(|r| engine.run(init, sched, opts.step_cap, opts.seed, r))
            .collect()
    })
}

pub fn summarize(reports: &[TrajectoryReport]) -> TerminationEstimate {
    let runs = reports.len() as u64;
    let terminated = reports.iter().filter(|r| r.terminated).count() as u64;
    let stuck = reports.iter().filter(|r| r.stuck).count() as u64;
    let mean_steps_terminated = (terminated > 0).then(|| {
        reports
            .iter()
            .filter(|r| r.terminated)
            .map(|r| r.steps as f64)
            .sum::<f64>()
            / terminated as f64
    });
    TerminationEstimate {
        runs,
        terminated,
        stuck,
        fraction: if runs == 0 {
            0.0
        } else {
            terminated as f64 / runs as f64
        },
        interval: wilson_interval(terminated, runs),
        mean_steps_terminated,
    }
}

pub fn estimate_termination(
    p: &Pcfg,
    init: &State,
    sched: &Scheduler,
    opts: &EstimateOptions,
) -> Result<TerminationEstimate, SimError> {
    let engine = Engine::new(p, &SamplerRegistry::new())?;
    Ok(summarize(&simulate_runs(&engine, init, sched, opts)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile;

    const FIG_B: &str = "l0: while x >= 0 do
  if y >= 0 then
    y := y + Unif[-7, 1]
  else
    x := x + Unif[-7, 1];
    l1: y := y + Unif[-7, 1]
  fi
od";

    fn init(p: &Pcfg, pairs: &[(&str, f64)]) -> State {
        let mut x = vec![0.0; p.num_vars()];
        for (v, val) in pairs {
            x[p.variable_index(v).unwrap()] = *val;
        }
        State::initial(p, x).unwrap()
    }

    #[test]
    fn start_at_terminal_is_immediate() {
        let p = compile(FIG_B).unwrap();
        let s = State::new(&p, p.terminal, vec![0.0, 0.0]).unwrap();
        let r = run_trajectory(&p, &s, &Scheduler::uniform(), 100, 1).unwrap();
        assert!(r.terminated);
        assert_eq!(r.steps, 0);
    }

    #[test]
    fn divergent_loop_hits_the_cap() {
        let p = compile("while x >= 0 do x := x + 1 od").unwrap();
        let r =
            run_trajectory(&p, &init(&p, &[("x", 0.0)]), &Scheduler::uniform(), 1000, 1).unwrap();
        assert!(!r.terminated && !r.stuck);
        assert_eq!(r.steps, 1000);
        assert_eq!(r.final_state, vec![1000.0]);
    }

    #[test]
    fn non_total_guard_gets_stuck() {
        let p = crate::interchange::pcfg_from_str(
            r#"{"variables":["x"],"locations":["a","out"],"init":"a","terminal":"out",
            "transitions":[
              {"id":"t0","source":"a","kind":"npb","dest":"out","guard":[["x >= 1"]]},
              {"id":"t1","source":"out","kind":"npb","dest":"out"}]}"#,
        )
        .unwrap();
        let r = run_trajectory(&p, &init(&p, &[("x", 0.0)]), &Scheduler::uniform(), 10, 1).unwrap();
        assert!(r.stuck && !r.terminated);
    }

    #[test]
    fn same_seed_same_reports() {
        let p = compile(FIG_B).unwrap();
        let e = Engine::new(&p, &SamplerRegistry::new()).unwrap();
        let s = init(&p, &[("x", 3.0), ("y", 3.0)]);
        let opts = EstimateOptions {
            runs: 50,
            step_cap: 10_000,
            seed: 9,
            threads: Some(2),
        };
        let a = simulate_runs(&e, &s, &Scheduler::uniform(), &opts).unwrap();
        let b = simulate_runs(
            &e,
            &s,
            &Scheduler::uniform(),
            &EstimateOptions {
                threads: Some(3),
                ..opts
            },
        )
        .unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn terminated_runs_stay_terminal() {
        let p = compile(FIG_B).unwrap();
        let e = Engine::new(&p, &SamplerRegistry::new()).unwrap();
        let sched = Scheduler::uniform();
        for run in 0..20 {
            let t = e.trace(
                &init(&p, &[("x", 0.0), ("y", 0.0)]),
                &sched,
                100_000,
                3,
                run,
                None,
            );
            assert!(t.report.terminated);
            assert_eq!(t.states.last().unwrap().0, p.terminal);
            let mut rng = RunRng::new(3, run);
            let (mut l, mut x) = t.states.last().unwrap().clone();
            for _ in 0..10 {
                let (_, l2, y) = e.step(l, &x, &sched, &mut rng).unwrap();
                assert_eq!(l2, p.terminal);
                l = l2;
                x = y;
            }
        }
    }

    #[test]
    fn wilson_interval_brackets_the_fraction() {
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!((hi - lo - 0.1925).abs() < 1e-3);
        assert_eq!(wilson_interval(0, 10).0, 0.0);
        let (lo, hi) = wilson_interval(10, 10);
        assert!(hi > 1.0 - 1e-12 && (lo - 0.7225).abs() < 1e-3);
    }

    #[test]
    fn nondet_strategies_pick_endpoints() {
        let p = compile("y := ndet[1, 3]").unwrap();
        let s = init(&p, &[]);
        for (strategy, want) in [(NondetStrategy::Lower, 1.0), (NondetStrategy::Upper, 3.0)] {
            let sched = Scheduler {
                strategy: Strategy::UniformRandom,
                nondet: strategy,
            };
            let r = run_trajectory(&p, &s, &sched, 10, 0).unwrap();
            assert_eq!(r.final_state, vec![want]);
        }
    }
}

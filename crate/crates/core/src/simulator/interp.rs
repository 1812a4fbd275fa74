//! Direct interpreter over the source AST, used as a reference for the
//! lowering. It draws from the same two streams as the pCFG engine and in
//! the same order: one program draw per coin or sample, one scheduler draw
//! per `if *` (uniform scheduler) or uniform nondeterministic value.

use rand::Rng;

use crate::frontend::{Rhs, SourceProgram, Stmt, StmtKind};
use crate::num::Scalar;

use super::sample::Sampler;
use super::{NondetStrategy, RunRng, SamplerRegistry, Scheduler, SimError, Strategy};

#[derive(Debug, Clone, PartialEq)]
pub struct InterpReport {
    pub terminated: bool,
    /// `(variable, new value)` for every executed assignment, in order.
    pub writes: Vec<(usize, f64)>,
    pub final_state: Vec<f64>,
    /// Executed assignments, tests and coins.
    pub steps: u64,
}

struct Interp<'a> {
    rng: RunRng,
    sched: &'a Scheduler,
    registry: &'a SamplerRegistry,
    x: Vec<f64>,
    writes: Vec<(usize, f64)>,
    steps: u64,
    cap: u64,
}

/// Out of budget.
struct Capped;

impl Interp<'_> {
    fn tick(&mut self) -> Result<(), Capped> {
        if self.steps >= self.cap {
            return Err(Capped);
        }
        self.steps += 1;
        Ok(())
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Result<(), SimError>, Capped> {
        for s in stmts {
            if let Err(e) = self.stmt(s)? {
                return Ok(Err(e));
            }
        }
        Ok(Ok(()))
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Result<(), SimError>, Capped> {
        match &s.kind {
            StmtKind::Skip => {}
            StmtKind::Assign { var, rhs } => {
                self.tick()?;
                let v = match rhs {
                    Rhs::Expr { base, sample } => {
                        let mut v = base.to_f64().eval(&self.x);
                        if let Some((c, d)) = sample {
                            let smp: Sampler = match self.registry.compile(d) {
                                Ok(s) => s,
                                Err(e) => return Ok(Err(e)),
                            };
                            v += c.to_f64_lossy() * smp.draw(&mut self.rng.program);
                        }
                        v
                    }
                    Rhs::Ndet { lo, hi } => {
                        let (lo, hi) = (lo.to_f64_lossy(), hi.to_f64_lossy());
                        match self.sched.nondet {
                            NondetStrategy::Uniform => {
                                lo + (hi - lo) * self.rng.scheduler.random::<f64>()
                            }
                            NondetStrategy::Lower => lo,
                            NondetStrategy::Upper => hi,
                        }
                    }
                };
                self.x[*var] = v;
                self.writes.push((*var, v));
            }
            StmtKind::While { cond, body } => loop {
                self.tick()?;
                if !cond.eval(&self.x) {
                    break;
                }
                if let Err(e) = self.block(body)? {
                    return Ok(Err(e));
                }
            },
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.tick()?;
                let b = if cond.eval(&self.x) {
                    then_branch
                } else {
                    else_branch
                };
                return self.block(b);
            }
            StmtKind::IfProb {
                prob,
                then_branch,
                else_branch,
            } => {
                self.tick()?;
                let u: f64 = self.rng.program.random();
                let b = if u < prob.to_f64_lossy() {
                    then_branch
                } else {
                    else_branch
                };
                return self.block(b);
            }
            StmtKind::IfNondet {
                then_branch,
                else_branch,
            } => {
                self.tick()?;
                let first = match self.sched.strategy {
                    Strategy::UniformRandom => self.rng.scheduler.random_range(0..2) == 0,
                    _ => true,
                };
                return self.block(if first { then_branch } else { else_branch });
            }
        }
        Ok(Ok(()))
    }
}

/// Runs `prog` from valuation `init`. Fixed-priority and adversarial
/// schedulers take the first branch of every `if *`; adversarial
/// nondeterministic values fall back to the strategy in `sched.nondet`.
pub fn interpret(
    prog: &SourceProgram,
    init: &[f64],
    sched: &Scheduler,
    registry: &SamplerRegistry,
    cap: u64,
    seed: u64,
    run: u64,
) -> Result<InterpReport, SimError> {
    if init.len() != prog.variables.len() {
        return Err(SimError::BadInit {
            got: init.len(),
            want: prog.variables.len(),
        });
    }
    let mut it = Interp {
        rng: RunRng::new(seed, run),
        sched,
        registry,
        x: init.to_vec(),
        writes: Vec::new(),
        steps: 0,
        cap,
    };
    let terminated = match it.block(&prog.stmts) {
        Ok(r) => {
            r?;
            true
        }
        Err(Capped) => false,
    };
    Ok(InterpReport {
        terminated,
        writes: it.writes,
        final_state: it.x,
        steps: it.steps,
    })
}

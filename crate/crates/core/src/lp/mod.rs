//! Exact linear programming, feasibility and entailment.

mod dump;
pub mod farkas;
mod simplex;

use std::fmt;

use thiserror::Error;

use crate::linear::{LinConstraint, LinExpr, Polyhedron, Relation};
use crate::num::Scalar;

pub use dump::to_cplex_lp;
pub use farkas::{encode_implication, FarkasEncoding, FarkasError, FarkasImplication};

/// Default pivot budget for a single solve.
pub const DEFAULT_ITERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("simplex gave up after {pivots} pivots")]
    IterationCap { pivots: u64 },
    #[error("row {row} is a strict inequality; linear programs take only <= and =")]
    StrictConstraint { row: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub iteration_cap: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            iteration_cap: DEFAULT_ITERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpVar<S> {
    pub name: String,
    pub lower: Option<S>,
    pub upper: Option<S>,
}

/// Maximize `objective` subject to `constraints` (each `lhs rel 0` with
/// `rel` in {<=, =}) and per-unknown bounds.
#[derive(Clone)]
pub struct LpProblem<S> {
    pub vars: Vec<LpVar<S>>,
    pub constraints: Vec<LinConstraint<S>>,
    pub objective: LinExpr<S>,
}

impl<S: Scalar> fmt::Debug for LpProblem<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LpProblem")
            .field("vars", &self.vars)
            .field("constraints", &self.constraints)
            .field("objective", &self.objective)
            .finish()
    }
}

impl<S: Scalar> Default for LpProblem<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> LpProblem<S> {
    pub fn new() -> Self {
        LpProblem {
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: LinExpr::zero(),
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: Option<S>,
        upper: Option<S>,
    ) -> usize {
        self.vars.push(LpVar {
            name: name.into(),
            lower,
            upper,
        });
        self.vars.len() - 1
    }

    pub fn add_free(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, None, None)
    }

    pub fn add_nonneg(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, Some(S::zero()), None)
    }

    pub fn add_constraint(&mut self, c: LinConstraint<S>) {
        self.constraints.push(c);
    }

    pub fn set_objective(&mut self, e: LinExpr<S>) {
        self.objective = e;
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn var_names(&self) -> Vec<String> {
        self.vars.iter().map(|v| v.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome<S> {
    Optimal {
        assignment: Vec<S>,
        value: S,
        pivots: u64,
    },
    Infeasible,
    Unbounded,
}

impl<S: fmt::Display> fmt::Display for LpOutcome<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpOutcome::Optimal { value, .. } => write!(f, "optimal ({value})"),
            LpOutcome::Infeasible => write!(f, "infeasible"),
            LpOutcome::Unbounded => write!(f, "unbounded"),
        }
    }
}

pub fn solve_lp<S: Scalar>(lp: &LpProblem<S>) -> Result<LpOutcome<S>, LpError> {
    simplex::solve(lp, &SolveOptions::default())
}

pub fn solve_lp_with<S: Scalar>(
    lp: &LpProblem<S>,
    opts: &SolveOptions,
) -> Result<LpOutcome<S>, LpError> {
    simplex::solve(lp, opts)
}

fn var_count<S: Scalar>(p: &Polyhedron<S>) -> usize {
    p.constraints
        .iter()
        .filter_map(|c| c.lhs.variables().last())
        .max()
        .map_or(0, |m| m + 1)
}

/// Returns a point of `p` (honouring strict inequalities) or `None`.
///
/// Strict rows `e < 0` become `e + t <= 0` with a shared slack `0 <= t <= 1`
/// that is maximized; the polyhedron is non-empty iff the optimum is
/// positive. The returned point is padded to cover every variable index
/// mentioned in `p`.
pub fn check_feasible<S: Scalar>(p: &Polyhedron<S>) -> Option<Vec<S>> {
    check_feasible_with(p, &SolveOptions::default())
        .ok()
        .flatten()
}

pub fn check_feasible_with<S: Scalar>(
    p: &Polyhedron<S>,
    opts: &SolveOptions,
) -> Result<Option<Vec<S>>, LpError> {
    let n = var_count(p);
    let mut lp = LpProblem::new();
    for i in 0..n {
        lp.add_free(format!("x{i}"));
    }
    let strict = p.has_strict();
    let t = if strict {
        Some(lp.add_var("t", Some(S::zero()), Some(S::one())))
    } else {
        None
    };
    for c in &p.constraints {
        if let Some(truth) = c.constant_truth() {
            if !truth {
                return Ok(None);
            }
            continue;
        }
        match c.rel {
            Relation::Lt => {
                let mut lhs = c.lhs.clone();
                lhs.add_term(t.expect("strict row implies slack"), S::one());
                lp.add_constraint(LinConstraint::new(lhs, Relation::Le));
            }
            _ => lp.add_constraint(c.clone()),
        }
    }
    if let Some(t) = t {
        lp.set_objective(LinExpr::var(t));
    }
    match simplex::solve(&lp, opts)? {
        LpOutcome::Optimal {
            mut assignment,
            value,
            ..
        } => {
            if strict && !value.definitely_positive() {
                return Ok(None);
            }
            assignment.truncate(n);
            Ok(Some(assignment))
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => unreachable!("objective is bounded by the slack's upper bound"),
    }
}

/// `None` if every point of `p` satisfies `c`, otherwise a point of `p`
/// violating `c`.
pub fn entailment_counterexample<S: Scalar>(
    p: &Polyhedron<S>,
    c: &LinConstraint<S>,
) -> Option<Vec<S>> {
    for neg in c.negation() {
        let mut q = p.clone();
        q.push(neg);
        if let Some(pt) = check_feasible(&q) {
            return Some(pt);
        }
    }
    None
}

/// Whether every point of `p` satisfies `c`.
pub fn entails<S: Scalar>(p: &Polyhedron<S>, c: &LinConstraint<S>) -> bool {
    entailment_counterexample(p, c).is_none()
}

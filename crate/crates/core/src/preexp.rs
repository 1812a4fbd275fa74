//! Maximal and minimal pre-expectation of a map component across one
//! transition.
//!
//! The computation is generic over the expression type so that the checker
//! (concrete coefficients) and synthesis (coefficients that are LP unknowns)
//! share one definition. Nondeterministic assignments produce a
//! [`PreForm::Nondet`] that is either resolved at an interval endpoint, when
//! the relevant coefficient is a known number, or turned into a universally
//! quantified fresh variable.

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::linear::{LinConstraint, LinearError};
use crate::model::{LocId, Transition, TransitionKind, UpdateElement, VarId};
use crate::param::ParamExpr;
use crate::{QLinExpr, QPolyhedron, QPredicate, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PreExpError {
    #[error("supremum over a nondeterministic assignment needs a known coefficient")]
    UnresolvedSup,
    #[error("infimum over a nondeterministic assignment needs a known coefficient")]
    UnresolvedInf,
    #[error("restricted pre-expectation is only defined here for probabilistic branching")]
    NotProbabilisticBranching,
    #[error(transparent)]
    Encoding(#[from] LinearError),
}

/// Expressions over program variables that pre-expectation can transform.
pub trait PreAlgebra: Clone {
    fn zero() -> Self;
    fn substitute_var(&self, var: VarId, repl: &QLinExpr) -> Self;
    fn add_scaled(&mut self, other: &Self, k: &Rational);
    /// The coefficient of `var` when it is a known number.
    fn known_coeff(&self, var: VarId) -> Option<Rational>;
}

impl PreAlgebra for QLinExpr {
    fn zero() -> Self {
        QLinExpr::zero()
    }
    fn substitute_var(&self, var: VarId, repl: &QLinExpr) -> Self {
        self.substitute(var, repl)
    }
    fn add_scaled(&mut self, other: &Self, k: &Rational) {
        QLinExpr::add_scaled(self, other, k)
    }
    fn known_coeff(&self, var: VarId) -> Option<Rational> {
        Some(self.coeff(var))
    }
}

impl PreAlgebra for ParamExpr {
    fn zero() -> Self {
        ParamExpr::zero()
    }
    fn substitute_var(&self, var: VarId, repl: &QLinExpr) -> Self {
        self.substitute(var, repl)
    }
    fn add_scaled(&mut self, other: &Self, k: &Rational) {
        ParamExpr::add_scaled(self, other, k)
    }
    fn known_coeff(&self, var: VarId) -> Option<Rational> {
        let c = self.coeff(var);
        c.is_constant().then(|| c.constant_term().clone())
    }
}

/// Pre-expectation before resolving nondeterministic choice.
#[derive(Debug, Clone, PartialEq)]
pub enum PreForm<E> {
    Exact(E),
    /// `sup`/`inf` over `x_target ∈ [lo, hi]` of `expr`, where `expr` still
    /// mentions `x_target` as the chosen value.
    Nondet {
        expr: E,
        target: VarId,
        lo: Rational,
        hi: Rational,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Max,
    Min,
}

impl<E: PreAlgebra> PreForm<E> {
    /// Resolves the nondeterministic choice at the appropriate endpoint.
    pub fn resolve(&self, dir: Direction) -> Result<E, PreExpError> {
        match self {
            PreForm::Exact(e) => Ok(e.clone()),
            PreForm::Nondet {
                expr,
                target,
                lo,
                hi,
            } => {
                let Some(c) = expr.known_coeff(*target) else {
                    return Err(match dir {
                        Direction::Max => PreExpError::UnresolvedSup,
                        Direction::Min => PreExpError::UnresolvedInf,
                    });
                };
                let upper = match dir {
                    Direction::Max => !c.is_negative(),
                    Direction::Min => c.is_negative(),
                };
                let v = if upper { hi } else { lo };
                Ok(expr.substitute_var(*target, &QLinExpr::constant(v.clone())))
            }
        }
    }

    /// Replaces the chosen value by the fresh variable `fresh` and returns
    /// the bounds `lo <= fresh <= hi` to add to an antecedent. A bound that
    /// holds for every `fresh` in the interval bounds both the supremum and
    /// the infimum.
    pub fn universal(&self, fresh: VarId) -> (E, QPolyhedron) {
        match self {
            PreForm::Exact(e) => (e.clone(), QPolyhedron::top()),
            PreForm::Nondet {
                expr,
                target,
                lo,
                hi,
            } => {
                let y = QLinExpr::var(fresh);
                let bounds = QPolyhedron::new(vec![
                    LinConstraint::ge(&y, &QLinExpr::constant(lo.clone())),
                    LinConstraint::le(&y, &QLinExpr::constant(hi.clone())),
                ]);
                (expr.substitute_var(*target, &y), bounds)
            }
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, PreForm::Exact(_))
    }
}

/// Pre-expectation of `eta` (given per location) across `tau`, over all
/// successor states.
pub fn pre_form<E: PreAlgebra>(eta: impl Fn(LocId) -> E, tau: &Transition) -> PreForm<E> {
    match &tau.kind {
        TransitionKind::Pb { branches } => {
            let mut acc = E::zero();
            for (loc, p) in branches {
                acc.add_scaled(&eta(*loc), p);
            }
            PreForm::Exact(acc)
        }
        TransitionKind::Npb { dest, update, .. } => {
            let e = eta(*dest);
            match update {
                UpdateElement::NoUpdate => PreForm::Exact(e),
                UpdateElement::Expr {
                    target,
                    base,
                    sample,
                } => {
                    let mut repl = base.clone();
                    if let Some((c, d)) = sample {
                        repl.add_constant(c.clone() * d.mean.clone());
                    }
                    PreForm::Exact(e.substitute_var(*target, &repl))
                }
                UpdateElement::Nondet { target, lo, hi } => PreForm::Nondet {
                    expr: e,
                    target: *target,
                    lo: lo.clone(),
                    hi: hi.clone(),
                },
            }
        }
    }
}

pub fn max_pre<E: PreAlgebra>(
    eta: impl Fn(LocId) -> E,
    tau: &Transition,
) -> Result<E, PreExpError> {
    pre_form(eta, tau).resolve(Direction::Max)
}

pub fn min_pre<E: PreAlgebra>(
    eta: impl Fn(LocId) -> E,
    tau: &Transition,
) -> Result<E, PreExpError> {
    pre_form(eta, tau).resolve(Direction::Min)
}

/// Case split of the pre-expectation of a probabilistic branch restricted
/// to a state set.
///
/// `in_set(ℓ)` describes the states of the set at location `ℓ` (the same
/// valuation, since branching does not update). The cases pair a context
/// over the current valuation with the part of the sum whose successors lie
/// in the set: both branches, only the first, only the second. Cases with a
/// syntactically empty context are omitted.
pub fn pre_pb_restricted<E: PreAlgebra>(
    eta: impl Fn(LocId) -> E,
    tau: &Transition,
    in_set: impl Fn(LocId) -> QPredicate,
    cap: usize,
) -> Result<Vec<(QPredicate, E)>, PreExpError> {
    let TransitionKind::Pb { branches } = &tau.kind else {
        return Err(PreExpError::NotProbabilisticBranching);
    };
    let [(l1, p1), (l2, p2)] = branches;
    let g1 = in_set(*l1);
    let g2 = in_set(*l2);
    let n1 = g1.negate(cap)?;
    let n2 = g2.negate(cap)?;
    let mut e1 = E::zero();
    e1.add_scaled(&eta(*l1), p1);
    let mut e2 = E::zero();
    e2.add_scaled(&eta(*l2), p2);
    let mut both = e1.clone();
    both.add_scaled(&e2, &Rational::from_integer(1.into()));

    let mut out = Vec::new();
    for (ctx, e) in [
        (g1.and(&g2, cap)?, both),
        (g1.and(&n2, cap)?, e1),
        (n1.and(&g2, cap)?, e2),
    ] {
        if !ctx.is_false() {
            out.push((ctx, e));
        }
    }
    Ok(out)
}

/// `max_pre − min_pre` for a nondeterministic update with known coefficient:
/// `|c|·(hi − lo)`.
pub fn nondet_spread(c: &Rational, lo: &Rational, hi: &Rational) -> Rational {
    if c.is_zero() {
        Rational::zero()
    } else {
        c.abs() * (hi.clone() - lo.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DistributionSpec;
    use crate::num::{int, ratio};
    use crate::QPolyhedron;

    fn e(coeffs: &[(usize, i64)], k: i64) -> QLinExpr {
        QLinExpr::from_parts(coeffs.iter().map(|(i, c)| (*i, int(*c))), int(k))
    }

    fn npb(dest: LocId, update: UpdateElement) -> Transition {
        Transition {
            id: "t".into(),
            source: 0,
            kind: TransitionKind::Npb {
                dest,
                guard: QPredicate::truth(),
                update,
            },
        }
    }

    #[test]
    fn mean_substitution_for_normal_step() {
        // x := x - 1 + Norm(0,1); eta = x + 1  =>  x
        let tau = npb(
            1,
            UpdateElement::Expr {
                target: 0,
                base: e(&[(0, 1)], -1),
                sample: Some((int(1), DistributionSpec::normal(int(0), int(1)))),
            },
        );
        let eta = |_| e(&[(0, 1)], 1);
        assert_eq!(max_pre(eta, &tau).unwrap(), e(&[(0, 1)], 0));
    }

    #[test]
    fn mean_substitution_for_uniform_step() {
        // y := y + Unif[-7,1]; eta = y + 7  =>  y + 4
        let tau = npb(
            0,
            UpdateElement::Expr {
                target: 1,
                base: e(&[(1, 1)], 0),
                sample: Some((int(1), DistributionSpec::uniform(int(-7), int(1)))),
            },
        );
        assert_eq!(max_pre(|_| e(&[(1, 1)], 7), &tau).unwrap(), e(&[(1, 1)], 4));
        // x := x + Unif[-7,1]; eta = x + 8  =>  x + 5 (max and min agree)
        let tau = npb(
            1,
            UpdateElement::Expr {
                target: 0,
                base: e(&[(0, 1)], 0),
                sample: Some((int(1), DistributionSpec::uniform(int(-7), int(1)))),
            },
        );
        assert_eq!(min_pre(|_| e(&[(0, 1)], 8), &tau).unwrap(), e(&[(0, 1)], 5));
        assert_eq!(max_pre(|_| e(&[(0, 1)], 8), &tau).unwrap(), e(&[(0, 1)], 5));
    }

    #[test]
    fn constants_are_fixed_points() {
        let tau = npb(
            0,
            UpdateElement::Expr {
                target: 0,
                base: e(&[(0, 3)], 2),
                sample: Some((int(2), DistributionSpec::uniform(int(0), int(4)))),
            },
        );
        assert_eq!(max_pre(|_| e(&[], 1), &tau).unwrap(), e(&[], 1));
    }

    #[test]
    fn nondet_endpoints() {
        let tau = npb(
            0,
            UpdateElement::Nondet {
                target: 1,
                lo: int(0),
                hi: int(5),
            },
        );
        let eta = |_| e(&[(1, 2)], 1);
        assert_eq!(min_pre(eta, &tau).unwrap(), e(&[], 1));
        assert_eq!(max_pre(eta, &tau).unwrap(), e(&[], 11));
        let neg = |_| e(&[(1, -2)], 1);
        assert_eq!(min_pre(neg, &tau).unwrap(), e(&[], -9));
        // Independent of the updated variable: both agree.
        let other = |_| e(&[(0, 3)], 0);
        assert_eq!(min_pre(other, &tau).unwrap(), max_pre(other, &tau).unwrap());
    }

    #[test]
    fn symbolic_coefficient_cannot_be_resolved() {
        let tau = npb(
            0,
            UpdateElement::Nondet {
                target: 0,
                lo: int(0),
                hi: int(1),
            },
        );
        let mut t = ParamExpr::zero();
        t.set_coeff(0, QLinExpr::var(0));
        let form = pre_form(|_| t.clone(), &tau);
        assert_eq!(
            form.resolve(Direction::Max),
            Err(PreExpError::UnresolvedSup)
        );
        assert_eq!(
            form.resolve(Direction::Min),
            Err(PreExpError::UnresolvedInf)
        );
        let (expr, bounds) = form.universal(7);
        assert_eq!(expr.coeff(7), QLinExpr::var(0));
        assert_eq!(bounds.constraints.len(), 2);
    }

    fn pb(l1: LocId, l2: LocId) -> Transition {
        Transition {
            id: "p".into(),
            source: 0,
            kind: TransitionKind::Pb {
                branches: [(l1, ratio(1, 2)), (l2, ratio(1, 2))],
            },
        }
    }

    #[test]
    fn pb_expectation_is_weighted_sum() {
        let tau = pb(1, 2);
        let eta = |l: LocId| {
            if l == 1 {
                e(&[(0, 1)], 0)
            } else {
                e(&[(0, -1)], 4)
            }
        };
        assert_eq!(max_pre(eta, &tau).unwrap(), e(&[], 2));
    }

    #[test]
    fn restricted_cases() {
        let tau = pb(1, 2);
        let eta = |l: LocId| {
            if l == 1 {
                e(&[(0, 1)], 0)
            } else {
                e(&[(0, -1)], 0)
            }
        };
        let cap = 4096;

        let none = pre_pb_restricted(eta, &tau, |_| QPredicate::falsity(), cap).unwrap();
        assert!(none.is_empty());

        let all = pre_pb_restricted(eta, &tau, |_| QPredicate::truth(), cap).unwrap();
        assert_eq!(all.len(), 1);
        assert!(all[0].0.is_true());
        assert_eq!(all[0].1, QLinExpr::zero());

        let only_second = pre_pb_restricted(
            eta,
            &tau,
            |l| {
                if l == 2 {
                    QPredicate::truth()
                } else {
                    QPredicate::falsity()
                }
            },
            cap,
        )
        .unwrap();
        assert_eq!(only_second.len(), 1);
        assert_eq!(
            only_second[0].1,
            QLinExpr::from_parts([(0, ratio(-1, 2))], int(0))
        );

        // A genuine guard: the first location holds the states with x < 0.
        let x_neg = QPredicate::from_polyhedron(QPolyhedron::new(vec![LinConstraint::lt(
            &QLinExpr::var(0),
            &QLinExpr::zero(),
        )]));
        let mixed = pre_pb_restricted(
            eta,
            &tau,
            |l| {
                if l == 1 {
                    x_neg.clone()
                } else {
                    QPredicate::truth()
                }
            },
            cap,
        )
        .unwrap();
        assert_eq!(mixed.len(), 2);
        assert!(mixed[0].0.holds(&[int(-1)]) && !mixed[0].0.holds(&[int(1)]));
        assert!(mixed[1].0.holds(&[int(1)]) && !mixed[1].0.holds(&[int(-1)]));
    }

    #[test]
    fn spread_matches_endpoint_difference() {
        let tau = npb(
            0,
            UpdateElement::Nondet {
                target: 0,
                lo: int(-2),
                hi: int(3),
            },
        );
        for c in [-3i64, 0, 4] {
            let eta = |_| e(&[(0, c)], 1);
            let d = max_pre(eta, &tau)
                .unwrap()
                .minus(&min_pre(eta, &tau).unwrap());
            assert_eq!(
                d,
                QLinExpr::constant(nondet_spread(&int(c), &int(-2), &int(3)))
            );
        }
    }
}

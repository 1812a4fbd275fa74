//! Farkas-lemma encoding of universally quantified linear implications.
//!
//! For a feasible antecedent `A·x <= b` and consequent `c·x + k >= 0`
//! (with `c`, `k` affine in the LP unknowns), the implication holds for all
//! `x` iff there are multipliers `λ >= 0` with `λᵀA = -c` and `λᵀb <= k`.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::linear::{LinConstraint, Relation};
use crate::param::ParamExpr;
use crate::{QLinExpr, QPolyhedron, Rational};

use super::LpProblem;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FarkasError {
    #[error("antecedent row {row} is still strict; relax it after the feasibility check")]
    InfeasibleAntecedentNotRelaxed { row: usize },
}

/// `∀x. antecedent(x) ⇒ consequent(x) >= 0`
#[derive(Debug, Clone)]
pub struct FarkasImplication {
    pub antecedent: QPolyhedron,
    pub consequent: ParamExpr,
}

/// Constraints over the LP unknowns. Multipliers occupy the unknown indices
/// `first_multiplier .. first_multiplier + multipliers` and must be
/// constrained non-negative by the caller (see [`add_implication`]).
#[derive(Debug, Clone)]
pub struct FarkasEncoding {
    pub first_multiplier: usize,
    pub multipliers: usize,
    pub constraints: Vec<LinConstraint<Rational>>,
}

pub fn encode_implication(
    f: &FarkasImplication,
    first_multiplier: usize,
) -> Result<FarkasEncoding, FarkasError> {
    // Rows of A·x <= b as (a, b).
    let mut rows: Vec<(QLinExpr, Rational)> = Vec::new();
    for (k, c) in f.antecedent.constraints.iter().enumerate() {
        if c.rel == Relation::Lt {
            return Err(FarkasError::InfeasibleAntecedentNotRelaxed { row: k });
        }
        for part in c.split_equality() {
            let mut a = part.lhs.clone();
            let b = -a.constant_term().clone();
            a.set_constant(Rational::from_integer(0.into()));
            rows.push((a, b));
        }
    }

    let mut vars: BTreeSet<usize> = f.consequent.coeffs().map(|(i, _)| i).collect();
    for (a, _) in &rows {
        vars.extend(a.variables());
    }

    let mut constraints = Vec::with_capacity(vars.len() + 1);
    for i in vars {
        // Σ_r λ_r·A[r][i] + c_i = 0
        let mut e = f.consequent.coeff(i);
        for (r, (a, _)) in rows.iter().enumerate() {
            e.add_term(first_multiplier + r, a.coeff(i));
        }
        constraints.push(LinConstraint::new(e, Relation::Eq));
    }
    // Σ_r λ_r·b_r - k <= 0
    let mut e = f.consequent.constant().negated();
    for (r, (_, b)) in rows.iter().enumerate() {
        e.add_term(first_multiplier + r, b.clone());
    }
    constraints.push(LinConstraint::new(e, Relation::Le));

    Ok(FarkasEncoding {
        first_multiplier,
        multipliers: rows.len(),
        constraints,
    })
}

/// Allocates non-negative multipliers in `lp` and adds the encoding.
pub fn add_implication(
    lp: &mut LpProblem<Rational>,
    f: &FarkasImplication,
    tag: &str,
) -> Result<(), FarkasError> {
    let enc = encode_implication(f, lp.num_vars())?;
    for r in 0..enc.multipliers {
        lp.add_nonneg(format!("lam_{tag}_{r}"));
    }
    for c in enc.constraints {
        // Rows with no unknowns are either trivially true or make the LP
        // infeasible; keep the latter as an explicit contradiction.
        if let Some(truth) = c.constant_truth() {
            if truth {
                continue;
            }
        }
        lp.add_constraint(c);
    }
    Ok(())
}
